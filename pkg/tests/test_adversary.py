import math
from dataclasses import dataclass, field

import numpy as np
import pytest
from scipy import stats

from byzsprt.adversary import (
    AttackView,
    FlipAttack,
    NullAttack,
    Placement,
    SuppressionAttack,
    attack_from_config,
    check_support,
    flip_attack_bias,
    null_attack,
    suppression_attack_bias,
)
from byzsprt.detection import Thresholds, VotingRule
from byzsprt.engine import Scenario, simulate
from byzsprt.errors import AdmissibilityError, ConfigError
from byzsprt.models import GaussianPair
from byzsprt.montecarlo import importance_sampled_error

KS_LEVEL = 1e-3


def batch_view(model, theta, s, idx, n, rng):
    obs = model.sample(theta, rng, (n, s))
    comp = np.zeros((n, s), dtype=bool)
    comp[:, list(idx)] = True
    view = AttackView(1, theta, np.where(comp, obs, np.nan), comp, np.zeros((n, s)), model,
                      lambda t: model.sample_tilted(t, rng, (n, s)))
    return obs, comp, view


def test_flip_delivers_opposite_mean(gauss, rng):
    n = 10**5
    obs, comp, view = batch_view(gauss, 0, 3, [0], n, rng)
    delivered = obs + FlipAttack(1).bias(view)
    x = delivered[:, 0]
    assert abs(x.mean() - 1.0) <= 3 * x.std() / math.sqrt(n)
    np.testing.assert_array_equal(delivered[:, 1:], obs[:, 1:])


def test_flip_ks_against_nu(gauss, rng):
    n = 10**5
    obs, comp, view = batch_view(gauss, 1, 4, [1, 3], n, rng)
    delivered = obs + FlipAttack(2).bias(view)
    for i in (1, 3):
        assert stats.kstest(delivered[:, i], stats.norm(-1, 1).cdf).pvalue > KS_LEVEL
    for i in (0, 2):
        assert stats.kstest(delivered[:, i], stats.norm(1, 1).cdf).pvalue > KS_LEVEL


def test_flip_worlds_are_indistinguishable(gauss, rng):
    # theta = 0 with sensor 0 compromised vs theta = 1 with sensor 2 compromised
    n = 50_000
    o0, _, v0 = batch_view(gauss, 0, 3, [0], n, rng)
    o1, _, v1 = batch_view(gauss, 1, 3, [2], n, rng)
    d0, d1 = o0 + FlipAttack(1).bias(v0), o1 + FlipAttack(1).bias(v1)
    for i in (0, 2):
        assert stats.ks_2samp(d0[:, i], d1[:, i]).pvalue > KS_LEVEL
    assert stats.ks_2samp(d0[:, 1], d1[:, 1]).pvalue < KS_LEVEL


def test_single_trial_flip_bias(gauss, rng):
    x = np.array([0.3, -0.2, 1.1])
    bias = flip_attack_bias(x, 0, 1, gauss, [1], rng)
    assert bias[0] == 0 and bias[2] == 0 and bias[1] != 0
    assert np.array_equal(flip_attack_bias(x, 0, 1, gauss, [], rng), np.zeros(3))


def test_null_attack(gauss):
    assert np.array_equal(null_attack(np.ones(4), 0, 3), np.zeros(4))
    assert NullAttack().wrong_votes() == 0
    with pytest.raises(ConfigError):
        NullAttack(1).validate(5)


def test_suppression_point(gauss):
    x = np.array([0.2, 0.4, -0.3])
    bias = suppression_attack_bias(x, 1, 1, 10.0, gauss, [2])
    assert bias[0] == bias[1] == 0
    assert gauss.llr(x + bias)[2] == pytest.approx(-20.0)
    zero = suppression_attack_bias(x, 1, 1, 0.0, gauss, [2])
    assert gauss.llr(x + zero)[2] == pytest.approx(0.0)


@pytest.mark.parametrize("a", [20.0, 45.0])
def test_suppression_latches_fast(gauss, a):
    sc = Scenario(gauss, 6, VotingRule(4), SuppressionAttack(2, 10.0, Placement((0, 3))), max_horizon=10_000)
    res = simulate(sc, 1, Thresholds(a, a), 200, np.random.SeedSequence(6))
    assert (res.low_times[:, [0, 3]] <= math.ceil(a / 20)).all()


def test_voting_survives_suppression(gauss):
    s, c, r, a = 10, 2, 8, 20.0
    sc = Scenario(gauss, s, VotingRule(r), SuppressionAttack(c, 10.0))
    res = simulate(sc, 1, Thresholds(a, a), 2000, np.random.SeedSequence(8))
    assert (res.decision == 1).all()
    beta = importance_sampled_error(sc, Thresholds(a, a), 4000, seed=8, error="beta")
    assert beta.log_value / a <= -(r - c) * (1 - 0.15)


def test_suppression_finite_alphabet(bern):
    assert bern.adversarial_point(0, 10.0) == 0.0
    assert bern.adversarial_point(1, 10.0) == 1.0


@dataclass(frozen=True)
class LeakyAttack:
    c: int = 1
    placement: Placement = field(default_factory=Placement)

    def validate(self, s):
        pass

    def wrong_votes(self):
        return self.c

    def bias(self, view):
        return np.ones_like(view.prev_bias)


@dataclass(frozen=True)
class SpyAttack:
    c: int = 2
    placement: Placement = field(default_factory=Placement)
    seen: list = field(default_factory=list)

    def validate(self, s):
        pass

    def wrong_votes(self):
        return 0

    def bias(self, view):
        self.seen.append((view.observed.copy(), view.compromised.copy()))
        return np.zeros_like(view.prev_bias)


def test_support_violation_aborts(gauss):
    sc = Scenario(gauss, 3, VotingRule(2), LeakyAttack())
    with pytest.raises(AdmissibilityError):
        simulate(sc, 0, Thresholds(5.0, 5.0), 4, np.random.SeedSequence(0))
    with pytest.raises(AdmissibilityError):
        check_support(np.array([0.0, 1.0]), np.array([True, False]))


def test_attacker_sees_only_compromised(gauss):
    spy = SpyAttack()
    simulate(Scenario(gauss, 5, VotingRule(3), spy), 1, Thresholds(3.0, 3.0), 30, np.random.SeedSequence(2))
    for observed, comp in spy.seen:
        assert np.isnan(observed[~comp]).all()
        assert np.isfinite(observed[comp]).all()
        assert (comp.sum(axis=1) == 2).all()


def test_placement():
    rng = np.random.default_rng(0)
    m = Placement().masks(6, 2, 1000, rng)
    assert (m.sum(axis=1) == 2).all()
    assert (m.mean(axis=0) > 0.25).all()  # every sensor gets compromised sometimes
    f = Placement((1, 4)).masks(6, 2, 5, rng)
    assert f[:, [1, 4]].all() and f.sum() == 10
    with pytest.raises(ConfigError):
        Placement((1, 1)).validate(6, 2)
    with pytest.raises(ConfigError):
        Placement((0, 6)).validate(6, 2)


@pytest.mark.parametrize("s, c", [(4, 2), (3, 2), (2, 1)])
def test_flip_requires_honest_majority(s, c):
    with pytest.raises(ConfigError, match="s > 2c"):
        FlipAttack(c).validate(s)


def test_attack_from_config():
    a = attack_from_config({"type": "flip", "c": 2, "placement": [0, 1]}, 5)
    assert a == FlipAttack(2, Placement((0, 1)))
    s = attack_from_config({"type": "suppression", "c": 1, "magnitude": 3.0}, 5)
    assert s.magnitude == 3.0
    assert attack_from_config({}, 5) == NullAttack()
    for bad in ({"type": "flip", "c": 1, "strength": 1}, {"type": "jam"}, {"type": "flip", "c": 1, "magnitude": 2.0},
                {"type": "flip", "c": 1, "placement": "first"}):
        with pytest.raises(ConfigError):
            attack_from_config(bad, 5)
