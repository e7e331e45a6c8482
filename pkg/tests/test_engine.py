import itertools
import math

import numpy as np
import pytest

from byzsprt.adversary import FlipAttack, NullAttack, Placement
from byzsprt.detection import SumSPRT, Thresholds, VotingRule
from byzsprt.engine import Proposal, Scenario, log_elementary_symmetric, run_trial, simulate
from byzsprt.errors import ConfigError
from byzsprt.montecarlo import default_proposal, run_trials


def test_elementary_symmetric_brute_force():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(4, 5))
    z[1, 2] = -np.inf
    for m in range(0, 5):
        got = log_elementary_symmetric(z, np.full(4, m))
        for row in range(4):
            terms = [np.exp(z[row, list(c)].sum()) for c in itertools.combinations(range(5), m)]
            assert got[row] == pytest.approx(math.log(sum(terms)), rel=1e-12)


def test_scenario_validation(gauss):
    with pytest.raises(ConfigError):
        Scenario(gauss, 0, VotingRule(1))
    with pytest.raises(ConfigError):
        Scenario(gauss, 4, VotingRule(2))
    with pytest.raises(ConfigError):
        Scenario(gauss, 4, VotingRule(3), FlipAttack(2))
    assert Scenario(gauss, 4, SumSPRT((1, 2))).scope() == (1, 2)


def test_simulate_rejects_bad_arguments(gauss):
    sc = Scenario(gauss, 3, VotingRule(2))
    with pytest.raises(ValueError):
        simulate(sc, 2, Thresholds(1.0, 1.0), 5, 0)
    with pytest.raises(ConfigError):
        simulate(sc, 0, Thresholds(1.0, 1.0), 0, 0)


def test_plain_runs_carry_zero_weight(gauss):
    res = simulate(Scenario(gauss, 3, VotingRule(2)), 0, Thresholds(2.0, 2.0), 50, np.random.SeedSequence(1))
    assert (res.log_weight == 0).all()
    assert run_trial(Scenario(gauss, 3, VotingRule(2)), 0, Thresholds(2.0, 2.0), np.random.default_rng(1)).log_weight == 0


def test_honest_streams_shared_across_attacks(gauss):
    # same seed: honest sensors see identical observations whatever the attack
    thr = Thresholds(1e9, 3.0)
    seed = np.random.SeedSequence(17)
    base = simulate(Scenario(gauss, 3, VotingRule(3), NullAttack(), max_horizon=40), 1, thr, 500, seed)
    flip = simulate(Scenario(gauss, 3, VotingRule(3), FlipAttack(1, Placement((0,))), max_horizon=40), 1, thr, 500, seed)
    horizon = np.minimum(base.stopping_time, flip.stopping_time)[:, None]
    both = (base.high_times[:, 1:] <= horizon) | (flip.high_times[:, 1:] <= horizon)
    assert both.any()
    np.testing.assert_array_equal(base.high_times[:, 1:][both], flip.high_times[:, 1:][both])


MILD = 0.3


@pytest.mark.parametrize(
    "scenario_args, proposal",
    [
        (dict(s=3, detector=VotingRule(2)), dict()),
        (dict(s=3, detector=VotingRule(2)), dict(honest_count=1, release_on_latch=True)),
        (dict(s=5, detector=VotingRule(4), attack=FlipAttack(1)), dict(honest_count=2)),
        (dict(s=5, detector=SumSPRT(), attack=FlipAttack(2)), dict(attack=True)),
        (dict(s=5, detector=SumSPRT((0, 1, 2)), attack=FlipAttack(1)), dict(attack=True, scope=(0, 1, 2))),
    ],
    ids=["all", "mixture-release", "mixture-flip", "sum-flip", "sum-subset"],
)
def test_proposal_weights_have_unit_mean(bern, scenario_args, proposal):
    # E_q[w] is the nominal probability of deciding, i.e. 1; mild tilts keep the variance finite
    sc = Scenario(bern, **scenario_args)
    thr = Thresholds(3.0, 3.0)
    for theta in (0, 1):
        h = (1 - 2 * theta) * MILD
        kw = dict(proposal)
        att = (h,) if kw.pop("attack", False) else (0.0,)
        prop = Proposal((h,), att, **kw)
        res = simulate(sc, theta, thr, 40_000, np.random.SeedSequence(theta), prop)
        w = np.exp(res.log_weight[res.decision >= 0])
        assert abs(w.sum() / res.decision.size - 1) <= 4 * w.std() / math.sqrt(w.size)


def test_zero_shift_proposal_is_plain(gauss):
    sc = Scenario(gauss, 4, VotingRule(3), FlipAttack(1))
    thr = Thresholds(3.0, 3.0)
    seed = np.random.SeedSequence(3)
    plain = simulate(sc, 0, thr, 200, seed)
    idle = simulate(sc, 0, thr, 200, seed, Proposal((0.0,), (0.0,)))
    np.testing.assert_array_equal(plain.decision, idle.decision)
    np.testing.assert_array_equal(plain.stopping_time, idle.stopping_time)
    np.testing.assert_allclose(idle.log_weight, 0.0, atol=1e-12)


def test_run_trials_independent_of_workers(gauss):
    sc = Scenario(gauss, 3, VotingRule(2))
    thr = Thresholds(2.0, 2.0)
    one = run_trials(sc, 0, thr, 20_000, seed=5, workers=1)
    two = run_trials(sc, 0, thr, 20_000, seed=5, workers=2)
    for x, y in zip(one, two):
        np.testing.assert_array_equal(x, y)
