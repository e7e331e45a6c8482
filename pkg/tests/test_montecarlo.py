import math

import numpy as np
import pytest

from byzsprt.adversary import FlipAttack, NullAttack, SuppressionAttack
from byzsprt.detection import SumSPRT, Thresholds, VotingRule
from byzsprt.engine import Scenario
from byzsprt.errors import ConfigError
from byzsprt.montecarlo import (
    equilibrium_sandwich_report,
    equilibrium_scenarios,
    estimate_gamma_curve,
    estimate_operating_point,
    importance_sampled_error,
    plain_error,
    unknown_c_report,
)
from byzsprt.oracle import exact_voting_operating_point

from conftest import LN4


def combined_z(a, b):
    return (a.value - b.value) / math.hypot(a.stderr, b.stderr)


def test_trials_must_be_positive(gauss):
    with pytest.raises(ConfigError):
        estimate_operating_point(Scenario(gauss, 1, VotingRule(1)), Thresholds(5.0, 5.0), 0, seed=1)


def test_operating_point_deterministic(gauss):
    sc = Scenario(gauss, 3, VotingRule(2), FlipAttack(1))
    thr = Thresholds(4.0, 4.0)
    a = estimate_operating_point(sc, thr, 3000, seed=9, estimator="importance")
    b = estimate_operating_point(sc, thr, 3000, seed=9, estimator="importance")
    assert a == b
    assert a.delay == max(a.asn0, a.asn1)
    assert a.gamma_hat >= 0


@pytest.mark.slow
def test_importance_matches_plain_single_sensor(gauss):
    sc = Scenario(gauss, 1, VotingRule(1))
    thr = Thresholds(10.0, 10.0)
    plain = plain_error(sc, thr, 10**7, seed=1)
    assert plain.events >= 50
    tilted = importance_sampled_error(sc, thr, 20_000, seed=1)
    assert abs(combined_z(plain, tilted)) <= 3


def test_variance_reduction_at_15(gauss):
    sc = Scenario(gauss, 1, VotingRule(1))
    n = 20_000
    est = importance_sampled_error(sc, Thresholds(15.0, 15.0), n, seed=2)
    plain_se = math.sqrt(est.value * (1 - est.value) / n)  # binomial stderr at the same trial count
    assert est.stderr / plain_se < 0.1


@pytest.mark.parametrize(
    "name, scenario",
    [
        ("voting", dict(s=3, detector=VotingRule(2))),
        ("voting-flip", dict(s=5, detector=VotingRule(4), attack=FlipAttack(1))),
        ("voting-suppression", dict(s=5, detector=VotingRule(4), attack=SuppressionAttack(1, 2.0))),
        ("sum-flip", dict(s=3, detector=SumSPRT(), attack=FlipAttack(1))),
        ("sum-subset", dict(s=4, detector=SumSPRT((0, 1)), attack=NullAttack())),
    ],
)
def test_importance_consistent_with_plain(gauss, name, scenario):
    sc = Scenario(gauss, **scenario)
    thr = Thresholds(4.0, 4.0)
    for error in ("alpha", "beta"):
        plain = plain_error(sc, thr, 200_000, seed=4, error=error)
        if plain.events < 50:
            continue
        tilted = importance_sampled_error(sc, thr, 20_000, seed=4, error=error)
        assert abs(combined_z(plain, tilted)) <= 3, (error, plain, tilted)


@pytest.mark.parametrize("c", [0, 1])
def test_importance_matches_oracle(bern, c):
    s, r, x = 3, 2, 3 * LN4
    thr = Thresholds(x, x)
    attack = FlipAttack(c) if c else NullAttack()
    exact = exact_voting_operating_point(bern, s, r, thr, 60, attack=c)
    sc = Scenario(bern, s, VotingRule(r), attack)
    for error, truth in (("alpha", exact.alpha), ("beta", exact.beta)):
        est = importance_sampled_error(sc, thr, 40_000, seed=c, error=error)
        assert abs(est.value - truth) <= 3 * est.stderr


def test_gamma_single_sensor_tends_to_one(gauss):
    curve = estimate_gamma_curve(Scenario(gauss, 1, VotingRule(1)), [5.0, 20.0, 80.0], 4000, seed=3)
    g = curve.normalized
    assert g[0] < g[1] < g[2] <= 1.05
    assert g[2] > 0.85


def test_gamma_curve_rejects_bad_grid(gauss):
    sc = Scenario(gauss, 1, VotingRule(1))
    with pytest.raises(ConfigError):
        estimate_gamma_curve(sc, [10.0, 5.0], 100, seed=1)
    with pytest.raises(ConfigError):
        estimate_gamma_curve(sc, [-1.0, 5.0], 100, seed=1)


@pytest.mark.filterwarnings("ignore:importance-sampled")
def test_gamma_curve_records_failures(gauss):
    sc = Scenario(gauss, 3, VotingRule(2), max_horizon=1)
    curve = estimate_gamma_curve(sc, [0.5, 100.0], 200, seed=1)
    assert curve.points[0].error is None
    assert curve.points[1].error is not None and math.isnan(curve.points[1].gamma_hat)


def test_equilibrium_cells(gauss):
    cells = equilibrium_scenarios(gauss, 10, 2)
    assert cells["voting/flip"].detector == VotingRule(8)
    assert cells["sum-sprt-all/flip"].detector == SumSPRT()
    with pytest.raises(ConfigError, match="s > 2c"):
        equilibrium_scenarios(gauss, 4, 2)


def test_sandwich_without_attack(gauss):
    # both attack cells reduce to the baseline; sum-SPRT over all sensors also heads to s I
    (chk,) = equilibrium_sandwich_report(6, 0, gauss, [20.0], 2000, seed=1)
    assert chk.gamma["voting/flip"] == chk.gamma["voting/suppression"]
    assert chk.attack_side_ok
    assert chk.gamma["sum-sprt-all/flip"] / 2 == pytest.approx(6, rel=0.25)


def test_sandwich_small(gauss):
    (chk,) = equilibrium_sandwich_report(5, 1, gauss, [20.0], 3000, seed=2)
    assert chk.ok


def test_unknown_c_preconditions(gauss):
    with pytest.raises(ConfigError):
        unknown_c_report(6, 3, [0], gauss, [10.0], 100, seed=1)
    with pytest.raises(ConfigError):
        unknown_c_report(7, 2, [3], gauss, [10.0], 100, seed=1)


def test_unknown_c_equal_bound_is_equilibrium(gauss):
    rows = unknown_c_report(5, 1, [1], gauss, [20.0], 3000, seed=3)
    eq = estimate_operating_point(Scenario(gauss, 5, VotingRule(4), FlipAttack(1)), Thresholds(20.0, 20.0), 3000, 3, "importance")
    assert rows[0].gamma_hat == eq.gamma_hat
    assert rows[0].bound == 3
