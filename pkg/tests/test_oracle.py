import math

import numpy as np
import pytest

from byzsprt.adversary import FlipAttack
from byzsprt.detection import Thresholds
from byzsprt.errors import CapacityError, ConfigError, EstimationError
from byzsprt.models import FiniteAlphabet, GaussianPair
from byzsprt.oracle import (
    enumerate_crossing_law,
    enumerate_joint_paths,
    enumerate_voting,
    exact_voting_operating_point,
    single_sensor_crossing_distribution,
    voting_decision_law,
)

from conftest import LN4

TRI = FiniteAlphabet((-1.0, 0.0, 2.0), (0.5, 0.3, 0.2), (0.1, 0.3, 0.6))


def test_first_step_crosses_exactly(bern):
    law = single_sensor_crossing_distribution(bern, Thresholds(LN4, LN4), 1, 10)
    assert law.high_marginal()[0] == pytest.approx(0.8, abs=1e-15)
    assert law.low_marginal()[0] == pytest.approx(0.2, abs=1e-15)


def test_unreachable_barriers(bern):
    law = single_sensor_crossing_distribution(bern, Thresholds(100.0, 100.0), 0, 20)
    assert law.not_crossed == pytest.approx(1.0, abs=1e-15)
    assert law.joint.sum() == pytest.approx(1.0, abs=1e-12)


def test_symmetric_model_swaps_crossings(bern):
    thr = Thresholds(3 * LN4, 3 * LN4)
    l0 = single_sensor_crossing_distribution(bern, thr, 0, 40)
    l1 = single_sensor_crossing_distribution(bern, thr, 1, 40)
    np.testing.assert_allclose(l0.joint, l1.joint.T, atol=1e-14)


@pytest.mark.parametrize("model, thr", [
    ("bern", Thresholds(3 * LN4, 3 * LN4)),
    ("bern", Thresholds(2.0, 4.5)),
    ("tri", Thresholds(2.5, 3.0)),
])
@pytest.mark.parametrize("theta", [0, 1])
def test_dp_matches_path_enumeration(bern, model, thr, theta):
    m = bern if model == "bern" else TRI
    horizon = 12 if model == "bern" else 8
    dp = single_sensor_crossing_distribution(m, thr, theta, horizon)
    brute = enumerate_crossing_law(m, thr, theta, horizon)
    np.testing.assert_allclose(dp.joint, brute.joint, atol=1e-10, rtol=0)


@pytest.mark.parametrize("c", [0, 1])
def test_voting_law_matches_enumerations(bern, c):
    s, r, h = 3, 2, 6
    thr = Thresholds(3 * LN4, 3 * LN4)
    laws = {t: single_sensor_crossing_distribution(bern, thr, t, h) for t in (0, 1)}
    for theta in (0, 1):
        law = voting_decision_law([laws[1 - theta]] * c + [laws[theta]] * (s - c), r)
        grouped = enumerate_voting([laws[1 - theta]] * c + [laws[theta]] * (s - c), r)
        raw = enumerate_joint_paths(bern, s, r, thr, theta, h, flipped=c)
        mine = (law.accept1.sum(), law.accept0.sum(), law.mean_time())
        np.testing.assert_allclose(mine, grouped, atol=1e-10, rtol=0)
        np.testing.assert_allclose(mine, raw, atol=1e-10, rtol=0)


def test_grouped_enumeration_at_horizon_12(bern):
    thr = Thresholds(3 * LN4, 3 * LN4)
    ex = exact_voting_operating_point(bern, 3, 2, thr, 12)
    laws = [enumerate_crossing_law(bern, thr, 0, 12)] * 3
    alpha, _, et = enumerate_voting(laws, 2)
    assert ex.alpha == pytest.approx(alpha, abs=1e-10)
    assert ex.asn0 == pytest.approx(et, abs=1e-10)


def test_single_sensor_reduction(bern):
    thr = Thresholds(2 * LN4, 3 * LN4)
    law = single_sensor_crossing_distribution(bern, thr, 0, 150)
    t, u = np.indices(law.joint.shape)
    alpha = law.joint[u < t].sum()
    ex = exact_voting_operating_point(bern, 1, 1, thr, 150)
    assert ex.alpha == pytest.approx(alpha, abs=1e-14)
    # classical SPRT on a lattice with exact barrier hits: alpha = (1 - e^{-a}) / (e^{b} - e^{-a})
    a, b = 2 * LN4, 3 * LN4
    assert ex.alpha == pytest.approx((1 - math.exp(-a)) / (math.exp(b) - math.exp(-a)), abs=1e-12)


def test_flipped_sensor_uses_opposite_law(bern):
    thr = Thresholds(3 * LN4, 3 * LN4)
    laws = {t: single_sensor_crossing_distribution(bern, thr, t, 60) for t in (0, 1)}
    ex = exact_voting_operating_point(bern, 3, 2, thr, 60, attack=FlipAttack(1))
    direct = voting_decision_law([laws[1], laws[0], laws[0]], 2)
    assert ex.alpha == pytest.approx(direct.accept1.sum(), abs=1e-15)
    assert ex.alpha > exact_voting_operating_point(bern, 3, 2, thr, 60).alpha


@pytest.mark.parametrize("c", [0, 1])
def test_probability_conservation(bern, c):
    ex = exact_voting_operating_point(bern, 3, 2, Thresholds(3 * LN4, 3 * LN4), 60, attack=c)
    for law in (ex.law0, ex.law1):
        assert law.accept0.sum() + law.accept1.sum() + law.residual == pytest.approx(1.0, abs=1e-10)
    assert ex.residual0 < 1e-8


def test_alpha_decreases_in_b(bern):
    alphas = [exact_voting_operating_point(bern, 3, 2, Thresholds(3 * LN4, k * LN4), 80).alpha for k in (2, 3, 4, 5)]
    assert all(x > y for x, y in zip(alphas, alphas[1:]))


def test_symmetric_errors(bern):
    ex = exact_voting_operating_point(bern, 3, 2, Thresholds(3 * LN4, 3 * LN4), 60)
    assert ex.alpha == pytest.approx(ex.beta, rel=1e-12)
    assert ex.asn0 == pytest.approx(ex.asn1, rel=1e-12)


def test_capacity_cap(bern):
    with pytest.raises(CapacityError, match="shorter horizon"):
        single_sensor_crossing_distribution(TRI, Thresholds(30.0, 30.0), 0, 60, state_cap=50)


def test_residual_bound(bern):
    with pytest.raises(EstimationError):
        exact_voting_operating_point(bern, 3, 2, Thresholds(3 * LN4, 3 * LN4), 5, max_residual=1e-6)


def test_rejects_continuous_and_bad_input(bern):
    with pytest.raises(ConfigError):
        single_sensor_crossing_distribution(GaussianPair(), Thresholds(1.0, 1.0), 0, 5)
    with pytest.raises(ConfigError):
        single_sensor_crossing_distribution(bern, Thresholds(1.0, 1.0), 0, 0)
    with pytest.raises(ConfigError):
        exact_voting_operating_point(bern, 3, 2, Thresholds(1.0, 1.0), 5, attack="suppression")
