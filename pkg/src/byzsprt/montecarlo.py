"""Monte Carlo and importance-sampled estimation of operating points and gamma.

Randomness: every (purpose, theta, thresholds, chunk) gets its own Philox
stream derived from the master seed, so results do not depend on how chunks
are scheduled across workers.  The thresholds enter the key by value, hence a
point computed alone equals the same point inside a sweep.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .adversary import FlipAttack, NullAttack, SuppressionAttack
from .detection import SumSPRT, Thresholds, VotingRule
from .engine import Proposal, Scenario, simulate
from .errors import ConfigError, EstimationError
from .models import HypothesisModel, info_constants

CHUNK_SIZE = 8192
MIN_ESS = 30.0

_PLAIN, _IMPORTANCE = 0, 1


def _float_key(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


def point_seed(seed: int, purpose: int, theta: int, thr: Thresholds) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(purpose, theta, _float_key(thr.a), _float_key(thr.b)))


def _resolve_workers(workers: int) -> int:
    if workers == 0:
        return os.cpu_count() or 1
    return max(1, workers)


def _chunk(args):
    scenario, theta, thr, n, ss, proposal = args
    res = simulate(scenario, theta, thr, n, ss, proposal)
    return res.decision, res.stopping_time, res.log_weight


def run_trials(scenario, theta, thr, trials, seed, purpose=_PLAIN, proposal=None, workers=1):
    """Run ``trials`` trials in fixed-size chunks; returns (decision, T, log_weight)."""
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    base = point_seed(seed, purpose, theta, thr)
    jobs = []
    for i, start in enumerate(range(0, trials, CHUNK_SIZE)):
        ss = np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (i,))
        jobs.append((scenario, theta, thr, min(CHUNK_SIZE, trials - start), ss, proposal))
    workers = _resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        parts = [_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk, jobs))
    return tuple(np.concatenate(p) for p in zip(*parts))


@dataclass(frozen=True)
class ErrorEstimate:
    """An error probability kept in log space; tiny values never underflow."""

    log_value: float
    rel_stderr: float
    events: int
    ess: float
    trials: int
    estimator: str

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def stderr(self) -> float:
        return self.value * self.rel_stderr

    @property
    def log_stderr(self) -> float:
        """Delta-method stderr of log(value)."""
        return self.rel_stderr

    @property
    def low_ess(self) -> bool:
        return self.ess < MIN_ESS


def _plain_error(decision, wrong: int) -> ErrorEstimate:
    decided = decision >= 0
    n = int(decided.sum())
    k = int(np.count_nonzero(decision == wrong))
    if n == 0:
        raise EstimationError("every trial was truncated")
    p = k / n
    log_p = math.log(p) if k else -math.inf
    rel = math.sqrt((1 - p) / (n * p)) if k else math.inf
    return ErrorEstimate(log_p, rel, k, float(k), n, "plain")


def _weighted_error(decision, log_weight, wrong: int) -> ErrorEstimate:
    decided = decision >= 0
    n = int(decided.sum())
    if n == 0:
        raise EstimationError("every trial was truncated")
    lw = np.where(decision == wrong, log_weight, -np.inf)[decided]
    k = int(np.isfinite(lw).sum())
    if k == 0:
        return ErrorEstimate(-math.inf, math.inf, 0, 0.0, n, "importance")
    log_m1 = logsumexp(lw) - math.log(n)
    log_m2 = logsumexp(2 * lw) - math.log(n)
    var_ratio = max(math.exp(log_m2 - 2 * log_m1) - 1.0, 0.0)  # Var(w) / E[w]^2
    ess = math.exp(2 * logsumexp(lw) - logsumexp(2 * lw))
    return ErrorEstimate(float(log_m1), math.sqrt(var_ratio / n), k, ess, n, "importance")


def _sum_tilt(model: HypothesisModel, theta: int, n_honest: int, n_flip: int, drift: float) -> float:
    """Root h of the increment cumulant of the summed LLR, on the error side (0 if none)."""
    psi = model.log_tilted_integral
    direction = 1.0 if theta == 0 else -1.0

    def K(u):
        h = direction * u
        return (
            n_honest * (psi(theta + h) - psi(theta))
            + n_flip * (psi(1 - theta + h) - psi(1 - theta))
            + h * drift
        )

    if K(1e-6) >= 0:
        return 0.0
    hi = 1.0
    while K(hi) <= 0:
        hi *= 2
        if hi > 1e6:
            return 0.0
    return direction * optimize.brentq(K, 1e-6, hi, xtol=1e-12)


def default_proposal(scenario: Scenario, theta: int) -> Proposal:
    """Change of measure aimed at the error event under state ``theta``.

    Voting: a random subset of the honest sensors, just large enough to
    supply the missing wrong votes, is driven to the opposite law until it
    latches.  Sum-SPRT: every in-scope honest sensor and every flipped draw is
    tilted by the root of the summed-increment cumulant.
    """
    det, attack, model = scenario.detector, scenario.attack, scenario.model
    shift = float((1 - theta) - theta)
    if isinstance(det, VotingRule):
        m = max(1, det.r - attack.wrong_votes())
        return Proposal((shift,), honest_count=m, release_on_latch=True)
    scope = det.sensors(scenario.s)
    honest, att = [], []
    for j in range(min(attack.c, len(scope)) + 1):
        n_flip = j if isinstance(attack, FlipAttack) else 0
        drift = 0.0
        if isinstance(attack, SuppressionAttack):
            drift = j * float(model.llr(model.adversarial_point(1 - theta, attack.magnitude)))
        h = _sum_tilt(model, theta, len(scope) - j, n_flip, drift)
        honest.append(h)
        att.append(h if n_flip else 0.0)
    return Proposal(tuple(honest), tuple(att), scope=scope)


def importance_sampled_error(
    scenario: Scenario,
    thr: Thresholds,
    trials: int,
    seed: int,
    error: str = "alpha",
    proposal: Proposal | None = None,
    workers: int = 1,
) -> ErrorEstimate:
    """Estimate alpha (error under theta=0) or beta (theta=1) by importance sampling."""
    if error not in ("alpha", "beta"):
        raise ValueError("error must be 'alpha' or 'beta'")
    theta = 0 if error == "alpha" else 1
    proposal = proposal or default_proposal(scenario, theta)
    dec, _, lw = run_trials(scenario, theta, thr, trials, seed, _IMPORTANCE, proposal, workers)
    est = _weighted_error(dec, lw, 1 - theta)
    if est.low_ess:
        warnings.warn(f"importance-sampled {error} has effective sample size {est.ess:.1f} < {MIN_ESS}")
    return est


def plain_error_from_decisions(decision: np.ndarray, wrong: int) -> ErrorEstimate:
    """Plain estimate of P[decision == wrong] among non-truncated trials."""
    return _plain_error(decision, wrong)


def plain_error(scenario, thr, trials, seed, error="alpha", workers=1) -> ErrorEstimate:
    theta = 0 if error == "alpha" else 1
    dec, _, _ = run_trials(scenario, theta, thr, trials, seed, _PLAIN, None, workers)
    return _plain_error(dec, 1 - theta)


@dataclass(frozen=True)
class OperatingPoint:
    thresholds: Thresholds
    trials: int
    estimator: str
    alpha: ErrorEstimate
    beta: ErrorEstimate
    asn0: float
    asn0_stderr: float
    asn1: float
    asn1_stderr: float
    trunc_rate: float

    @property
    def alpha_hat(self) -> float:
        return self.alpha.value

    @property
    def beta_hat(self) -> float:
        return self.beta.value

    @property
    def delay(self) -> float:
        """Worst-case average sample number over the two states."""
        return max(self.asn0, self.asn1)

    @property
    def delay_stderr(self) -> float:
        return self.asn0_stderr if self.asn0 >= self.asn1 else self.asn1_stderr

    @property
    def gamma_hat(self) -> float:
        if not math.isfinite(self.alpha.log_value):
            return math.nan
        return -self.alpha.log_value / self.delay

    @property
    def gamma_stderr(self) -> float:
        g = self.gamma_hat
        return math.hypot(self.alpha.log_stderr / self.delay, g * self.delay_stderr / self.delay)


def _asn(stop, decision):
    t = stop[decision >= 0].astype(float)
    if t.size == 0:
        raise EstimationError("every trial was truncated")
    se = t.std(ddof=1) / math.sqrt(t.size) if t.size > 1 else math.inf
    return float(t.mean()), float(se)


def estimate_operating_point(
    scenario: Scenario,
    thr: Thresholds,
    trials: int,
    seed: int,
    estimator: str = "plain",
    workers: int = 1,
) -> OperatingPoint:
    """alpha, beta, ASN under both states at one threshold pair.

    ASNs always come from plain Monte Carlo; with ``estimator="importance"``
    the error probabilities come from separate importance-sampled runs.
    """
    if estimator not in ("plain", "importance"):
        raise ValueError("estimator must be 'plain' or 'importance'")
    dec0, t0, _ = run_trials(scenario, 0, thr, trials, seed, _PLAIN, None, workers)
    dec1, t1, _ = run_trials(scenario, 1, thr, trials, seed, _PLAIN, None, workers)
    trunc = (np.count_nonzero(dec0 < 0) + np.count_nonzero(dec1 < 0)) / (2 * trials)
    asn0, se0 = _asn(t0, dec0)
    asn1, se1 = _asn(t1, dec1)
    if estimator == "plain":
        alpha, beta = _plain_error(dec0, 1), _plain_error(dec1, 0)
    else:
        alpha = importance_sampled_error(scenario, thr, trials, seed, "alpha", workers=workers)
        beta = importance_sampled_error(scenario, thr, trials, seed, "beta", workers=workers)
    return OperatingPoint(thr, trials, estimator, alpha, beta, asn0, se0, asn1, se1, trunc)


@dataclass(frozen=True)
class GammaPoint:
    threshold: float
    point: OperatingPoint | None
    gamma_hat: float
    gamma_stderr: float
    normalized: float
    error: str | None = None


@dataclass
class GammaCurve:
    info_I: float
    points: list[GammaPoint] = field(default_factory=list)

    @property
    def thresholds(self) -> list[float]:
        return [p.threshold for p in self.points]

    @property
    def normalized(self) -> list[float]:
        return [p.normalized for p in self.points]


def estimate_gamma_curve(
    scenario: Scenario,
    thresholds,
    trials_per_point: int,
    seed: int,
    estimator: str = "importance",
    workers: int = 1,
) -> GammaCurve:
    """gamma_hat = log(1/alpha_hat) / max(ASN0, ASN1) along a sweep with a = b."""
    thresholds = [float(x) for x in thresholds]
    if any(x <= 0 for x in thresholds) or thresholds != sorted(thresholds):
        raise ConfigError("thresholds must be positive and ascending")
    I = info_constants(scenario.model).I
    curve = GammaCurve(I)
    for x in thresholds:
        try:
            op = estimate_operating_point(scenario, Thresholds(x, x), trials_per_point, seed, estimator, workers)
        except EstimationError as exc:
            curve.points.append(GammaPoint(x, None, math.nan, math.nan, math.nan, str(exc)))
            continue
        g = op.gamma_hat
        curve.points.append(GammaPoint(x, op, g, op.gamma_stderr, g / I))
    return curve


def equilibrium_scenarios(model, s: int, c: int, magnitude: float = 10.0, max_horizon: int | None = None):
    """The three cells compared around the equilibrium pair, keyed by name."""
    if not s > 2 * c:
        raise ConfigError(f"equilibrium runs require s > 2c, got s={s}, c={c}")
    extra = {} if max_horizon is None else {"max_horizon": max_horizon}
    flip = FlipAttack(c) if c else NullAttack()
    supp = SuppressionAttack(c, magnitude) if c else NullAttack()
    return {
        "voting/flip": Scenario(model, s, VotingRule(s - c), flip, **extra),
        "voting/suppression": Scenario(model, s, VotingRule(s - c), supp, **extra),
        "sum-sprt-all/flip": Scenario(model, s, SumSPRT(), flip, **extra),
    }


@dataclass(frozen=True)
class SandwichCheck:
    threshold: float
    gamma: dict
    stderr: dict
    attack_side_ok: bool  # gamma(f*, suppression) >= gamma(f*, g*) - 3 sigma
    detector_side_ok: bool  # gamma(sum-SPRT, g*) <= gamma(f*, g*) + 3 sigma

    @property
    def ok(self) -> bool:
        return self.attack_side_ok and self.detector_side_ok


def equilibrium_sandwich_report(
    s: int,
    c: int,
    model: HypothesisModel,
    thresholds,
    trials: int,
    seed: int,
    magnitude: float = 10.0,
    workers: int = 1,
    max_horizon: int | None = None,
) -> list[SandwichCheck]:
    """Compare the equilibrium pair against one deviation by each player.

    The sigma in each check combines the two cells' standard errors.
    """
    cells = equilibrium_scenarios(model, s, c, magnitude, max_horizon)
    out = []
    for x in np.atleast_1d(thresholds):
        thr = Thresholds(float(x), float(x))
        ops = {k: estimate_operating_point(sc, thr, trials, seed, "importance", workers) for k, sc in cells.items()}
        g = {k: op.gamma_hat for k, op in ops.items()}
        se = {k: op.gamma_stderr for k, op in ops.items()}
        eq = "voting/flip"
        sig_a = math.hypot(se[eq], se["voting/suppression"])
        sig_d = math.hypot(se[eq], se["sum-sprt-all/flip"])
        out.append(
            SandwichCheck(
                float(x),
                g,
                se,
                g["voting/suppression"] >= g[eq] - 3 * sig_a,
                g["sum-sprt-all/flip"] <= g[eq] + 3 * sig_d,
            )
        )
    return out


@dataclass(frozen=True)
class UnknownCRow:
    threshold: float
    c: int
    gamma_hat: float
    gamma_stderr: float
    normalized: float
    bound: float  # s - c_bar - c, in units of I


def unknown_c_report(
    s: int,
    c_bar: int,
    c_values,
    model: HypothesisModel,
    thresholds,
    trials: int,
    seed: int,
    workers: int = 1,
    max_horizon: int | None = None,
) -> list[UnknownCRow]:
    """Voting with r = s - c_bar against flip attacks on c <= c_bar sensors."""
    if not (2 * c_bar < s):
        raise ConfigError(f"unknown-c runs require c_bar < s/2, got s={s}, c_bar={c_bar}")
    I = info_constants(model).I
    extra = {} if max_horizon is None else {"max_horizon": max_horizon}
    rows = []
    for c in c_values:
        if not 0 <= c <= c_bar:
            raise ConfigError(f"unknown-c runs require 0 <= c <= c_bar, got c={c}, c_bar={c_bar}")
        scenario = Scenario(model, s, VotingRule(s - c_bar), FlipAttack(c) if c else NullAttack(), **extra)
        for x in np.atleast_1d(thresholds):
            op = estimate_operating_point(scenario, Thresholds(float(x), float(x)), trials, seed, "importance", workers)
            g = op.gamma_hat
            rows.append(UnknownCRow(float(x), int(c), g, op.gamma_stderr, g / I, float(s - c_bar - c)))
    return rows
