"""Exact crossing-time laws and voting operating points for finite alphabets.

A single sensor's cumulative LLR is a walk on a finite set of reachable values;
forward dynamic programming over that set gives the exact joint law of its
latched first-crossing times ``(tau_low, tau_high)`` up to a horizon.  Sensors
are independent, so the law of the voting decision follows by convolving
per-sensor crossing-time classes into count vectors, one time step at a time.

The ``enumerate_*`` functions are brute-force cross-checks that share no code
with the dynamic programme.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .detection import Thresholds, check_vote_count
from .errors import CapacityError, ConfigError, EstimationError
from .models import FiniteAlphabet

DEFAULT_STATE_CAP = 2_000_000
_KEY_DIGITS = 9


@dataclass(frozen=True)
class CrossingLaw:
    """``joint[t-1, u-1] = P[tau_low = t, tau_high = u]``; index ``horizon`` means later than the horizon."""

    joint: np.ndarray
    horizon: int

    @property
    def not_crossed(self) -> float:
        return float(self.joint[self.horizon, self.horizon])

    def low_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def high_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def _steps(model: FiniteAlphabet, law: int):
    return list(zip(model.llr_values.tolist(), model.masses(float(law)).tolist()))


def _advance(dist: dict, steps):
    out: dict = {}
    for S, m in dist.values():
        for L, p in steps:
            S2 = S + L
            key = round(S2, _KEY_DIGITS)
            if key in out:
                out[key][1] += m * p
            else:
                out[key] = [S2, m * p]
    return out


def single_sensor_crossing_distribution(
    model: FiniteAlphabet, thr: Thresholds, theta: int, horizon: int, state_cap: int = DEFAULT_STATE_CAP
) -> CrossingLaw:
    """Exact joint law of one sensor's latched crossing times under law ``theta``."""
    if not isinstance(model, FiniteAlphabet):
        raise ConfigError("the exact oracle needs a finite-alphabet model")
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    steps = _steps(model, theta)
    H = horizon
    P = np.zeros((H + 1, H + 1))
    free = {0.0: [0.0, 1.0]}
    low_only: dict[int, dict] = {}
    high_only: dict[int, dict] = {}
    for k in range(1, H + 1):
        nxt_free: dict = {}
        lo_new: dict = {}
        hi_new: dict = {}
        for key, (S, m) in _advance(free, steps).items():
            if thr.low_hit(S):
                lo_new[key] = [S, m]
            elif thr.high_hit(S):
                hi_new[key] = [S, m]
            else:
                nxt_free[key] = [S, m]
        for t, dist in list(low_only.items()):
            keep = {}
            for key, (S, m) in _advance(dist, steps).items():
                if thr.high_hit(S):
                    P[t - 1, k - 1] += m
                else:
                    keep[key] = [S, m]
            low_only[t] = keep
        for u, dist in list(high_only.items()):
            keep = {}
            for key, (S, m) in _advance(dist, steps).items():
                if thr.low_hit(S):
                    P[k - 1, u - 1] += m
                else:
                    keep[key] = [S, m]
            high_only[u] = keep
        if lo_new:
            low_only[k] = lo_new
        if hi_new:
            high_only[k] = hi_new
        free = nxt_free
        size = len(free) + sum(map(len, low_only.values())) + sum(map(len, high_only.values()))
        if size > state_cap:
            raise CapacityError(
                f"lattice holds {size} states at step {k} (cap {state_cap}); use a shorter horizon or coarser alphabet"
            )
    for t, dist in low_only.items():
        P[t - 1, H] += sum(m for _, m in dist.values())
    for u, dist in high_only.items():
        P[H, u - 1] += sum(m for _, m in dist.values())
    P[H, H] += sum(m for _, m in free.values())
    return CrossingLaw(P, H)


@dataclass(frozen=True)
class DecisionLaw:
    """Per-step probabilities of stopping with each decision (index k-1 for time k)."""

    accept0: np.ndarray
    accept1: np.ndarray
    residual: float  # P[no decision by the horizon]

    @property
    def stop(self) -> np.ndarray:
        return self.accept0 + self.accept1

    def mean_time(self) -> float:
        """E[T; T <= horizon]."""
        return float(np.dot(np.arange(1, self.stop.size + 1), self.stop))


def _bucket_probs(P: np.ndarray, k: int) -> np.ndarray:
    """3x3 probabilities of (tau_low, tau_high) in {<k, =k, >k} at time k."""
    rows = np.stack([P[: k - 1].sum(axis=0), P[k - 1], P[k:].sum(axis=0)])
    return np.stack([rows[:, : k - 1].sum(axis=1), rows[:, k - 1], rows[:, k:].sum(axis=1)], axis=1)


_INC = ((1, 1), (0, 1), (0, 0))  # (counted at k-1, counted at k) per bucket


def voting_decision_law(laws: list[CrossingLaw], r: int) -> DecisionLaw:
    """Exact decision law of the r-of-s voting rule from per-sensor crossing laws."""
    s = len(laws)
    check_vote_count(s, r)
    H = laws[0].horizon
    n = s + 1
    lp, lc, hp, hc = np.indices((n, n, n, n))
    cont = (lp < r) & (hp < r)
    w1 = (cont & (hc >= r) & (lc < r)) + 0.5 * (cont & (hc >= r) & (lc >= r))
    w0 = (cont & (lc >= r) & (hc < r)) + 0.5 * (cont & (hc >= r) & (lc >= r))
    acc0, acc1 = np.zeros(H), np.zeros(H)
    residual = 0.0
    for k in range(1, H + 1):
        dist = np.zeros((n, n, n, n))
        dist[0, 0, 0, 0] = 1.0
        for law in laws:
            B = _bucket_probs(law.joint, k)
            new = np.zeros_like(dist)
            for bl in range(3):
                for bh in range(3):
                    p = B[bl, bh]
                    if p == 0.0:
                        continue
                    a, b_ = _INC[bl]
                    c, d = _INC[bh]
                    new[a:, b_:, c:, d:] += p * dist[: n - a, : n - b_, : n - c, : n - d]
            dist = new
        acc0[k - 1] = np.sum(dist * w0)
        acc1[k - 1] = np.sum(dist * w1)
        if k == H:
            residual = float(np.sum(dist[(lc < r) & (hc < r)]))
    return DecisionLaw(acc0, acc1, residual)


def _flip_count(attack) -> int:
    if attack is None or attack == "none":
        return 0
    if isinstance(attack, int):
        return attack
    kind = getattr(attack, "kind", None)
    if kind == "none":
        return 0
    if kind == "flip":
        return attack.c
    raise ConfigError("the exact oracle supports only the null and flip attacks")


@dataclass(frozen=True)
class ExactOperatingPoint:
    alpha: float
    beta: float
    asn0: float  # E[T; T <= horizon] under theta = 0
    asn1: float
    residual0: float
    residual1: float
    law0: DecisionLaw
    law1: DecisionLaw


def exact_voting_operating_point(
    model: FiniteAlphabet,
    s: int,
    r: int,
    thr: Thresholds,
    horizon: int,
    attack=None,
    max_residual: float | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> ExactOperatingPoint:
    """Exact alpha, beta and truncated ASNs of the voting rule.

    ``attack`` is None/"none", a flip attack object, or the number of flipped
    sensors.  Flipped sensors follow the opposite state's law.
    """
    c = _flip_count(attack)
    if not 0 <= c <= s:
        raise ConfigError(f"need 0 <= c <= s, got c={c}")
    laws = {}
    for law in (0, 1):
        laws[law] = single_sensor_crossing_distribution(model, thr, law, horizon, state_cap)
    d = {}
    for theta in (0, 1):
        sensors = [laws[1 - theta]] * c + [laws[theta]] * (s - c)
        d[theta] = voting_decision_law(sensors, r)
    if max_residual is not None and max(d[0].residual, d[1].residual) > max_residual:
        raise EstimationError(
            f"undecided mass {max(d[0].residual, d[1].residual):.3g} exceeds {max_residual:g}; widen the horizon"
        )
    return ExactOperatingPoint(
        alpha=float(d[0].accept1.sum()),
        beta=float(d[1].accept0.sum()),
        asn0=d[0].mean_time(),
        asn1=d[1].mean_time(),
        residual0=d[0].residual,
        residual1=d[1].residual,
        law0=d[0],
        law1=d[1],
    )


# --- brute-force cross-checks ---------------------------------------------


def _first_hit(mask: np.ndarray, horizon: int) -> np.ndarray:
    """1-based first True along the last axis; horizon + 1 when never."""
    any_hit = mask.any(axis=-1)
    return np.where(any_hit, mask.argmax(axis=-1) + 1, horizon + 1)


def enumerate_crossing_law(model: FiniteAlphabet, thr: Thresholds, theta: int, horizon: int) -> CrossingLaw:
    """Joint crossing-time law by listing every observation path of one sensor."""
    llr, mass = model.llr_values, model.masses(float(theta))
    paths = np.array(list(itertools.product(range(llr.size), repeat=horizon)), dtype=np.int64)
    S = np.cumsum(llr[paths], axis=1)
    prob = np.prod(mass[paths], axis=1)
    lo = _first_hit(thr.low_hit(S), horizon)
    hi = _first_hit(thr.high_hit(S), horizon)
    P = np.zeros((horizon + 1, horizon + 1))
    np.add.at(P, (lo - 1, hi - 1), prob)
    return CrossingLaw(P, horizon)


def _vote_from_times(lows: np.ndarray, highs: np.ndarray, r: int, horizon: int):
    """Decision (0, 1, 0.5 for tie, nan when undecided) and time from crossing-time order statistics."""
    t_low = np.sort(lows, axis=-1)[..., r - 1]
    t_high = np.sort(highs, axis=-1)[..., r - 1]
    T = np.minimum(t_low, t_high)
    dec = np.where(t_high < t_low, 1.0, np.where(t_low < t_high, 0.0, 0.5))
    dec = np.where(T > horizon, np.nan, dec)
    return dec, T


def enumerate_voting(laws: list[CrossingLaw], r: int):
    """(P[accept 1], P[accept 0], E[T; decided]) by listing all crossing-class combinations."""
    H = laws[0].horizon
    supports = []
    for law in laws:
        t, u = np.nonzero(law.joint)
        supports.append((t + 1, u + 1, law.joint[t, u]))
    p1 = p0 = et = 0.0
    for combo in itertools.product(*[range(len(sp[2])) for sp in supports]):
        lows = np.array([supports[i][0][j] for i, j in enumerate(combo)])
        highs = np.array([supports[i][1][j] for i, j in enumerate(combo)])
        prob = float(np.prod([supports[i][2][j] for i, j in enumerate(combo)]))
        dec, T = _vote_from_times(lows, highs, r, H)
        if np.isnan(dec):
            continue
        p1 += prob * dec
        p0 += prob * (1 - dec)
        et += prob * T
    return p1, p0, et


def enumerate_joint_paths(model: FiniteAlphabet, s: int, r: int, thr: Thresholds, theta: int, horizon: int, flipped: int = 0):
    """(P[accept 1], P[accept 0], E[T; decided]) by listing every joint path of all sensors."""
    if s * horizon > 24:
        raise CapacityError("full joint enumeration limited to s * horizon <= 24")
    llr = model.llr_values
    n_sym = llr.size
    paths = np.array(list(itertools.product(range(n_sym), repeat=s * horizon)), dtype=np.int64).reshape(-1, s, horizon)
    prob = np.ones(paths.shape[0])
    for i in range(s):
        law = 1 - theta if i < flipped else theta
        prob *= np.prod(model.masses(float(law))[paths[:, i]], axis=1)
    S = np.cumsum(llr[paths], axis=2)
    lows = _first_hit(thr.low_hit(S), horizon)
    highs = _first_hit(thr.high_hit(S), horizon)
    dec, T = _vote_from_times(lows, highs, r, horizon)
    ok = ~np.isnan(dec)
    return float(np.sum(prob[ok] * dec[ok])), float(np.sum(prob[ok] * (1 - dec[ok]))), float(np.sum(prob[ok] * T[ok]))
