"""Sequential detectors over a panel of sensors.

The panel keeps each sensor's cumulative LLR ``S_i(k)`` together with its
latched first-crossing times of ``-a`` and ``+b``.  Arrays carry an optional
leading batch axis, so the same code drives a single trial or many trials in
lock-step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, ModelDegeneracyError

# barrier comparisons tolerate float round-off in S, so lattice walks that land
# exactly on a barrier count as crossing it
BARRIER_RTOL = 1e-9
NEVER = np.iinfo(np.int64).max


class Decision(IntEnum):
    CONTINUE = -1
    ACCEPT0 = 0
    ACCEPT1 = 1


@dataclass(frozen=True)
class Thresholds:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError(f"thresholds must be positive, got a={self.a}, b={self.b}")

    @classmethod
    def symmetric(cls, value: float) -> "Thresholds":
        return cls(value, value)

    def low_hit(self, S):
        return S <= -self.a + BARRIER_RTOL * max(1.0, self.a)

    def high_hit(self, S):
        return S >= self.b - BARRIER_RTOL * max(1.0, self.b)


@dataclass
class SensorPanelState:
    k: int
    S: np.ndarray
    low_times: np.ndarray
    high_times: np.ndarray

    @classmethod
    def zeros(cls, s: int, batch: int | None = None) -> "SensorPanelState":
        shape = (s,) if batch is None else (batch, s)
        return cls(0, np.zeros(shape), np.full(shape, NEVER, dtype=np.int64), np.full(shape, NEVER, dtype=np.int64))

    @property
    def s(self) -> int:
        return self.S.shape[-1]

    @property
    def crossed_low(self) -> np.ndarray:
        return self.low_times <= self.k

    @property
    def crossed_high(self) -> np.ndarray:
        return self.high_times <= self.k

    def copy(self) -> "SensorPanelState":
        return SensorPanelState(self.k, self.S.copy(), self.low_times.copy(), self.high_times.copy())

    def take(self, rows) -> "SensorPanelState":
        return SensorPanelState(self.k, self.S[rows], self.low_times[rows], self.high_times[rows])

    def advance(self, llr, thr: Thresholds) -> None:
        """In-place step k-1 -> k."""
        llr = np.asarray(llr, dtype=float)
        if llr.shape != self.S.shape:
            raise ValueError(f"llr shape {llr.shape} does not match panel {self.S.shape}")
        if not np.all(np.isfinite(llr)):
            raise ModelDegeneracyError("non-finite LLR increment")
        self.k += 1
        self.S += llr
        np.copyto(self.low_times, self.k, where=(self.low_times == NEVER) & thr.low_hit(self.S))
        np.copyto(self.high_times, self.k, where=(self.high_times == NEVER) & thr.high_hit(self.S))


def panel_update(state: SensorPanelState, llr_vec, thr: Thresholds) -> SensorPanelState:
    new = state.copy()
    new.advance(llr_vec, thr)
    return new


def _fair_coin(codes: np.ndarray, tie: np.ndarray, rng: np.random.Generator) -> None:
    n_tie = int(np.count_nonzero(tie))
    if n_tie:
        codes[tie] = (rng.random(n_tie) < 0.5).astype(codes.dtype)


def _as_decision(codes: np.ndarray):
    return Decision(int(codes)) if codes.ndim == 0 else codes


def sum_sprt_decide(state: SensorPanelState, sensor_set, thr: Thresholds, rng=None):
    """Sum-SPRT over ``sensor_set`` (zero-based indices)."""
    idx = np.asarray(sensor_set, dtype=int)
    if idx.size == 0:
        raise ConfigError("sum-SPRT needs a nonempty sensor set")
    total = state.S[..., idx].sum(axis=-1)
    low, high = thr.low_hit(total), thr.high_hit(total)
    codes = np.where(high, 1, np.where(low, 0, -1)).astype(np.int8)
    # a single sum cannot sit on both sides; kept for symmetry with voting
    if rng is not None:
        _fair_coin(codes, np.asarray(low & high), rng)
    return _as_decision(codes)


def check_vote_count(s: int, r: int) -> None:
    if not (s / 2 < r <= s):
        raise ConfigError(f"voting rule needs s/2 < r <= s, got s={s}, r={r}")


def voting_decide(state: SensorPanelState, r: int, rng: np.random.Generator):
    """Stop once ``r`` sensors have latched the same barrier; fair coin on a tie."""
    check_vote_count(state.s, r)
    n_low = np.count_nonzero(state.crossed_low, axis=-1)
    n_high = np.count_nonzero(state.crossed_high, axis=-1)
    low, high = n_low >= r, n_high >= r
    codes = np.where(high & ~low, 1, np.where(low & ~high, 0, -1)).astype(np.int8)
    _fair_coin(codes, np.asarray(low & high), rng)
    return _as_decision(codes)


@dataclass(frozen=True)
class VotingRule:
    r: int

    name = "voting"

    def validate(self, s: int) -> None:
        check_vote_count(s, self.r)

    def decide(self, state, thr, rng):
        return voting_decide(state, self.r, rng)


@dataclass(frozen=True)
class SumSPRT:
    sensor_set: tuple[int, ...] | None = None  # None: all sensors

    name = "sum-sprt"

    def sensors(self, s: int) -> tuple[int, ...]:
        return tuple(range(s)) if self.sensor_set is None else tuple(self.sensor_set)

    def validate(self, s: int) -> None:
        m = self.sensors(s)
        if not m:
            raise ConfigError("sum-SPRT needs a nonempty sensor set")
        if len(set(m)) != len(m) or min(m) < 0 or max(m) >= s:
            raise ConfigError(f"sum-SPRT sensor set {m} is not a subset of 0..{s - 1}")

    def decide(self, state, thr, rng):
        return sum_sprt_decide(state, self.sensors(state.s), thr, rng)


def order_statistic(times: np.ndarray, r: int) -> np.ndarray:
    """r-th smallest (1-based) crossing time along the last axis."""
    return np.sort(times, axis=-1)[..., r - 1]


def current_order_crossing(S_path: np.ndarray, r: int, side: str, thr: Thresholds) -> int | float:
    """First k at which r sensors are simultaneously beyond a barrier.

    ``S_path`` has shape (steps, s).  This is the "current value" construction
    (not latched) used by the sandwich bounds on the voting stopping times.
    """
    hit = thr.high_hit(S_path) if side == "high" else thr.low_hit(S_path)
    ok = np.nonzero(np.count_nonzero(hit, axis=1) >= r)[0]
    return int(ok[0]) + 1 if ok.size else math.inf
