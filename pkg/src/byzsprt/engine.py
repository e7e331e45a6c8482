"""Trial simulator: draw -> attack bias -> LLR -> panel update -> decide.

Trials of one batch advance in lock-step.  True observations and attack draws
are generated for the whole batch at every step (finished trials included) so
that two runs sharing a seed see identical honest observations whatever the
attack or detector; this gives paired comparisons across strategies.

Under a :class:`Proposal` the honest observations and the attacker's random
draws come from exponentially tilted laws, and each trial returns the log
likelihood ratio (nominal over proposal) of everything that was tilted, up to
its stopping time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .adversary import AttackView, NullAttack, check_support
from .detection import Decision, SensorPanelState, SumSPRT, Thresholds, VotingRule
from .errors import ConfigError
from .models import HypothesisModel

DEFAULT_MAX_HORIZON = 10**6


@dataclass(frozen=True)
class Scenario:
    """Everything about a trial except the state, thresholds and randomness."""

    model: HypothesisModel
    s: int
    detector: VotingRule | SumSPRT
    attack: object = NullAttack()
    max_horizon: int = DEFAULT_MAX_HORIZON

    def __post_init__(self):
        if self.s < 1:
            raise ConfigError(f"need at least one sensor, got s={self.s}")
        if self.max_horizon < 1:
            raise ConfigError(f"max_horizon must be >= 1, got {self.max_horizon}")
        self.detector.validate(self.s)
        self.attack.validate(self.s)

    def scope(self) -> tuple[int, ...]:
        if isinstance(self.detector, SumSPRT):
            return self.detector.sensors(self.s)
        return tuple(range(self.s))


@dataclass(frozen=True)
class Proposal:
    """Change of measure used for importance sampling.

    ``honest_shift[j]`` / ``attack_shift[j]`` are the tilt offsets applied when
    ``j`` compromised sensors fall inside ``scope`` (a length-1 tuple applies to
    every count).  With ``honest_count`` set, each trial tilts a uniformly
    random subset of that many honest in-scope sensors and the weight is that
    of the uniform mixture over all such subsets.  With ``release_on_latch``
    an honest sensor reverts to its nominal law once it has latched the barrier
    of the opposite state; the rule depends only on the sensor's own past, so
    the mixture weight stays exact.
    """

    honest_shift: tuple[float, ...]
    attack_shift: tuple[float, ...] = (0.0,)
    honest_count: int | None = None
    scope: tuple[int, ...] | None = None
    release_on_latch: bool = False

    @staticmethod
    def _pick(table, counts):
        table = np.asarray(table, dtype=float)
        return table[np.minimum(counts, table.size - 1)]

    def shifts(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._pick(self.honest_shift, counts), self._pick(self.attack_shift, counts)


@dataclass
class BatchResult:
    decision: np.ndarray  # int8: 0, 1, or -1 for truncated
    stopping_time: np.ndarray
    log_weight: np.ndarray
    low_times: np.ndarray
    high_times: np.ndarray
    compromised: np.ndarray

    @property
    def truncated(self) -> np.ndarray:
        return self.decision < 0


@dataclass(frozen=True)
class TrialOutcome:
    decision: Decision | None  # None when truncated at max_horizon
    stopping_time: int
    log_weight: float = 0.0

    @property
    def truncated(self) -> bool:
        return self.decision is None


def _psi(model: HypothesisModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape)
    for v in np.unique(t):
        out[t == v] = model.log_tilted_integral(float(v))
    return out


def log_elementary_symmetric(z: np.ndarray, m: np.ndarray) -> np.ndarray:
    """log e_m(exp z_1, ..., exp z_s) row-wise; ``-inf`` entries are absent terms."""
    n, s = z.shape
    m_max = int(np.max(m)) if m.size else 0
    E = np.full((n, m_max + 1), -np.inf)
    E[:, 0] = 0.0
    for j in range(s):
        zj = z[:, j : j + 1]
        E[:, 1:] = np.logaddexp(E[:, 1:], E[:, :-1] + zj)
    return E[np.arange(n), m]


def _seed_children(seed, count: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,)) for i in range(count)]


def _generator(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


def simulate(
    scenario: Scenario,
    theta: int,
    thr: Thresholds,
    n: int,
    seed,
    proposal: Proposal | None = None,
) -> BatchResult:
    """Run ``n`` independent trials under state ``theta``."""
    if theta not in (0, 1):
        raise ValueError("theta must be 0 or 1")
    if n < 1:
        raise ConfigError("need at least one trial")
    model, s, attack, detector = scenario.model, scenario.s, scenario.attack, scenario.detector
    obs_rng, att_rng, aux_rng = (_generator(c) for c in _seed_children(seed, 3))

    comp = attack.placement.masks(s, attack.c, n, aux_rng)
    obs_t = np.full((n, s), float(theta))
    att_shift = np.zeros((n, s))
    if proposal is not None:
        scope = np.zeros(s, dtype=bool)
        scope[list(proposal.scope if proposal.scope is not None else scenario.scope())] = True
        eligible = ~comp & scope
        h_shift, a_shift = proposal.shifts(np.count_nonzero(comp & scope, axis=1))
        n_elig = np.count_nonzero(eligible, axis=1)
        if proposal.honest_count is None:
            tilted = eligible
        else:
            m_eff = np.minimum(proposal.honest_count, n_elig)
            keys = np.where(eligible, aux_rng.random((n, s)), np.inf)
            rank = np.argsort(np.argsort(keys, axis=1), axis=1)
            tilted = rank < m_eff[:, None]
        tilting = eligible.copy()  # honest sensors whose tilt has not been released
        obs_t += np.where(tilted, h_shift[:, None], 0.0)
        att_shift = np.where(comp & scope, a_shift[:, None], 0.0)
        ell_step = (_psi(model, theta + h_shift) - _psi(model, np.full(n, float(theta))))[:, None]
        ell = np.zeros((n, s))
        att_logw = np.zeros(n)

    decision = np.full(n, -1, dtype=np.int8)
    stop = np.full(n, scenario.max_horizon, dtype=np.int64)
    logw = np.zeros(n)
    low_times = np.empty((n, s), dtype=np.int64)
    high_times = np.empty((n, s), dtype=np.int64)

    act = np.arange(n)
    state = SensorPanelState.zeros(s, batch=n)
    prev_bias = np.zeros((n, s))

    def finish(rows_local, codes):
        rows = act[rows_local]
        decision[rows] = codes
        stop[rows] = state.k
        low_times[rows] = state.low_times[rows_local]
        high_times[rows] = state.high_times[rows_local]
        if proposal is not None:
            logw[rows] = att_logw[rows] + _honest_log_weight(rows)

    def _honest_log_weight(rows):
        if proposal.honest_count is None:
            return -np.where(eligible[rows], ell[rows], 0.0).sum(axis=1)
        z = np.where(eligible[rows], ell[rows], -np.inf)
        m = m_eff[rows]
        log_comb = gammaln(n_elig[rows] + 1) - gammaln(m + 1) - gammaln(n_elig[rows] - m + 1)
        return log_comb - log_elementary_symmetric(z, m)

    for k in range(1, scenario.max_horizon + 1):
        x = model.sample_tilted(obs_t, obs_rng, (n, s))[act]
        comp_a = comp[act]
        if proposal is not None:
            ell[act] += np.where(tilting[act], h_shift[act, None] * model.llr(x) - ell_step[act], 0.0)

        def draw(t_nominal, _act=act):
            vals = model.sample_tilted(t_nominal + att_shift, att_rng, (n, s))[_act]
            if proposal is not None:
                d = att_shift[_act]
                inc = -d * model.llr(vals) + _psi(model, t_nominal + d) - _psi(model, np.full(d.shape, t_nominal))
                att_logw[_act] += inc.sum(axis=1)
            return vals

        view = AttackView(k, theta, np.where(comp_a, x, np.nan), comp_a, prev_bias, model, draw)
        bias = attack.bias(view)
        check_support(bias, comp_a)
        state.advance(model.llr(x + bias), thr)
        if proposal is not None and proposal.release_on_latch:
            wrong = state.crossed_high if theta == 0 else state.crossed_low
            released = tilting[act] & wrong
            if released.any():
                r_rows, r_cols = np.nonzero(released)
                tilting[act[r_rows], r_cols] = False
                obs_t[act[r_rows], r_cols] = float(theta)
        codes = np.asarray(detector.decide(state, thr, aux_rng))
        done = codes >= 0
        if done.any():
            finish(np.nonzero(done)[0], codes[done])
            keep = ~done
            act = act[keep]
            state = state.take(keep)
            prev_bias = bias[keep]
            if act.size == 0:
                break
        else:
            prev_bias = bias

    if act.size:
        low_times[act] = state.low_times
        high_times[act] = state.high_times
        if proposal is not None:
            logw[act] = att_logw[act] + _honest_log_weight(act)
    return BatchResult(decision, stop, logw, low_times, high_times, comp)


def run_trial(scenario: Scenario, theta: int, thr: Thresholds, rng: np.random.Generator, proposal=None) -> TrialOutcome:
    """Single trial; deterministic given the state of ``rng``."""
    seed = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    res = simulate(scenario, theta, thr, 1, seed, proposal)
    d = int(res.decision[0])
    return TrialOutcome(None if d < 0 else Decision(d), int(res.stopping_time[0]), float(res.log_weight[0]))
