"""Hypothesis models, log-likelihood ratios and information constants.

A model is a pair of mutually absolutely continuous laws: ``nu`` (theta = 0)
and ``mu`` (theta = 1).  Everything downstream works with the log-likelihood
ratio ``L(x) = log dmu/dnu (x)``, never with raw densities.

Both built-in families are closed under exponential tilting.  ``q_t`` denotes
the law with density proportional to ``nu * exp(t * L)``, so ``q_0 = nu`` and
``q_1 = mu``; its log-normaliser ``psi(t) = log E_nu[exp(t L)]`` is the tilted
integral used for the Chernoff constant and by importance sampling.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from .errors import ConfigError, ModelDegeneracyError, NumericalSearchError

MASS_TOL = 1e-12
_POINT_RTOL = 1e-9
_CHERNOFF_BOUNDS = (1e-6, 1.0 - 1e-6)


class HypothesisModel(ABC):
    """Interface shared by every hypothesis pair."""

    name: str
    support: str  # "continuous" | "finite"

    @abstractmethod
    def llr(self, x) -> np.ndarray:
        """Vectorised log dmu/dnu; raises ModelDegeneracyError on non-finite values."""

    @abstractmethod
    def log_tilted_integral(self, t: float) -> float:
        """psi(t) = log E_nu[exp(t L)]."""

    @abstractmethod
    def sample_tilted(self, t, rng: np.random.Generator, size) -> np.ndarray:
        """Draw from q_t.  ``t`` may be an array broadcastable to ``size``.

        Consumes exactly one base variate per output entry so that streams stay
        aligned whatever the tilt.
        """

    @abstractmethod
    def adversarial_point(self, toward: int, magnitude: float) -> float:
        """A fixed observation whose LLR pushes toward hypothesis ``toward``."""

    @abstractmethod
    def kl_closed_form(self) -> tuple[float, float]: ...

    @abstractmethod
    def kl_numeric(self) -> tuple[float, float]: ...

    def sample(self, theta: int, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.sample_tilted(float(theta), rng, size)


@dataclass(frozen=True)
class GaussianPair(HypothesisModel):
    """nu = N(mean0, sigma^2), mu = N(mean1, sigma^2)."""

    mean0: float = -1.0
    mean1: float = 1.0
    sigma: float = 1.0
    name: str = "gaussian"
    support: str = field(default="continuous", init=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ModelDegeneracyError(f"sigma must be positive and finite, got {self.sigma}")
        if not (math.isfinite(self.mean0) and math.isfinite(self.mean1)):
            raise ModelDegeneracyError("means must be finite")

    @property
    def _slope(self) -> float:
        return (self.mean1 - self.mean0) / self.sigma**2

    @property
    def _mid(self) -> float:
        return 0.5 * (self.mean0 + self.mean1)

    @property
    def _divergence(self) -> float:
        return (self.mean1 - self.mean0) ** 2 / (2 * self.sigma**2)

    def llr(self, x):
        out = self._slope * (np.asarray(x, dtype=float) - self._mid)
        if not np.all(np.isfinite(out)):
            raise ModelDegeneracyError("non-finite log-likelihood ratio")
        return out

    def log_density(self, x, theta: int):
        m = self.mean1 if theta else self.mean0
        z = (np.asarray(x, dtype=float) - m) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def log_tilted_integral(self, t):
        return self._divergence * t * (t - 1.0)

    def sample_tilted(self, t, rng, size=None):
        z = rng.standard_normal(size)
        return self.mean0 + np.asarray(t) * (self.mean1 - self.mean0) + self.sigma * z

    def adversarial_point(self, toward, magnitude):
        direction = 1.0 if toward else -1.0
        return self._mid + direction * math.copysign(magnitude, self.mean1 - self.mean0)

    def kl_closed_form(self):
        d = self._divergence
        return d, d

    def kl_numeric(self):
        lo, hi = min(self.mean0, self.mean1), max(self.mean0, self.mean1)
        pts = (lo - 40 * self.sigma, lo, hi, hi + 40 * self.sigma)

        def expect(theta):
            f = lambda x: float(self.llr(x)) * math.exp(float(self.log_density(x, theta)))
            total = 0.0
            for u, v in zip(pts[:-1], pts[1:]):
                total += integrate.quad(f, u, v, epsabs=0.0, epsrel=1e-9, limit=200)[0]
            return total

        return -expect(0), expect(1)


@dataclass(frozen=True)
class FiniteAlphabet(HypothesisModel):
    """Point masses ``masses0`` (nu) and ``masses1`` (mu) on ``points``."""

    points: tuple[float, ...]
    masses0: tuple[float, ...]
    masses1: tuple[float, ...]
    name: str = "finite"
    support: str = field(default="finite", init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        p0 = np.asarray(self.masses0, dtype=float)
        p1 = np.asarray(self.masses1, dtype=float)
        if not (pts.ndim == 1 and pts.shape == p0.shape == p1.shape and pts.size >= 1):
            raise ModelDegeneracyError("points and both mass rows must have equal length")
        if np.any(p0 < 0) or np.any(p1 < 0):
            raise ModelDegeneracyError("masses must be non-negative")
        if abs(p0.sum() - 1) > MASS_TOL or abs(p1.sum() - 1) > MASS_TOL:
            raise ModelDegeneracyError("each mass row must sum to 1 within 1e-12")
        if np.any((p0 > 0) != (p1 > 0)):
            raise ModelDegeneracyError("nu and mu are not mutually absolutely continuous")
        if np.unique(pts).size != pts.size:
            raise ModelDegeneracyError("alphabet points must be distinct")
        keep = p0 > 0
        order = np.argsort(pts[keep])
        object.__setattr__(self, "_pts", pts[keep][order])
        object.__setattr__(self, "_logp0", np.log(p0[keep][order]))
        object.__setattr__(self, "_llr", np.log(p1[keep][order]) - np.log(p0[keep][order]))

    @property
    def alphabet(self) -> np.ndarray:
        return self._pts.copy()

    @property
    def llr_values(self) -> np.ndarray:
        return self._llr.copy()

    def masses(self, t: float) -> np.ndarray:
        logq = self._logp0 + t * self._llr
        return np.exp(logq - logsumexp(logq))

    def _index(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.searchsorted(self._pts, x)
        left = np.clip(pos - 1, 0, self._pts.size - 1)
        right = np.clip(pos, 0, self._pts.size - 1)
        pick = np.where(np.abs(self._pts[left] - x) <= np.abs(self._pts[right] - x), left, right)
        ok = np.abs(self._pts[pick] - x) <= _POINT_RTOL * np.maximum(1.0, np.abs(x))
        return pick, ok

    def llr(self, x):
        idx, ok = self._index(x)
        if not np.all(ok):
            raise ModelDegeneracyError("observation outside the alphabet has no finite LLR")
        return self._llr[idx]

    def log_tilted_integral(self, t):
        return float(logsumexp(self._logp0 + t * self._llr))

    def sample_tilted(self, t, rng, size=None):
        u = np.asarray(rng.random(size))
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), u.shape)
        out = np.empty(u.shape)
        for tv in np.unique(t_arr):
            sel = t_arr == tv
            cdf = np.cumsum(self.masses(float(tv)))
            idx = np.minimum(np.searchsorted(cdf, u[sel], side="right"), cdf.size - 1)
            out[sel] = self._pts[idx]
        return out if np.ndim(out) else float(out)

    def adversarial_point(self, toward, magnitude):
        return float(self._pts[np.argmax(self._llr) if toward else np.argmin(self._llr)])

    def kl_closed_form(self):
        p0 = np.exp(self._logp0)
        p1 = p0 * np.exp(self._llr)
        return float(-np.dot(p0, self._llr)), float(np.dot(p1, self._llr))

    def kl_numeric(self):
        # exact finite sums, evaluated through the tilted family (q_1 = mu)
        q0, q1 = self.masses(0.0), self.masses(1.0)
        return float(-np.sum(q0 * self._llr)), float(np.sum(q1 * self._llr))


def bernoulli_pair(p0: float, p1: float) -> FiniteAlphabet:
    """nu = Bern(p0), mu = Bern(p1) on the alphabet {0, 1}."""
    return FiniteAlphabet((0.0, 1.0), (1 - p0, p0), (1 - p1, p1), name="bernoulli")


@dataclass(frozen=True)
class InfoConstants:
    I0: float
    I1: float
    I: float
    I_tilde: float


def log_likelihood_ratio(model: HypothesisModel, x: float) -> float:
    return float(model.llr(x))


def kl_divergences(model: HypothesisModel, method: str = "closed") -> tuple[float, float]:
    """Return ``(I0, I1)`` with I1 = E_mu[L] and I0 = -E_nu[L], in nats."""
    if method == "closed":
        i0, i1 = model.kl_closed_form()
    elif method == "numeric":
        i0, i1 = model.kl_numeric()
    else:
        raise ValueError(f"unknown method {method!r}")
    for v in (i0, i1):
        if not (math.isfinite(v) and v > 0):
            raise ModelDegeneracyError(f"divergences must satisfy 0 < I0, I1 < inf, got ({i0}, {i1})")
    return i0, i1


def chernoff_minimizer(model: HypothesisModel) -> tuple[float, float]:
    """Minimise the tilted integral over w; returns ``(w*, I_tilde)``."""
    kl_divergences(model)
    lo, hi = _CHERNOFF_BOUNDS
    res = optimize.minimize_scalar(
        model.log_tilted_integral, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    w = float(res.x)
    if not res.success or w - lo < 1e-5 or hi - w < 1e-5:
        raise NumericalSearchError(f"tilted-integral minimiser not bracketed inside (0, 1): w = {w}")
    return w, -float(res.fun)


def chernoff_constant(model: HypothesisModel) -> float:
    return chernoff_minimizer(model)[1]


def info_constants(model: HypothesisModel) -> InfoConstants:
    i0, i1 = kl_divergences(model)
    return InfoConstants(I0=i0, I1=i1, I=min(i0, i1), I_tilde=chernoff_constant(model))


def sample_observation(model: HypothesisModel, theta: int, rng: np.random.Generator) -> float:
    if theta not in (0, 1):
        raise ValueError("theta must be 0 or 1")
    return float(model.sample(theta, rng))


_MODEL_KEYS = {
    "gaussian": {"family", "mean0", "mean1", "sigma"},
    "finite": {"family", "points", "masses0", "masses1"},
    "bernoulli": {"family", "p0", "p1"},
}


def model_from_config(block: Mapping[str, Any]) -> HypothesisModel:
    """Build a model from a ``[model]`` config table."""
    family = block.get("family")
    if family not in _MODEL_KEYS:
        raise ConfigError(f"[model] family must be one of {sorted(_MODEL_KEYS)}, got {family!r}")
    unknown = set(block) - _MODEL_KEYS[family]
    if unknown:
        raise ConfigError(f"[model] unknown keys for family {family!r}: {sorted(unknown)}")
    try:
        if family == "gaussian":
            return GaussianPair(
                float(block.get("mean0", -1.0)), float(block.get("mean1", 1.0)), float(block.get("sigma", 1.0))
            )
        if family == "bernoulli":
            return bernoulli_pair(float(block["p0"]), float(block["p1"]))
        return FiniteAlphabet(
            tuple(map(float, block["points"])),
            tuple(map(float, block["masses0"])),
            tuple(map(float, block["masses1"])),
        )
    except KeyError as exc:
        raise ConfigError(f"[model] missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelDegeneracyError):
            raise
        raise ConfigError(f"[model] {exc}") from None
