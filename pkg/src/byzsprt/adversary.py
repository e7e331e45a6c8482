"""Admissible attacks: bias vectors supported on a fixed compromised set.

An attack sees only the true observations of its own sensors (honest entries
are masked out with NaN), the true state, the time index and its previous
bias.  Randomised attacks draw through ``AttackView.draw`` so the simulator
controls the stream (and can tilt it for importance sampling).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AdmissibilityError, ConfigError
from .models import HypothesisModel


@dataclass(frozen=True)
class Placement:
    """How the compromised set is chosen: fixed indices, or uniform per trial."""

    indices: tuple[int, ...] | None = None

    def validate(self, s: int, c: int) -> None:
        if not 0 <= c <= s:
            raise ConfigError(f"need 0 <= c <= s, got c={c}, s={s}")
        if self.indices is not None:
            idx = self.indices
            if len(idx) != c or len(set(idx)) != c or any(i < 0 or i >= s for i in idx):
                raise ConfigError(f"fixed placement {idx} must list {c} distinct sensors in 0..{s - 1}")

    def masks(self, s: int, c: int, n: int, rng: np.random.Generator) -> np.ndarray:
        mask = np.zeros((n, s), dtype=bool)
        if c == 0:
            return mask
        if self.indices is not None:
            mask[:, list(self.indices)] = True
            return mask
        picks = np.argsort(rng.random((n, s)), axis=1)[:, :c]
        np.put_along_axis(mask, picks, True, axis=1)
        return mask


@dataclass
class AttackView:
    k: int
    theta: int
    observed: np.ndarray  # true observations; NaN on honest sensors
    compromised: np.ndarray
    prev_bias: np.ndarray
    model: HypothesisModel
    draw: Callable[[float], np.ndarray]


@dataclass(frozen=True)
class NullAttack:
    c: int = 0
    placement: Placement = field(default_factory=Placement)
    kind = "none"

    def validate(self, s: int) -> None:
        if self.c != 0:
            raise ConfigError("the null attack compromises no sensors (c must be 0)")

    def wrong_votes(self) -> int:
        return 0

    def bias(self, view: AttackView) -> np.ndarray:
        return np.zeros_like(view.prev_bias)


@dataclass(frozen=True)
class FlipAttack:
    """Compromised sensors deliver fresh draws from the opposite hypothesis.

    The split into a first and a last group of c sensors collapses onto the
    compromised set itself, since only one of the two groups is active for a
    given state.
    """

    c: int
    placement: Placement = field(default_factory=Placement)
    kind = "flip"

    def validate(self, s: int) -> None:
        self.placement.validate(s, self.c)
        if s <= 2 * self.c:
            raise ConfigError(f"flip attack requires s > 2c, got s={s}, c={self.c}")

    def wrong_votes(self) -> int:
        return self.c

    def bias(self, view: AttackView) -> np.ndarray:
        if self.c == 0:
            return np.zeros_like(view.prev_bias)
        fake = view.draw(1.0 - view.theta)
        return np.where(view.compromised, fake - np.nan_to_num(view.observed), 0.0)


@dataclass(frozen=True)
class SuppressionAttack:
    """Compromised sensors deliver a fixed value that argues for the wrong state."""

    c: int
    magnitude: float = 10.0
    placement: Placement = field(default_factory=Placement)
    kind = "suppression"

    def validate(self, s: int) -> None:
        self.placement.validate(s, self.c)
        if not np.isfinite(self.magnitude) or self.magnitude < 0:
            raise ConfigError(f"suppression magnitude must be finite and >= 0, got {self.magnitude}")

    def wrong_votes(self) -> int:
        return self.c

    def bias(self, view: AttackView) -> np.ndarray:
        point = view.model.adversarial_point(1 - view.theta, self.magnitude)
        return np.where(view.compromised, point - np.nan_to_num(view.observed), 0.0)


Attack = NullAttack | FlipAttack | SuppressionAttack


def check_support(bias: np.ndarray, compromised: np.ndarray) -> None:
    if np.any(bias[~compromised] != 0):
        raise AdmissibilityError("attack bias has support outside the compromised set")


def _single_view(true_obs, theta, k, model, compromised, rng) -> AttackView:
    true_obs = np.asarray(true_obs, dtype=float)
    mask = np.zeros(true_obs.shape, dtype=bool)
    mask[list(compromised)] = True
    return AttackView(
        k=k,
        theta=theta,
        observed=np.where(mask, true_obs, np.nan),
        compromised=mask,
        prev_bias=np.zeros_like(true_obs),
        model=model,
        draw=lambda t: model.sample_tilted(t, rng, true_obs.shape),
    )


def flip_attack_bias(true_obs, theta: int, k: int, model: HypothesisModel, compromised, rng) -> np.ndarray:
    """One step of the flip attack for a single trial; ``compromised`` lists sensor indices."""
    view = _single_view(true_obs, theta, k, model, compromised, rng)
    return FlipAttack(len(view.compromised.nonzero()[0])).bias(view)


def null_attack(true_obs, *args, **kwargs) -> np.ndarray:
    return np.zeros(np.shape(true_obs))


def suppression_attack_bias(true_obs, theta: int, k: int, magnitude: float, model: HypothesisModel, compromised):
    view = _single_view(true_obs, theta, k, model, compromised, None)
    return SuppressionAttack(len(compromised), magnitude).bias(view)


def attack_from_config(block, s: int):
    known = {"type", "c", "placement", "magnitude"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"[attack] unknown keys: {sorted(unknown)}")
    kind = block.get("type", "none")
    c = int(block.get("c", 0))
    raw = block.get("placement", "random")
    if raw == "random":
        placement = Placement()
    elif isinstance(raw, list) and all(isinstance(i, int) for i in raw):
        placement = Placement(tuple(raw))
    else:
        raise ConfigError(f"[attack] placement must be 'random' or a list of sensor indices, got {raw!r}")
    if kind == "none":
        attack = NullAttack(c)
    elif kind == "flip":
        attack = FlipAttack(c, placement)
    elif kind == "suppression":
        attack = SuppressionAttack(c, float(block.get("magnitude", 10.0)), placement)
    else:
        raise ConfigError(f"[attack] type must be none, flip or suppression, got {kind!r}")
    if "magnitude" in block and kind != "suppression":
        raise ConfigError("[attack] magnitude only applies to the suppression attack")
    attack.validate(s)
    return attack
