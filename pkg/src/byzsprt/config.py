"""Experiment configuration files (TOML).

Layout::

    experiment = "gamma-sweep"   # operating-point | gamma-sweep | sandwich | unknown-c | validate
    seed = 1
    output_dir = "results/fig1_c2"

    [model]      family = "gaussian" | "bernoulli" | "finite", plus family parameters
    [detector]   rule = "voting" | "sum-sprt", sensors, r, sensor_set, max_horizon
    [attack]     type = "none" | "flip" | "suppression", c, placement, magnitude
    [sweep]      thresholds = [...], trials, estimator = "importance" | "plain"
    [unknown_c]  c_bar, c_values
    [validate]   threshold, horizon, trials, is_trials, state_cap

Unknown keys anywhere are errors.  Thresholds are symmetric (a = b).
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .adversary import FlipAttack, NullAttack, attack_from_config
from .detection import SumSPRT, VotingRule, check_vote_count
from .engine import DEFAULT_MAX_HORIZON, Scenario
from .errors import ConfigError
from .models import FiniteAlphabet, HypothesisModel, model_from_config
from .oracle import DEFAULT_STATE_CAP

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("operating-point", "gamma-sweep", "sandwich", "unknown-c", "validate")
_TOP_KEYS = {"experiment", "seed", "output_dir", "model", "detector", "attack", "sweep", "unknown_c", "validate"}
_DETECTOR_KEYS = {"rule", "sensors", "r", "sensor_set", "max_horizon"}
_SWEEP_KEYS = {"thresholds", "trials", "estimator"}
_UNKNOWN_C_KEYS = {"c_bar", "c_values"}
_VALIDATE_KEYS = {"threshold", "horizon", "trials", "is_trials", "state_cap"}


@dataclass(frozen=True)
class DetectorConfig:
    rule: str
    sensors: int
    r: int | None
    sensor_set: tuple[int, ...] | None
    max_horizon: int

    def build(self):
        return VotingRule(self.r) if self.rule == "voting" else SumSPRT(self.sensor_set)


@dataclass(frozen=True)
class SweepConfig:
    thresholds: tuple[float, ...]
    trials: int = 10_000
    estimator: str = "importance"


@dataclass(frozen=True)
class UnknownCConfig:
    c_bar: int
    c_values: tuple[int, ...]


@dataclass(frozen=True)
class ValidateConfig:
    threshold: float
    horizon: int = 60
    trials: int = 1_000_000
    is_trials: int = 100_000
    state_cap: int = DEFAULT_STATE_CAP


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str
    model: HypothesisModel
    detector: DetectorConfig
    attack: Any
    sweep: SweepConfig | None
    unknown_c: UnknownCConfig | None
    validate: ValidateConfig | None
    raw: dict
    source: str = "<memory>"

    @property
    def s(self) -> int:
        return self.detector.sensors

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON form of the effective configuration (output location excluded)."""
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def scenario(self) -> Scenario:
        return Scenario(self.model, self.s, self.detector.build(), self.attack, self.detector.max_horizon)


def _table(raw: dict, name: str, keys: set[str], required: bool = True) -> dict | None:
    block = raw.get(name)
    if block is None:
        if required:
            raise ConfigError(f"missing [{name}] table")
        return None
    if not isinstance(block, dict):
        raise ConfigError(f"{name!r} must be a table")
    unknown = set(block) - keys
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    return block


def _int(block: dict, key: str, where: str, default=None) -> int:
    v = block.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"[{where}] {key} must be an integer, got {v!r}")
    return v


def _positive_int(block, key, where, default=None) -> int:
    v = _int(block, key, where, default)
    if v < 1:
        raise ConfigError(f"[{where}] {key} must be >= 1, got {v}")
    return v


def _threshold(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0 or x != x or x == float("inf"):
        raise ConfigError(f"[{where}] thresholds must be positive finite numbers, got {x!r}")
    return float(x)


def _detector(block: dict) -> DetectorConfig:
    rule = block.get("rule", "voting")
    if rule not in ("voting", "sum-sprt"):
        raise ConfigError(f"[detector] rule must be 'voting' or 'sum-sprt', got {rule!r}")
    s = _positive_int(block, "sensors", "detector")
    horizon = _positive_int(block, "max_horizon", "detector", DEFAULT_MAX_HORIZON)
    r = sensor_set = None
    if rule == "voting":
        if "sensor_set" in block:
            raise ConfigError("[detector] sensor_set only applies to rule = 'sum-sprt'")
        r = _int(block, "r", "detector")
        check_vote_count(s, r)
    else:
        if "r" in block:
            raise ConfigError("[detector] r only applies to rule = 'voting'")
        if "sensor_set" in block:
            raw_set = block["sensor_set"]
            if not isinstance(raw_set, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in raw_set):
                raise ConfigError("[detector] sensor_set must be a list of sensor indices")
            sensor_set = tuple(raw_set)
        SumSPRT(sensor_set).validate(s)
    return DetectorConfig(rule, s, r, sensor_set, horizon)


def _sweep(block: dict) -> SweepConfig:
    xs = block.get("thresholds")
    if not isinstance(xs, list) or not xs:
        raise ConfigError("[sweep] thresholds must be a nonempty list")
    xs = tuple(_threshold(x, "sweep") for x in xs)
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ConfigError("[sweep] thresholds must be strictly ascending")
    est = block.get("estimator", "importance")
    if est not in ("importance", "plain"):
        raise ConfigError(f"[sweep] estimator must be 'importance' or 'plain', got {est!r}")
    return SweepConfig(xs, _positive_int(block, "trials", "sweep", 10_000), est)


def build_config(raw: dict, source: str = "<memory>") -> ExperimentConfig:
    """Validate a parsed config mapping and build the typed configuration."""
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {list(EXPERIMENTS)}, got {experiment!r}")
    seed = _int(raw, "seed", "top level", 0)
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a string")

    model = model_from_config(_table(raw, "model", set(_all_model_keys())))
    det = _detector(_table(raw, "detector", _DETECTOR_KEYS))
    attack_block = raw.get("attack", {"type": "none"})
    if not isinstance(attack_block, dict):
        raise ConfigError("'attack' must be a table")
    c = attack_block.get("c", 0)
    if attack_block.get("type", "none") != "none" and isinstance(c, int) and 2 * c >= det.sensors:
        raise ConfigError(f"[attack] need s > 2c, got s={det.sensors}, c={c}")
    if experiment == "sandwich":
        # the magnitude belongs to the suppression deviation, not to the flip attack itself
        attack_block = {k: v for k, v in attack_block.items() if k != "magnitude"}
    attack = attack_from_config(attack_block, det.sensors)

    sweep_block = _table(raw, "sweep", _SWEEP_KEYS, required=experiment in ("operating-point", "gamma-sweep", "sandwich", "unknown-c"))
    sweep = _sweep(sweep_block) if sweep_block is not None else None

    uc = None
    uc_block = _table(raw, "unknown_c", _UNKNOWN_C_KEYS, required=experiment == "unknown-c")
    if uc_block is not None:
        c_bar = _int(uc_block, "c_bar", "unknown_c")
        values = uc_block.get("c_values")
        if not isinstance(values, list) or not values or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise ConfigError("[unknown_c] c_values must be a nonempty list of integers")
        if not 2 * c_bar < det.sensors:
            raise ConfigError(f"[unknown_c] need c_bar < s/2, got c_bar={c_bar}, s={det.sensors}")
        bad = [v for v in values if not 0 <= v <= c_bar]
        if bad:
            raise ConfigError(f"[unknown_c] need 0 <= c <= c_bar for every c, offending {bad}")
        uc = UnknownCConfig(c_bar, tuple(values))

    val = None
    val_block = _table(raw, "validate", _VALIDATE_KEYS, required=experiment == "validate")
    if val_block is not None:
        if "threshold" not in val_block:
            raise ConfigError("[validate] missing key 'threshold'")
        val = ValidateConfig(
            _threshold(val_block["threshold"], "validate"),
            _positive_int(val_block, "horizon", "validate", 60),
            _positive_int(val_block, "trials", "validate", 1_000_000),
            _positive_int(val_block, "is_trials", "validate", 100_000),
            _positive_int(val_block, "state_cap", "validate", DEFAULT_STATE_CAP),
        )

    if experiment == "validate":
        if not isinstance(model, FiniteAlphabet):
            raise ConfigError("validate needs a finite-alphabet model (bernoulli or finite)")
        if det.rule != "voting":
            raise ConfigError("validate supports the voting rule only")
        if not isinstance(attack, (NullAttack, FlipAttack)):
            raise ConfigError("validate supports the null and flip attacks only")
    if experiment == "sandwich" and not isinstance(attack, (NullAttack, FlipAttack)):
        raise ConfigError("sandwich runs take the attack type 'flip' (or 'none' for c = 0)")
    if experiment in ("sandwich", "unknown-c") and det.rule != "voting":
        raise ConfigError(f"{experiment} runs build their own detectors; use rule = 'voting'")

    return ExperimentConfig(experiment, seed, output_dir, model, det, attack, sweep, uc, val, raw, source)


def _all_model_keys():
    from .models import _MODEL_KEYS

    return set().union(*_MODEL_KEYS.values())


def preset_names() -> list[str]:
    files = resources.files("byzsprt").joinpath("presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".toml"))


def read_raw(path_or_preset: str) -> tuple[dict, str]:
    """Parse a config file, or a shipped preset when no such file exists."""
    path = Path(path_or_preset)
    if path.is_file():
        text, source = _read_text(path), str(path)
    else:
        name = path_or_preset[:-5] if path_or_preset.endswith(".toml") else path_or_preset
        ref = resources.files("byzsprt").joinpath("presets", f"{name}.toml")
        if not ref.is_file():
            raise ConfigError(f"no config file or preset named {path_or_preset!r}; presets: {', '.join(preset_names())}")
        text, source = ref.read_text(encoding="utf-8"), f"preset:{name}"
    try:
        return tomllib.loads(text), source
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def load_config(path_or_preset: str, seed=None, trials=None, output_dir=None, experiment=None) -> ExperimentConfig:
    """Load, apply command-line overrides, and validate."""
    raw, source = read_raw(path_or_preset)
    raw = copy.deepcopy(raw)
    if experiment is not None:
        raw["experiment"] = experiment
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    if trials is not None:
        section = "validate" if raw.get("experiment") == "validate" else "sweep"
        raw.setdefault(section, {})["trials"] = trials
    return build_config(raw, source)
