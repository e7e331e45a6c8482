"""Command-line runner: ``byzsprt run | info | validate``.

Exit codes: 0 ok, 2 configuration or model error, 3 estimation failure,
4 capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config, read_raw
from .detection import Thresholds
from .errors import ByzSPRTError, ConfigError, EstimationError
from .models import chernoff_minimizer, info_constants, model_from_config
from .montecarlo import (
    OperatingPoint,
    equilibrium_sandwich_report,
    equilibrium_scenarios,
    estimate_gamma_curve,
    estimate_operating_point,
    importance_sampled_error,
    plain_error_from_decisions,
    run_trials,
    unknown_c_report,
)
from .oracle import exact_voting_operating_point

CSV_COLUMNS = [
    "threshold",
    "alpha_hat",
    "alpha_stderr",
    "beta_hat",
    "beta_stderr",
    "asn0",
    "asn1",
    "trunc_rate",
    "gamma_hat",
    "gamma_normalized",
    "log_alpha_hat",
    "log_beta_hat",
    "asn0_stderr",
    "asn1_stderr",
    "gamma_stderr",
    "estimator",
]
_LOG_UNDERFLOW = -700.0
_LN10 = math.log(10.0)
Z_LIMIT = 3.0
MAX_RESIDUAL = 1e-8


def format_probability(log_p: float) -> str:
    """Decimal text for exp(log_p), also when it underflows a double."""
    if log_p == -math.inf:
        return "0"
    if math.isnan(log_p):
        return "nan"
    if log_p > _LOG_UNDERFLOW:
        return repr(math.exp(log_p))
    e10 = log_p / _LN10
    exp10 = math.floor(e10)
    return f"{10 ** (e10 - exp10):.12g}e{exp10}"


def _num(x: float) -> str:
    return repr(float(x))


def operating_point_row(op: OperatingPoint | None, threshold: float, info_I: float) -> dict:
    if op is None:
        return {"threshold": _num(threshold), **{k: "nan" for k in CSV_COLUMNS[1:-1]}, "estimator": ""}
    a, b = op.alpha, op.beta
    g = op.gamma_hat
    return {
        "threshold": _num(threshold),
        "alpha_hat": format_probability(a.log_value),
        "alpha_stderr": format_probability(a.log_value + math.log(a.rel_stderr)) if a.rel_stderr > 0 else "0",
        "beta_hat": format_probability(b.log_value),
        "beta_stderr": format_probability(b.log_value + math.log(b.rel_stderr)) if b.rel_stderr > 0 else "0",
        "asn0": _num(op.asn0),
        "asn1": _num(op.asn1),
        "trunc_rate": _num(op.trunc_rate),
        "gamma_hat": _num(g),
        "gamma_normalized": _num(g / info_I),
        "log_alpha_hat": _num(a.log_value),
        "log_beta_hat": _num(b.log_value),
        "asn0_stderr": _num(op.asn0_stderr),
        "asn1_stderr": _num(op.asn1_stderr),
        "gamma_stderr": _num(op.gamma_stderr),
        "estimator": op.estimator,
    }


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _run_sweep(cfg: ExperimentConfig, workers: int):
    sc, sw = cfg.scenario(), cfg.sweep
    I = info_constants(cfg.model).I
    if cfg.experiment == "gamma-sweep":
        curve = estimate_gamma_curve(sc, sw.thresholds, sw.trials, cfg.seed, sw.estimator, workers)
        rows = [operating_point_row(p.point, p.threshold, I) for p in curve.points]
        failures = {repr(p.threshold): p.error for p in curve.points if p.error}
        return rows, [], {"failed_points": failures}
    rows = []
    for x in sw.thresholds:
        op = estimate_operating_point(sc, Thresholds(x, x), sw.trials, cfg.seed, sw.estimator, workers)
        rows.append(operating_point_row(op, x, I))
    return rows, [], {}


def _run_sandwich(cfg: ExperimentConfig, workers: int):
    c = cfg.attack.c
    sw = cfg.sweep
    magnitude = 10.0 if "magnitude" not in cfg.raw.get("attack", {}) else float(cfg.raw["attack"]["magnitude"])
    checks = equilibrium_sandwich_report(
        cfg.s, c, cfg.model, sw.thresholds, sw.trials, cfg.seed, magnitude, workers, cfg.detector.max_horizon
    )
    I = info_constants(cfg.model).I
    rows = []
    for chk in checks:
        for cell in equilibrium_scenarios(cfg.model, cfg.s, c):
            rows.append(
                {
                    "threshold": _num(chk.threshold),
                    "cell": cell,
                    "gamma_hat": _num(chk.gamma[cell]),
                    "gamma_stderr": _num(chk.stderr[cell]),
                    "gamma_normalized": _num(chk.gamma[cell] / I),
                }
            )
    summary = {
        "checks": [
            {"threshold": chk.threshold, "attack_side_ok": chk.attack_side_ok, "detector_side_ok": chk.detector_side_ok}
            for chk in checks
        ]
    }
    return rows, ["threshold", "cell", "gamma_hat", "gamma_stderr", "gamma_normalized"], summary


def _run_unknown_c(cfg: ExperimentConfig, workers: int):
    uc, sw = cfg.unknown_c, cfg.sweep
    out = unknown_c_report(
        cfg.s, uc.c_bar, uc.c_values, cfg.model, sw.thresholds, sw.trials, cfg.seed, workers, cfg.detector.max_horizon
    )
    rows = [
        {
            "threshold": _num(r.threshold),
            "c": str(r.c),
            "gamma_hat": _num(r.gamma_hat),
            "gamma_stderr": _num(r.gamma_stderr),
            "gamma_normalized": _num(r.normalized),
            "bound_normalized": _num(r.bound),
        }
        for r in out
    ]
    cols = ["threshold", "c", "gamma_hat", "gamma_stderr", "gamma_normalized", "bound_normalized"]
    return rows, cols, {"bounds_met": all(r.normalized >= r.bound for r in out)}


def _z(est: float, se: float, exact: float) -> float:
    if se > 0:
        return (est - exact) / se
    return 0.0 if est == exact else math.inf


def validation_table(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Oracle vs plain Monte Carlo vs importance sampling for alpha, beta and both ASNs."""
    v = cfg.validate
    thr = Thresholds(v.threshold, v.threshold)
    sc = cfg.scenario()
    exact = exact_voting_operating_point(
        cfg.model, cfg.s, cfg.detector.r, thr, v.horizon, attack=cfg.attack, max_residual=MAX_RESIDUAL, state_cap=v.state_cap
    )
    rows, asn = [], []
    for name, theta, exact_p, exact_t in (("alpha", 0, exact.alpha, exact.asn0), ("beta", 1, exact.beta, exact.asn1)):
        dec, stop, _ = run_trials(sc, theta, thr, v.trials, cfg.seed, workers=workers)
        pe = plain_error_from_decisions(dec, 1 - theta)
        ie = importance_sampled_error(sc, thr, v.is_trials, cfg.seed, name, workers=workers)
        rows.append(
            {
                "quantity": name,
                "oracle": exact_p,
                "plain": pe.value,
                "plain_se": pe.stderr,
                "z_plain": _z(pe.value, pe.stderr, exact_p),
                "importance": ie.value,
                "importance_se": ie.stderr,
                "z_importance": _z(ie.value, ie.stderr, exact_p),
            }
        )
        t = stop[dec >= 0].astype(float)
        mean, se = float(t.mean()), float(t.std(ddof=1) / math.sqrt(t.size))
        asn.append(
            {
                "quantity": f"asn{theta}",
                "oracle": exact_t,
                "plain": mean,
                "plain_se": se,
                "z_plain": _z(mean, se, exact_t),
                "importance": math.nan,
                "importance_se": math.nan,
                "z_importance": math.nan,
            }
        )
    return rows + asn


VALIDATE_COLUMNS = ["quantity", "oracle", "plain", "plain_se", "z_plain", "importance", "importance_se", "z_importance"]


def _run_validate(cfg: ExperimentConfig, workers: int):
    table = validation_table(cfg, workers)
    worst = max(abs(r[k]) for r in table for k in ("z_plain", "z_importance") if not math.isnan(r[k]))
    rows = [{k: (r[k] if isinstance(r[k], str) else _num(r[k])) for k in VALIDATE_COLUMNS} for r in table]
    return rows, VALIDATE_COLUMNS, {"max_abs_z": worst, "passed": worst <= Z_LIMIT}


def _print_validation(rows: list[dict]) -> None:
    print(f"{'quantity':<9}{'oracle':>14}{'plain':>14}{'z':>8}{'importance':>14}{'z':>8}")
    for r in rows:
        f = {k: float(r[k]) for k in VALIDATE_COLUMNS[1:]}
        print(
            f"{r['quantity']:<9}{f['oracle']:>14.6g}{f['plain']:>14.6g}{f['z_plain']:>8.2f}"
            f"{f['importance']:>14.6g}{f['z_importance']:>8.2f}"
        )


_RUNNERS = {
    "operating-point": _run_sweep,
    "gamma-sweep": _run_sweep,
    "sandwich": _run_sandwich,
    "unknown-c": _run_unknown_c,
    "validate": _run_validate,
}


def execute(cfg: ExperimentConfig, workers: int = 1) -> tuple[Path, dict]:
    """Run the configured experiment and write ``results.csv`` and ``summary.json``."""
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    rows, columns, extra = _RUNNERS[cfg.experiment](cfg, workers)
    if not columns:
        columns = CSV_COLUMNS
    columns = columns + ["config_hash"]
    for r in rows:
        r["config_hash"] = cfg.config_hash
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", rows, columns)
    summary = {
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "config_source": cfg.source,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "version": __version__,
        "started_utc": started.isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": time.perf_counter() - t0,
        "workers": workers,
        **extra,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n", encoding="utf-8")
    return out, {"rows": rows, **extra}


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed, args.trials, args.output_dir)
    out, res = execute(cfg, args.threads)
    print(f"wrote {out / 'results.csv'} and {out / 'summary.json'}")
    if cfg.experiment == "validate":
        _print_validation(res["rows"])
        if not res["passed"]:
            raise EstimationError(f"validation failed: max |z| = {res['max_abs_z']:.2f} > {Z_LIMIT}")
    return 0


def cmd_validate(args) -> int:
    args_dict = dict(seed=args.seed, trials=args.trials, output_dir=args.output_dir, experiment="validate")
    cfg = load_config(args.config, **args_dict)
    out, res = execute(cfg, args.threads)
    _print_validation(res["rows"])
    print(f"max |z| = {res['max_abs_z']:.2f} (limit {Z_LIMIT})")
    if not res["passed"]:
        raise EstimationError(f"validation failed: max |z| = {res['max_abs_z']:.2f} > {Z_LIMIT}")
    return 0


def cmd_info(args) -> int:
    raw, _ = read_raw(args.config)
    if not isinstance(raw.get("model"), dict):
        raise ConfigError("missing [model] table")
    model = model_from_config(raw["model"])
    ic = info_constants(model)
    w, _ = chernoff_minimizer(model)
    print(f"model    {model}")
    print(f"I0       {ic.I0:.10g}")
    print(f"I1       {ic.I1:.10g}")
    print(f"I        {ic.I:.10g}")
    print(f"I_tilde  {ic.I_tilde:.10g}  (minimiser w = {w:.6g})")
    s = raw.get("detector", {}).get("sensors")
    c = raw.get("attack", {}).get("c", 0)
    if isinstance(s, int) and isinstance(c, int):
        print(f"s = {s}, c = {c}: predicted equilibrium gamma (s - 2c) I = {(s - 2 * c) * ic.I:.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzsprt", description="Sequential detection under Byzantine attacks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, overrides=True):
        sp.add_argument("--config", required=True, help="config file path or shipped preset name")
        if overrides:
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--trials", type=int, default=None)
            sp.add_argument("--output-dir", default=None)
            sp.add_argument("--threads", type=int, default=1, help="worker processes (0 = one per CPU)")

    common(sub.add_parser("run", help="run the configured experiment"))
    common(sub.add_parser("info", help="print information constants"), overrides=False)
    common(sub.add_parser("validate", help="compare estimators against the exact oracle"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return ConfigError.exit_code
    handler = {"run": cmd_run, "info": cmd_info, "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except ByzSPRTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
