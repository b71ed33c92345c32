"""Reproducible experiment runner.

``countproc run config.json`` parses a single JSON experiment description,
dispatches to the simulation/estimation modules, writes CSV (and NDJSON
for raw paths) artifacts, prints one PASS/FAIL line per check, and exits 0
only when every check passes.  ``countproc validate config.json`` reports
schema problems with field paths and has no side effects.

Identical config and seed produce byte-identical artifacts; every CSV row
carries the spec hash, seed, replication count and thread count needed to
re-run it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import asymptotics, decomposition, renewal_solver
from .lifetimes import LifetimeDistribution
from .processes import (
    Delayed,
    EventCapExceeded,
    Modulated,
    Plain,
    ProcessSpec,
    StationaryMA,
    child_rng,
    simulate_path,
    spec_from_json,
    write_events_ndjson,
)

__all__ = ["ExperimentConfig", "main", "run", "validate_config"]

_TOP_FIELDS = {"experiment", "spec", "t", "h", "v", "n", "reps", "step", "horizon", "seed", "out", "threads"}

_REQUIRED: dict[str, set[str]] = {
    "simulate": {"horizon"},
    "decompose": {"horizon", "reps"},
    "blackwell": {"t", "h", "reps"},
    "rate": {"t", "reps"},
    "residual-law": {"t", "reps"},
    "variance": {"t", "reps"},
    "rm-cross": {"t", "reps"},
    "renewal-solve": {"horizon", "step"},
    "sgibnev": {"t", "step"},
    "modulated": {"t", "h", "reps"},
    "palm": {"t", "h", "reps"},
    "diffusion": {"n", "t", "reps"},
}

_POSITIVE_KNOBS = ("t", "h", "v", "n", "reps", "step", "horizon")

_CSV_HEADER = (
    "experiment,spec_hash,t,h,v,n,reps,threads,estimate,se,target,z,seed,flags\n"
)


@dataclass
class ExperimentConfig:
    experiment: str
    spec: ProcessSpec
    spec_json: dict
    seed: int
    out: Path
    threads: int
    knobs: dict[str, float]

    @property
    def spec_hash(self) -> str:
        canon = json.dumps(self.spec_json, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def validate_config(obj: Mapping) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse and validate a config mapping; returns (config, error list)."""
    errors: list[str] = []
    if not isinstance(obj, Mapping):
        return None, ["config must be a JSON object"]
    unknown = set(obj) - _TOP_FIELDS
    for f in sorted(unknown):
        errors.append(f"{f}: unknown field")
    kind = obj.get("experiment")
    if kind not in _REQUIRED:
        errors.append(
            f"experiment: must be one of {sorted(_REQUIRED)}, got {kind!r}"
        )
        return None, errors
    if "spec" not in obj:
        errors.append("spec: missing")
        return None, errors
    try:
        spec = spec_from_json(obj["spec"])
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"spec: {exc}")
        return None, errors

    knobs: dict[str, float] = {}
    for name in _POSITIVE_KNOBS:
        if name in obj:
            val = obj[name]
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                errors.append(f"{name}: must be a number, got {val!r}")
                continue
            if not val > 0:
                errors.append(f"{name}: must be positive, got {val}")
                continue
            knobs[name] = float(val)
    missing = _REQUIRED[kind] - set(knobs)
    for name in sorted(missing):
        errors.append(f"{name}: required for experiment {kind!r}")

    if kind == "modulated" and not isinstance(spec, Modulated):
        errors.append("spec: experiment 'modulated' needs a modulated spec")
    if kind == "palm" and not isinstance(spec, StationaryMA):
        errors.append("spec: experiment 'palm' needs a stationary_ma spec")
    if kind in ("variance", "rm-cross", "diffusion") and not isinstance(spec, Plain):
        errors.append(f"spec: experiment {kind!r} needs a plain spec")

    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0 or seed >= 1 << 64:
        errors.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
        seed = 0
    threads = obj.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        errors.append(f"threads: must be a positive integer, got {threads!r}")
        threads = 1
    out = obj.get("out", os.environ.get("COUNTPROC_OUT", "."))
    if not isinstance(out, str):
        errors.append(f"out: must be a string path, got {out!r}")
        out = "."

    if errors:
        return None, errors
    return (
        ExperimentConfig(
            experiment=kind,
            spec=spec,
            spec_json=dict(obj["spec"]),
            seed=seed,
            out=Path(out),
            threads=threads,
            knobs=knobs,
        ),
        [],
    )


# ---------------------------------------------------------------------------
# Experiment implementations
# ---------------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _row(
    cfg: ExperimentConfig,
    estimate: float,
    se: float,
    target: float | None,
    flags: tuple[str, ...] = (),
    **knobs,
) -> dict:
    z = None
    if target is not None:
        z = 0.0 if se == 0 and estimate == target else (
            abs(estimate - target) / se if se > 0 else math.inf
        )
    return {
        "experiment": cfg.experiment,
        "spec_hash": cfg.spec_hash,
        "t": knobs.get("t"),
        "h": knobs.get("h"),
        "v": knobs.get("v"),
        "n": knobs.get("n"),
        "reps": knobs.get("reps"),
        "threads": cfg.threads,
        "estimate": estimate,
        "se": se,
        "target": target,
        "z": z,
        "seed": cfg.seed,
        "flags": ";".join(flags),
    }


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w") as fp:
        fp.write(_CSV_HEADER)
        for r in rows:
            fp.write(
                f"{r['experiment']},{r['spec_hash']},{_fmt(r['t'])},{_fmt(r['h'])},"
                f"{_fmt(r['v'])},{_fmt(r['n'])},{int(r['reps']) if r['reps'] else ''},"
                f"{r['threads']},{_fmt(r['estimate'])},{_fmt(r['se'])},"
                f"{_fmt(r['target'])},{_fmt(r['z'])},{r['seed']},{r['flags']}\n"
            )


def _est_check(name: str, est: asymptotics.Estimate, target: float, z_max: float = 4.0) -> Check:
    z = est.z_against(target)
    return Check(
        name=name,
        passed=bool(z <= z_max),
        detail=f"estimate={est.value:.6g} target={target:.6g} z={z:.2f} (se={est.se:.3g})",
    )


def _run_simulate(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    horizon = cfg.knobs["horizon"]
    path = simulate_path(cfg.spec, horizon, child_rng(cfg.seed, 0))
    out_file = cfg.out / "path.ndjson"
    with open(out_file, "w") as fp:
        write_events_ndjson(path, fp)
    ok = bool(np.all(np.diff(path.events) > 0) and path.events[-1] > horizon)
    rows = [_row(cfg, estimate=float(path.events.size), se=0.0, target=None, reps=1)]
    return rows, [Check("simulate", ok, f"{path.events.size} events -> {out_file}")]


def _run_decompose(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    horizon = cfg.knobs["horizon"]
    n_paths = int(cfg.knobs["reps"])
    v = cfg.knobs.get("v")
    rate = asymptotics.spec_rate(cfg.spec)
    mean_gap = 1.0 / rate
    sigma2 = cfg.spec.lifetime.variance if isinstance(cfg.spec, (Plain, Delayed)) else None
    ts = np.linspace(horizon / 100, horizon, 100)

    worst = 0.0
    worst_trunc = 0.0
    oracle = decomposition.ConditionalMeanOracle(cfg.spec)
    reports = None
    for i in range(n_paths):
        path = simulate_path(cfg.spec, horizon, child_rng(cfg.seed, i))
        res = decomposition.decomposition_residual(path, rate, ts)
        tol = decomposition.tolerance_for(decomposition.count(path, ts))
        worst = max(worst, float(np.max(np.abs(res) / tol)))
        if v is not None:
            tres = decomposition.truncated_decomposition_residual(path, oracle, v, ts)
            worst_trunc = max(worst_trunc, float(np.max(np.abs(tres) / tol)))
        if reports is None:
            reports = decomposition.build_reports(path, rate, mean_gap, sigma2, ts)
    with open(cfg.out / "decomposition.csv", "w") as fp:
        decomposition.reports_to_csv(reports, fp)
    checks = [
        Check(
            "decompose-identity",
            worst <= 1.0,
            f"max |residual|/tolerance = {worst:.3g} over {n_paths} paths",
        )
    ]
    rows = [_row(cfg, estimate=worst, se=0.0, target=0.0, reps=n_paths)]
    if v is not None:
        checks.append(
            Check(
                "decompose-truncated",
                worst_trunc <= 1.0,
                f"max |residual|/tolerance = {worst_trunc:.3g} at v={v}",
            )
        )
        rows.append(_row(cfg, estimate=worst_trunc, se=0.0, target=0.0, v=v, reps=n_paths))
    return rows, checks


def _run_blackwell(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, h, reps = cfg.knobs["t"], cfg.knobs["h"], int(cfg.knobs["reps"])
    est = asymptotics.estimate_blackwell(cfg.spec, t, h, reps, cfg.seed, cfg.threads)
    target = asymptotics.spec_rate(cfg.spec) * h
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, h=h, reps=reps)]
    if est.flags:
        # lattice laws legitimately miss the limit; report without failing
        check = Check("blackwell", True, f"estimate={est.value:.6g} [{est.flags[0]}]")
    else:
        check = _est_check("blackwell", est, target)
    return rows, [check]


def _run_rate(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, reps = cfg.knobs["t"], int(cfg.knobs["reps"])
    est = asymptotics.estimate_rate(cfg.spec, t, reps, cfg.seed, cfg.threads)
    rate = asymptotics.spec_rate(cfg.spec)
    # finite-t mean of N(t)/t includes the origin event for non-delayed kinds
    target = rate + (0.0 if isinstance(cfg.spec, Delayed) else 1.0 / t)
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, reps=reps)]
    return rows, [_est_check("rate", est, target)]


def _run_residual_law(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, reps = cfg.knobs["t"], int(cfg.knobs["reps"])
    ks = asymptotics.residual_limit_ks(cfg.spec, t, reps, cfg.seed, cfg.threads)
    rows = [_row(cfg, ks.statistic, 0.0, None, t=t, reps=reps)]
    return rows, [
        Check(
            "residual-law",
            ks.passed,
            f"KS={ks.statistic:.4f} threshold={ks.threshold:.4f}",
        )
    ]


def _run_variance(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, reps = cfg.knobs["t"], int(cfg.knobs["reps"])
    lifetime = cfg.spec.lifetime
    if math.isinf(lifetime.moment(3)):
        ladder = [t / 4, t / 2, t]
        out = asymptotics.variance_drift_ratios(cfg.spec, ladder, reps, cfg.seed, cfg.threads)
        rows = [
            _row(cfg, est.value, est.se, None, est.flags, t=tt, reps=reps)
            for tt, est, _ in out
        ]
        ratios = [ratio for _, _, ratio in out]
        spread = max(ratios) / max(min(ratios), 1e-300)
        return rows, [
            Check(
                "variance-order-bound",
                spread <= 3.0,
                f"normalized drift ratios {['%.3g' % r for r in ratios]} spread={spread:.2f}",
            )
        ]
    est = asymptotics.estimate_variance_drift(cfg.spec, t, reps, cfg.seed, cfg.threads)
    target = asymptotics.smith_constant(lifetime)
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, reps=reps)]
    return rows, [_est_check("variance-drift", est, target)]


def _run_rm_cross(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, reps = cfg.knobs["t"], int(cfg.knobs["reps"])
    est = asymptotics.estimate_rm_cross(cfg.spec, t, reps, cfg.seed, cfg.threads)
    target = asymptotics.rm_cross_limit(cfg.spec.lifetime)
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, reps=reps)]
    if est.flags:
        return rows, [Check("rm-cross", True, f"estimate={est.value:.6g} [{est.flags[0]}]")]
    return rows, [_est_check("rm-cross", est, target)]


def _run_renewal_solve(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    horizon, step = cfg.knobs["horizon"], cfg.knobs["step"]
    dist = cfg.spec.lifetime if isinstance(cfg.spec, (Plain, Delayed)) else None
    if dist is None:
        raise ValueError("renewal-solve needs a plain or delayed spec")
    gen = renewal_solver.GridFunction.from_callable(lambda u: np.ones_like(u), horizon, step)
    sol = renewal_solver.solve_renewal_equation(gen, dist)
    with open(cfg.out / "renewal_solution.csv", "w") as fp:
        sol.to_csv(fp)
    from .lifetimes import Exponential

    if isinstance(dist, Exponential):
        exact = 1.0 + dist.rate * sol.times
        err = float(np.max(np.abs(sol.values - exact)))
        tol = 5.0 * step
        check = Check("renewal-solve", err <= tol, f"sup error {err:.3g} vs closed form (tol {tol:.3g})")
        rows = [_row(cfg, err, 0.0, 0.0, reps=1, t=horizon)]
    else:
        half = renewal_solver.solve_renewal_equation(
            renewal_solver.GridFunction.from_callable(lambda u: np.ones_like(u), horizon, step / 2),
            dist,
        )
        diff = float(np.max(np.abs(half.values[::2] - sol.values)))
        check = Check("renewal-solve", True, f"grid halving changes solution by {diff:.3g}")
        rows = [_row(cfg, diff, 0.0, None, reps=1, t=horizon)]
    return rows, [check]


def _run_sgibnev(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, step = cfg.knobs["t"], cfg.knobs["step"]
    dist = cfg.spec.lifetime if isinstance(cfg.spec, (Plain, Delayed)) else None
    if dist is None:
        raise ValueError("sgibnev needs a plain or delayed spec")
    grid = renewal_solver.solve_residual_mean(dist, t, step)
    asym = renewal_solver.sgibnev_asymptote(dist, t)
    ratio = float(grid.values[-1]) / asym
    rows = [_row(cfg, ratio, 0.0, 1.0, t=t, reps=1)]
    return rows, [
        Check("sgibnev", 0.9 <= ratio <= 1.1, f"E[R({t:g})]/asymptote = {ratio:.4f}")
    ]


def _run_modulated(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, h, reps = cfg.knobs["t"], cfg.knobs["h"], int(cfg.knobs["reps"])
    est = asymptotics.estimate_blackwell(cfg.spec, t, h, reps, cfg.seed, cfg.threads)
    target = asymptotics.modulated_rate(cfg.spec) * h
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, h=h, reps=reps)]
    return rows, [_est_check("modulated", est, target)]


def _run_palm(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    t, h, reps = cfg.knobs["t"], cfg.knobs["h"], int(cfg.knobs["reps"])
    est = asymptotics.estimate_blackwell(cfg.spec, t, h, reps, cfg.seed, cfg.threads)
    target = asymptotics.spec_rate(cfg.spec) * h
    rows = [_row(cfg, est.value, est.se, target, est.flags, t=t, h=h, reps=reps)]
    return rows, [_est_check("palm", est, target)]


def _run_diffusion(cfg: ExperimentConfig) -> tuple[list[dict], list[Check]]:
    n, t, reps = int(cfg.knobs["n"]), cfg.knobs["t"], int(cfg.knobs["reps"])
    res = asymptotics.diffusion_scaling(cfg.spec, n, t, reps, cfg.seed, cfg.threads)
    rows = [
        _row(cfg, res.variance.value, res.variance.se, res.variance_target, n=n, t=t, reps=reps),
        _row(cfg, res.scaled_residual_mean.value, res.scaled_residual_mean.se, 0.0, n=n, t=t, reps=reps),
    ]
    rel = abs(res.variance.value - res.variance_target) / res.variance_target
    checks = [
        Check(
            "diffusion-variance",
            rel <= 0.10,
            f"variance={res.variance.value:.4f} target={res.variance_target:.4f} rel={rel:.3f}",
        ),
        _est_check("diffusion-mean", res.scaled_count_mean, 0.0),
    ]
    return rows, checks


_RUNNERS: dict[str, Callable[[ExperimentConfig], tuple[list[dict], list[Check]]]] = {
    "simulate": _run_simulate,
    "decompose": _run_decompose,
    "blackwell": _run_blackwell,
    "rate": _run_rate,
    "residual-law": _run_residual_law,
    "variance": _run_variance,
    "rm-cross": _run_rm_cross,
    "renewal-solve": _run_renewal_solve,
    "sgibnev": _run_sgibnev,
    "modulated": _run_modulated,
    "palm": _run_palm,
    "diffusion": _run_diffusion,
}


def run(cfg: ExperimentConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        rows, checks = _RUNNERS[cfg.experiment](cfg)
    except EventCapExceeded as exc:
        print(f"FAIL {cfg.experiment}: {exc}")
        return 3
    _write_rows(cfg.out / f"{cfg.experiment}.csv", rows)
    ok = True
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        ok = ok and check.passed
        print(f"{status} {check.name}: {check.detail}")
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="countproc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--reps", type=int, default=None)
    p_run.add_argument("--out", type=str, default=None)
    p_run.add_argument("--threads", type=int, default=None)

    p_val = sub.add_parser("validate", help="check a JSON config without running it")
    p_val.add_argument("config", type=Path)

    args = parser.parse_args(argv)
    try:
        with open(args.config) as fp:
            obj = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if not isinstance(obj, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return 2

    if args.command == "run":
        for knob in ("seed", "reps", "out", "threads"):
            val = getattr(args, knob)
            if val is not None:
                obj[knob] = val
    cfg, errors = validate_config(obj)
    if errors:
        for e in errors:
            print(f"invalid: {e}", file=sys.stderr)
        return 2
    if args.command == "validate":
        resolved = dict(obj)
        resolved.setdefault("seed", cfg.seed)
        resolved.setdefault("threads", cfg.threads)
        resolved.setdefault("out", str(cfg.out))
        print("ok")
        print(json.dumps(resolved, sort_keys=True, indent=2))
        return 0
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
