"""Command-line experiment runner.

Each experiment writes ``summary.json``, ``manifest.json`` and CSV files into
the output directory.  Files are produced in a scratch directory and moved
into place only when the experiment succeeds.

Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import platform
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import _kernels, fem
from .config import EXPERIMENTS, ExperimentConfig, load_config, parse_config
from .errors import ConfigError, SolverError
from .estimators import (
    RateParams,
    allocate_samples,
    calibrate_costs,
    constraint_value,
    continuous_allocation,
    convergence_study,
    estimate_rates,
    fit_loglog,
    level_sizes,
    mc_error_study,
    mc_estimate,
    mlmc_error_study,
    mlmc_estimate,
    power_law_costs,
    rates_from_data,
)
from .mesh import MeshHierarchy
from .ocp import solve_pathwise
from .randfield import draw_sample

__all__ = ["main", "run", "run_config", "EXIT_OK", "EXIT_SOLVER", "EXIT_CONFIG"]

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

FIT_HEADER = ["quantity", "slope", "intercept", "r2"]
RESIDUAL_HEADER = ["quantity", "x", "y", "fitted", "residual"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Writer:
    def __init__(self, directory: Path):
        self.dir = directory

    def csv(self, name: str, header, rows) -> None:
        with open(self.dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def json(self, name: str, data: dict) -> None:
        with open(self.dir / name, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def fits(self, fits: dict) -> None:
        """``fit.csv`` and ``fit_residuals.csv`` for named log-log fits."""
        rows, res = [], []
        for name, f in fits.items():
            if f is None:
                rows.append([name, "nan", "nan", "nan"])
                continue
            rows.append([name, f.slope, f.intercept, f.r2])
            fitted = f.predict(f.x)
            for x, y, yf, r in zip(f.x, f.y, fitted, f.residuals()):
                res.append([name, x, y, yf, r])
        self.csv("fit.csv", FIT_HEADER, rows)
        self.csv("fit_residuals.csv", RESIDUAL_HEADER, res)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _fit_dict(f):
    return None if f is None else {"slope": f.slope, "intercept": f.intercept, "r2": f.r2}


def _cost(cfg: ExperimentConfig, seconds: float, work: float) -> float:
    return float(work) if cfg["cost.mode"] == "work" else float(seconds)


def _cost_unit(cfg: ExperimentConfig) -> str:
    return "lu_nonzeros" if cfg["cost.mode"] == "work" else "seconds"


# --- experiments ---------------------------------------------------------------


def _pathwise(cfg: ExperimentConfig, out: _Writer) -> dict:
    level = cfg["pathwise.level"]
    if level < 0:
        raise ConfigError("pathwise.level must be non-negative")
    mesh = MeshHierarchy.build(level, coarsest=level)[0]
    sample = draw_sample(cfg.seed, cfg["pathwise.sample_id"], 0, cfg.basis())
    sol = solve_pathwise(mesh, sample, cfg.ocp())
    pts = mesh.vertices[mesh.interior_vertices]
    out.csv("pathwise.csv", ["x1", "x2", "u", "y", "p"], zip(pts[:, 0], pts[:, 1], sol.u, sol.y, sol.p))
    return {
        "level": level,
        "h": mesh.h,
        "N": mesh.n_interior,
        "cost_value": sol.cost_value,
        "u_norm": fem.l2_norm(mesh, sol.u),
        "u_min": float(sol.u.min()),
        "u_max": float(sol.u.max()),
        "newton_iters": sol.newton_iters,
        "residual": sol.residual,
        "active_fraction": sol.active_fraction,
    }


def _convergence(cfg: ExperimentConfig, out: _Writer) -> dict:
    levels, ref = cfg["convergence.levels"], cfg["convergence.reference"]
    if not levels or max(levels) >= ref or min(levels) < 0:
        raise ConfigError("convergence.levels must be non-negative and below convergence.reference")
    H = MeshHierarchy.build(ref)
    rows = convergence_study(H, cfg.ocp(), cfg["convergence.M"], levels, ref, cfg.seed, basis=cfg.basis())
    cost = [_cost(cfg, r.cost_mean_s, r.work_mean) for r in rows]
    out.csv(
        "convergence.csv",
        ["level", "h", "N", "err_l2", "cost_mean_s"],
        [[r.level, r.h, r.N, r.err_l2, c] for r, c in zip(rows, cost)],
    )
    err_fit = fit_loglog([r.h for r in rows], [r.err_l2 for r in rows])
    cost_fit = fit_loglog([r.N for r in rows], cost)
    out.fits({"err_l2_vs_h": err_fit, "cost_vs_N": cost_fit})
    return {
        "M": cfg["convergence.M"],
        "levels": list(levels),
        "reference": ref,
        "err_slope": None if err_fit is None else err_fit.slope,
        "cost_slope_N": None if cost_fit is None else cost_fit.slope,
        "cost_unit": _cost_unit(cfg),
        "degenerate": err_fit is None,
    }


def _rates(cfg: ExperimentConfig, out: _Writer) -> dict:
    levels, ref = cfg["rates.levels"], cfg["rates.reference"]
    if not levels or max(levels) >= ref:
        raise ConfigError("rates.levels must lie below rates.reference")
    est = _estimate_rates(cfg)
    out.csv(
        "convergence.csv",
        ["level", "h", "N", "err_l2", "cost_mean_s"],
        [[r.level, r.h, r.N, r.err_l2, _cost(cfg, r.cost_mean_s, r.work_mean)] for r in est.rows],
    )
    fits = {"err_l2_vs_h": est.error_fit, "cost_vs_h": est.cost_fit, "cost_vs_N": est.cost_fit_dofs}
    out.csv(
        "rates.csv",
        FIT_HEADER,
        [[k, f.slope, f.intercept, f.r2] if f else [k, "nan", "nan", "nan"] for k, f in fits.items()],
    )
    out.fits(fits)
    return {
        "s": est.s,
        "gamma": est.gamma,
        "gamma_from_N": None if est.cost_fit_dofs is None else 2 * est.cost_fit_dofs.slope,
        "degenerate": est.degenerate,
        "cost_unit": _cost_unit(cfg),
    }


def _estimate_rates(cfg: ExperimentConfig):
    levels, ref = cfg["rates.levels"], cfg["rates.reference"]
    H = MeshHierarchy.build(ref)
    est = estimate_rates(H, cfg.ocp(), cfg["rates.pilot_M"], levels, cfg.seed, ref, basis=cfg.basis())
    if cfg["cost.mode"] == "work":
        rows = est.rows
        est = rates_from_data([r.h for r in rows], [r.err_l2 for r in rows], [r.work_mean for r in rows], [r.N for r in rows])
        est.rows = rows
    return est


def _mc(cfg: ExperimentConfig, out: _Writer) -> dict:
    level, M = cfg["mc.level"], cfg["mc.M"]
    if level < 0 or M < 1:
        raise ConfigError("mc.level must be >= 0 and mc.M >= 1")
    H = MeshHierarchy.build(level)
    ocp, basis = cfg.ocp(), cfg.basis()
    res = mc_estimate(H, level, M, ocp, cfg.seed, cfg.workers, basis=basis)
    mesh = H[level]
    pts = mesh.vertices[mesh.interior_vertices]
    out.csv("mc.csv", ["x1", "x2", "mean"], zip(pts[:, 0], pts[:, 1], res.mean))
    summary = {
        "level": level,
        "M": M,
        "mean_norm": fem.l2_norm(mesh, res.mean),
        "norm_variance": res.variance,
        "mean_sq_norm": res.mean_sq_norm,
        "total_cost": _cost(cfg, res.cost, res.work),
        "cost_unit": _cost_unit(cfg),
        "bound_violation": res.bound_violation,
    }
    Ms = cfg["mc.study_M"]
    if Ms:
        rows = mc_error_study(
            H, level, ocp, Ms, cfg["mc.replications"], cfg["mc.reference_M"], cfg.seed, cfg.workers, basis
        )
        out.csv("mc_study.csv", ["M", "rms_error"], [[r.M, r.rms_error] for r in rows])
        f = fit_loglog([r.M for r in rows], [r.rms_error for r in rows])
        out.fits({"rms_error_vs_M": f})
        summary["study_slope"] = None if f is None else f.slope
    return summary


def _level_costs(cfg: ExperimentConfig, H: MeshHierarchy, n: int, gamma: float) -> np.ndarray:
    spec = cfg["mlmc.costs"]
    if spec == "power_law":
        return power_law_costs(n - 1, H.h0, gamma)
    if spec in ("measured", "work"):
        return calibrate_costs(
            H, cfg.ocp(), range(n), cfg["mlmc.pilot_M"], cfg.seed, cfg.basis(),
            measure="seconds" if spec == "measured" else "work",
        )
    costs = np.asarray(spec, dtype=float)
    if len(costs) < n:
        raise ConfigError(f"mlmc.costs lists {len(costs)} levels, {n} needed")
    return costs[:n]


def _rate_params(cfg: ExperimentConfig) -> RateParams:
    gamma = cfg["mlmc.gamma"]
    if gamma == "auto":
        est = _estimate_rates(cfg)
        if est.gamma is None or est.gamma <= 0:
            raise ConfigError("automatic gamma estimate failed")
        gamma = est.gamma
    try:
        return RateParams(s=cfg["mlmc.s"], t=cfg["mlmc.t"], gamma=gamma, c0=cfg["mlmc.c0"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mlmc(cfg: ExperimentConfig, out: _Writer) -> dict:
    L, base = cfg["mlmc.L"], cfg["mlmc.h0_level"]
    study = cfg["mlmc.study_L"]
    L_ref = cfg["mlmc.reference_L"]
    if L < 0 or base < 0:
        raise ConfigError("mlmc.L and mlmc.h0_level must be non-negative")
    if study and (max(study) >= L_ref or min(study) < 0):
        raise ConfigError("mlmc.study_L must lie below mlmc.reference_L")
    top = max(L, L_ref) if study else L
    H = MeshHierarchy.build(base + top, coarsest=base)
    rates = _rate_params(cfg)
    costs = _level_costs(cfg, H, top + 1, rates.gamma)
    ocp, basis = cfg.ocp(), cfg.basis()
    plans = allocate_samples(L, rates, costs[: L + 1], H.h0, cfg["mlmc.sample_scale"])
    res = mlmc_estimate(H, plans, ocp, cfg.seed, cfg.workers, cfg["mlmc.coupled_streams"], basis)
    out.csv(
        "mlmc.csv",
        ["level", "h", "M", "corr_mean_norm", "corr_var", "cost_s"],
        [[s.level, s.h, s.M, s.corr_mean_norm, s.corr_var, _cost(cfg, s.cost, s.work)] for s in res.per_level],
    )
    summary = {
        "L": L,
        "h0": H.h0,
        "M": [p.M for p in plans],
        "rates": {"s": rates.s, "t": rates.t, "gamma": rates.gamma, "c0": rates.c0},
        "total_cost": _cost(cfg, res.total_cost, res.total_work),
        "cost_unit": _cost_unit(cfg),
        "mean_norm": fem.l2_norm(H[L], res.mean),
        "bound_violation": res.bound_violation,
        "constraint": constraint_value([p.M for p in plans], level_sizes(L, H.h0), rates.s),
        "budget": rates.c0 * H[L].h ** (2 * rates.s),
        "sample_scale": cfg["mlmc.sample_scale"],
    }
    if cfg["mlmc.costs"] != "measured":
        summary["level_costs"] = list(costs)
    if study:
        rows = mlmc_error_study(
            H, ocp, rates, costs, study, L_ref, cfg.seed, cfg["mlmc.sample_scale"],
            cfg["mlmc.replications"], cfg.workers, basis,
        )
        cost = [_cost(cfg, r.mean_cost, r.mean_work) for r in rows]
        out.csv(
            "mlmc_study.csv",
            ["L", "h", "N", "M_total", "rms_error", "cost_s"],
            [[r.L, r.h, r.N, sum(r.M), r.rms_error, c] for r, c in zip(rows, cost)],
        )
        err_fit = fit_loglog([r.h for r in rows], [r.rms_error for r in rows])
        cost_fit = fit_loglog([r.N for r in rows], cost)
        out.fits({"rms_error_vs_h": err_fit, "cost_vs_N": cost_fit})
        summary["study"] = {"err_fit": _fit_dict(err_fit), "cost_fit_N": _fit_dict(cost_fit)}
    return summary


def _allocate(cfg: ExperimentConfig, out: _Writer) -> dict:
    L, base = cfg["allocate.L"], cfg["mlmc.h0_level"]
    if L < 0:
        raise ConfigError("allocate.L must be non-negative")
    rates = _rate_params(cfg)
    h0 = 2.0**-base
    needs_solves = cfg["mlmc.costs"] in ("measured", "work")
    H = MeshHierarchy.build(base + L, coarsest=base) if needs_solves else None
    costs = power_law_costs(L, h0, rates.gamma) if cfg["mlmc.costs"] == "power_law" else _level_costs(cfg, H, L + 1, rates.gamma)
    cont = continuous_allocation(L, rates, costs, h0)
    plans = allocate_samples(L, rates, costs, h0)
    ratios = [cont[l] / cont[l + 1] for l in range(L)] + [float("nan")]
    out.csv(
        "allocation.csv",
        ["level", "h", "M", "M_continuous", "cost_per_sample", "ratio"],
        [[p.level, p.h, p.M, c, p.cost_per_sample, r] for p, c, r in zip(plans, cont, ratios)],
    )
    h = level_sizes(L, h0)
    return {
        "L": L,
        "h0": h0,
        "M": [p.M for p in plans],
        "ratios": ratios[:-1],
        "constraint": constraint_value([p.M for p in plans], h, rates.s),
        "budget": rates.c0 * h[-1] ** (2 * rates.s),
        "rates": {"s": rates.s, "t": rates.t, "gamma": rates.gamma, "c0": rates.c0},
    }


_RUNNERS = {
    "pathwise": _pathwise,
    "convergence": _convergence,
    "rates": _rates,
    "mc": _mc,
    "mlmc": _mlmc,
    "allocate": _allocate,
}


def _manifest(cfg: ExperimentConfig) -> dict:
    from importlib import metadata

    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "experiment": cfg.experiment,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "kernel_backend": _kernels.BACKEND,
        "versions": {
            "package": version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def run_config(cfg: ExperimentConfig) -> int:
    """Run a resolved configuration; returns the exit code."""
    out_dir = cfg.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    except OSError as exc:
        print(f"config error: output directory {out_dir} not writable: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = EXIT_OK
    try:
        writer = _Writer(scratch)
        summary = _RUNNERS[cfg.experiment](cfg, writer)
        summary = {"experiment": cfg.experiment, "seed": cfg.seed, **summary}
        writer.json("summary.json", summary)
        writer.json("manifest.json", _manifest(cfg))
        for f in sorted(scratch.iterdir()):
            os.replace(f, out_dir / f.name)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return code


def run(config_path, overrides: dict | None = None) -> int:
    """Load ``config_path`` and run it; returns the exit code."""
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_config(cfg)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file (key = value, dotted keys)")
    common.add_argument("--seed", type=int, help="master seed, overrides seed.master")
    common.add_argument("--out", type=Path, help="output directory, overrides out_dir")
    common.add_argument("--threads", help="worker processes (integer or 'auto')")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key"
    )
    parser = argparse.ArgumentParser(prog="mlmc-ocp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the experiment named in the config")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"config error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        overrides[key.strip()] = value
    if args.command != "run":
        overrides["experiment"] = args.command
    elif args.config is None:
        print("config error: 'run' needs --config", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        overrides["seed.master"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        cfg = load_config(args.config, overrides) if args.config else parse_config("", overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_config(cfg)


if __name__ == "__main__":
    sys.exit(main())
