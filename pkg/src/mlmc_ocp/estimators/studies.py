"""Self-convergence studies of the MC and MLMC estimators."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import fem
from ..mesh import MeshHierarchy, prolong
from ..ocp import OCPConfig, solve_pathwise
from ..randfield import KLBasis, PAPER_BASIS, draw_sample
from .allocation import RateParams, allocate_samples
from .sampling import mc_estimate, mlmc_estimate, spawn_seeds

__all__ = [
    "calibrate_costs",
    "MCErrorRow",
    "mc_error_study",
    "MLMCErrorRow",
    "mlmc_error_study",
]


def calibrate_costs(
    hierarchy: MeshHierarchy,
    cfg: OCPConfig,
    levels,
    n_pilot: int,
    master_seed: int,
    basis: KLBasis = PAPER_BASIS,
    measure: str = "seconds",
) -> np.ndarray:
    """Median cost of one correction sample per level.

    Level 0 of ``hierarchy`` is a single solve, every finer level a coupled
    fine/coarse pair.  ``measure="seconds"`` times the solves (after a warm-up
    solve that keeps cached patterns out of the timings); ``measure="work"``
    uses the summed LU factor nonzeros, which is deterministic.
    """
    if n_pilot < 1:
        raise ValueError("n_pilot must be positive")
    if measure not in ("seconds", "work"):
        raise ValueError(f"unknown cost measure {measure!r}")
    out = []
    for l in levels:
        warm = draw_sample(master_seed, 0, 1000 + l, basis)
        solve_pathwise(hierarchy[l], warm, cfg)
        if l > 0:
            solve_pathwise(hierarchy[l - 1], warm, cfg)
        times = []
        for i in range(n_pilot):
            sample = draw_sample(master_seed, i + 1, 1000 + l, basis)
            t0 = time.perf_counter()
            work = solve_pathwise(hierarchy[l], sample, cfg).work
            if l > 0:
                work += solve_pathwise(hierarchy[l - 1], sample, cfg).work
            times.append(time.perf_counter() - t0 if measure == "seconds" else work)
        out.append(float(np.median(times)))
    return np.array(out)


@dataclass
class MCErrorRow:
    M: int
    rms_error: float
    mean_cost: float


def mc_error_study(
    hierarchy: MeshHierarchy,
    level: int,
    cfg: OCPConfig,
    Ms,
    replications: int,
    M_ref: int,
    master_seed: int,
    workers: int = 1,
    basis: KLBasis = PAPER_BASIS,
) -> list[MCErrorRow]:
    """RMS over replications of ||E_M - E_ref|| on one level.

    The reference and every replication use independent seeds spawned from
    ``master_seed``.
    """
    seeds = spawn_seeds(master_seed, replications + 1)
    mesh = hierarchy[level]
    ref = mc_estimate(hierarchy, level, M_ref, cfg, seeds[0], workers, basis=basis).mean
    rows = []
    for M in Ms:
        errs, costs = [], []
        for s in seeds[1:]:
            res = mc_estimate(hierarchy, level, M, cfg, s, workers, basis=basis)
            errs.append(fem.l2_norm(mesh, res.mean - ref))
            costs.append(res.cost)
        rows.append(MCErrorRow(int(M), float(np.sqrt(np.mean(np.square(errs)))), float(np.mean(costs))))
    return rows


@dataclass
class MLMCErrorRow:
    L: int
    h: float
    N: int
    M: tuple
    rms_error: float
    mean_cost: float
    mean_work: float


def mlmc_error_study(
    hierarchy: MeshHierarchy,
    cfg: OCPConfig,
    rates: RateParams,
    costs,
    Ls,
    L_ref: int,
    master_seed: int,
    sample_scale: float = 1.0,
    replications: int = 1,
    workers: int = 1,
    basis: KLBasis = PAPER_BASIS,
) -> list[MLMCErrorRow]:
    """||E^L - E^{L_ref}|| for allocator-driven runs, RMS over replications.

    MLMC level ``l`` lives on ``hierarchy[l]``; ``costs[l]`` is the cost of one
    correction sample there.  Errors are measured on the reference mesh.
    """
    costs = np.asarray(costs, dtype=float)
    h0 = hierarchy.h0
    seeds = spawn_seeds(master_seed, replications + 1)
    ref_plans = allocate_samples(L_ref, rates, costs[: L_ref + 1], h0, sample_scale)
    ref = mlmc_estimate(hierarchy, ref_plans, cfg, seeds[0], workers, basis=basis).mean
    ref_mesh = hierarchy[L_ref]
    rows = []
    for L in Ls:
        if L >= L_ref:
            raise ValueError("study levels must be coarser than the reference")
        plans = allocate_samples(L, rates, costs[: L + 1], h0, sample_scale)
        errs, cost, work = [], [], []
        for s in seeds[1:]:
            res = mlmc_estimate(hierarchy, plans, cfg, s, workers, basis=basis)
            errs.append(fem.l2_norm(ref_mesh, prolong(hierarchy, L, L_ref, res.mean) - ref))
            cost.append(res.total_cost)
            work.append(res.total_work)
        rows.append(
            MLMCErrorRow(
                L=L,
                h=hierarchy[L].h,
                N=hierarchy[L].n_interior,
                M=tuple(p.M for p in plans),
                rms_error=float(np.sqrt(np.mean(np.square(errs)))),
                mean_cost=float(np.mean(cost)),
                mean_work=float(np.mean(work)),
            )
        )
    return rows
