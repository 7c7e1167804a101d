"""Empirical estimates of the FE rate s and the cost exponent gamma."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .. import fem
from ..mesh import MeshHierarchy, prolong
from ..ocp import OCPConfig, solve_pathwise
from ..randfield import KLBasis, PAPER_BASIS, draw_sample
from .allocation import RateParams

__all__ = ["LineFit", "fit_loglog", "RateEstimate", "estimate_rates", "convergence_study"]


@dataclass(frozen=True)
class LineFit:
    """Least-squares line through (log x, log y)."""

    slope: float
    intercept: float
    r2: float
    x: tuple
    y: tuple

    def predict(self, x) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope

    def residuals(self) -> np.ndarray:
        return np.log(self.y) - (self.intercept + self.slope * np.log(self.x))


def fit_loglog(x, y) -> LineFit | None:
    """Fit ``log y = intercept + slope log x``; ``None`` when there are fewer
    than 3 points with positive finite y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0) & (x > 0)
    if ok.sum() < 3:
        return None
    res = linregress(np.log(x[ok]), np.log(y[ok]))
    return LineFit(float(res.slope), float(res.intercept), float(res.rvalue**2), tuple(x[ok]), tuple(y[ok]))


@dataclass
class ConvergenceRow:
    level: int
    h: float
    N: int
    err_l2: float
    cost_mean_s: float
    work_mean: float


def convergence_study(
    hierarchy: MeshHierarchy,
    cfg: OCPConfig,
    M: int,
    levels,
    reference_level: int,
    master_seed: int,
    stream: int = 0,
    basis: KLBasis = PAPER_BASIS,
) -> list[ConvergenceRow]:
    """Sample mean of ||u_ref - u_l|| on the reference mesh, plus solve timings.

    Each sample is solved on every requested level and on the reference level
    with the same coefficient.
    """
    levels = list(levels)
    if any(l >= reference_level for l in levels):
        raise ValueError("study levels must be coarser than the reference level")
    ref_mesh = hierarchy[reference_level]
    err = {l: 0.0 for l in levels}
    cost = {l: 0.0 for l in levels}
    work = {l: 0 for l in levels}
    for sid in range(M):
        sample = draw_sample(master_seed, sid, stream, basis)
        ref = solve_pathwise(ref_mesh, sample, cfg).u
        for l in levels:
            t0 = time.perf_counter()
            sol = solve_pathwise(hierarchy[l], sample, cfg)
            cost[l] += time.perf_counter() - t0
            work[l] += sol.work
            diff = ref - prolong(hierarchy, l, reference_level, sol.u)
            err[l] += fem.l2_norm(ref_mesh, diff)
    return [
        ConvergenceRow(l, hierarchy[l].h, hierarchy[l].n_interior, err[l] / M, cost[l] / M, work[l] / M)
        for l in levels
    ]


@dataclass
class RateEstimate:
    s: float | None
    gamma: float | None
    error_fit: LineFit | None
    cost_fit: LineFit | None  # log cost vs log h
    cost_fit_dofs: LineFit | None  # log cost vs log N
    rows: list = field(default_factory=list)
    degenerate: bool = False

    def params(self, t: float = 1.0, c0: float = 0.5) -> RateParams:
        if self.s is None or self.gamma is None:
            raise ValueError("rate estimate is degenerate; no parameters available")
        return RateParams(s=self.s, t=t, gamma=self.gamma, c0=c0)


def rates_from_data(h, errors, costs, dofs=None) -> RateEstimate:
    """s is half the error slope in h, gamma minus the cost slope in h."""
    h = np.asarray(h, dtype=float)
    err_fit = fit_loglog(h, errors)
    cost_fit = fit_loglog(h, costs) if costs is not None else None
    dof_fit = fit_loglog(dofs, costs) if costs is not None and dofs is not None else None
    degenerate = err_fit is None
    return RateEstimate(
        s=None if err_fit is None else err_fit.slope / 2,
        gamma=None if cost_fit is None else -cost_fit.slope,
        error_fit=err_fit,
        cost_fit=cost_fit,
        cost_fit_dofs=dof_fit,
        degenerate=degenerate,
    )


def estimate_rates(
    hierarchy: MeshHierarchy,
    cfg: OCPConfig,
    pilot_M: int,
    levels,
    master_seed: int,
    reference_level: int | None = None,
    costs=None,
    basis: KLBasis = PAPER_BASIS,
) -> RateEstimate:
    """Pilot study for s and gamma.

    ``costs`` may inject per-level costs instead of the measured solve times.
    Zero errors (e.g. ``z = 0``) yield ``degenerate=True`` and no ``s``.
    """
    levels = list(levels)
    if pilot_M < 2:
        raise ValueError("pilot_M must be at least 2")
    if len(levels) < 3:
        raise ValueError("need at least 3 levels for a rate fit")
    if reference_level is None:
        reference_level = len(hierarchy) - 1
    rows = convergence_study(hierarchy, cfg, pilot_M, levels, reference_level, master_seed, basis=basis)
    h = [r.h for r in rows]
    measured = [r.cost_mean_s for r in rows] if costs is None else list(costs)
    est = rates_from_data(h, [r.err_l2 for r in rows], measured, [r.N for r in rows])
    est.rows = rows
    return est
