"""Sample allocation across levels.

The allocation problem is

    minimise   sum_l M_l C_l
    subject to sum_l M_l^(-1/2) h_l^(2s) <= c0 h_L^(2s),   M_l >= 1,

a convex program in ``M``.  Without the lower bounds its KKT conditions give

    M_l = (lam a_l / (2 C_l))^(2/3),   a_l = h_l^(2s),
    lam^(1/3) = sum_j a_j^(2/3) (2 C_j)^(1/3) / (c0 h_L^(2s)).

With power-law costs ``C_l ~ h_l^-gamma`` consecutive levels then differ by
the factor ``2^((4s + 2 gamma)/3)``.  Levels whose KKT value falls below 1
are pinned to 1 and the rest re-solved on the remaining budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, NonlinearConstraint, minimize

__all__ = [
    "RateParams",
    "LevelPlan",
    "level_sizes",
    "continuous_allocation",
    "allocate_samples",
    "allocate_samples_numeric",
    "theorem_allocation",
    "constraint_value",
    "power_law_costs",
]


@dataclass(frozen=True)
class RateParams:
    """Exponents driving allocation: FE rate ``s``, coefficient Hoelder
    exponent ``t``, cost exponent ``gamma`` and error safety factor ``c0``."""

    s: float = 1.0
    t: float = 1.0
    gamma: float = 2.4
    c0: float = 0.5

    def __post_init__(self):
        if not (self.s > 0 and self.gamma > 0 and self.c0 > 0):
            raise ValueError(f"s, gamma and c0 must be positive: {self}")

    @property
    def consistent(self) -> bool:
        """Whether 0 < s <= t <= 1 (empirical estimates may fail this)."""
        return 0 < self.s <= self.t <= 1


@dataclass(frozen=True)
class LevelPlan:
    level: int
    h: float
    M: int
    cost_per_sample: float = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"level {self.level}: need M >= 1, got {self.M}")


def level_sizes(L: int, h0: float) -> np.ndarray:
    return h0 * 2.0 ** -np.arange(L + 1)


def power_law_costs(L: int, h0: float, gamma: float, scale: float = 1.0) -> np.ndarray:
    return scale * level_sizes(L, h0) ** -gamma


def constraint_value(M, h: np.ndarray, s: float) -> float:
    """sum_l M_l^(-1/2) h_l^(2s)."""
    return float(np.sum(np.asarray(M, dtype=float) ** -0.5 * h ** (2 * s)))


def _check(costs, L):
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (L + 1,):
        raise ValueError(f"need {L + 1} level costs, got {costs.shape}")
    if not (costs > 0).all():
        raise ValueError("level costs must be positive")
    return costs


def continuous_allocation(L: int, rates: RateParams, costs, h0: float) -> np.ndarray:
    """Real-valued optimum of the allocation problem (before rounding)."""
    C = _check(costs, L)
    h = level_sizes(L, h0)
    a = h ** (2 * rates.s)
    budget = rates.c0 * h[-1] ** (2 * rates.s)
    pinned = np.zeros(L + 1, dtype=bool)
    while True:
        free = ~pinned
        rest = budget - a[pinned].sum()
        if rest <= 0:
            raise ValueError("error budget cannot be met with the pinned levels")
        lam13 = np.sum(a[free] ** (2 / 3) * (2 * C[free]) ** (1 / 3)) / rest
        M = np.ones(L + 1)
        M[free] = lam13**2 * (a[free] / (2 * C[free])) ** (2 / 3)
        low = free & (M < 1.0)
        if not low.any():
            return M
        pinned |= low


def allocate_samples(
    L: int,
    rates: RateParams,
    costs,
    h0: float,
    sample_scale: float = 1.0,
) -> list[LevelPlan]:
    """Integer plans from the KKT solution, rounded up.

    ``sample_scale`` multiplies the continuous solution before rounding; values
    below one shrink runs to desk size at the price of a proportionally larger
    statistical error.
    """
    if sample_scale <= 0:
        raise ValueError("sample_scale must be positive")
    C = _check(costs, L)
    M = continuous_allocation(L, rates, C, h0) * sample_scale
    h = level_sizes(L, h0)
    return [
        LevelPlan(level=l, h=float(h[l]), M=max(1, math.ceil(M[l] - 1e-9 * M[l])), cost_per_sample=float(C[l]))
        for l in range(L + 1)
    ]


def allocate_samples_numeric(L: int, rates: RateParams, costs, h0: float) -> np.ndarray:
    """Reference solution of the same convex program in log M.

    SLSQP first, trust-region as fallback when SLSQP stalls (it can when a
    level sits on its bound M_l = 1).  Independent of the closed form; used to
    check it.
    """
    C = _check(costs, L)
    h = level_sizes(L, h0)
    a = h ** (2 * rates.s)
    budget = rates.c0 * h[-1] ** (2 * rates.s)
    # feasible start: every level gets the same share of the budget
    x0 = 2 * np.log((L + 1) * a / budget)
    x0 = np.maximum(x0, 0.0)
    scale = float(np.sum(C * np.exp(x0)))

    def objective(x):
        return float(np.sum(C * np.exp(x))) / scale

    def gradient(x):
        return C * np.exp(x) / scale

    def slack(x):
        return 1.0 - float(np.sum(a * np.exp(-0.5 * x))) / budget

    def slack_grad(x):
        return 0.5 * a * np.exp(-0.5 * x) / budget

    res = minimize(
        objective,
        x0,
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, None)] * (L + 1),
        constraints=[{"type": "ineq", "fun": slack, "jac": slack_grad}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    if res.success:
        return np.exp(res.x)
    res = minimize(
        objective,
        x0 + 1.0,
        jac=gradient,
        hess=lambda x: np.diag(C * np.exp(x) / scale),
        method="trust-constr",
        bounds=Bounds(0.0, np.inf),
        constraints=[NonlinearConstraint(slack, 0.0, np.inf, jac=lambda x: slack_grad(x)[None, :])],
        options={"gtol": 1e-12, "xtol": 1e-14, "maxiter": 5000},
    )
    if res.status not in (1, 2):
        raise RuntimeError(f"allocation oracle failed: {res.message}")
    return np.exp(res.x)


def theorem_allocation(L: int, rates: RateParams, h0: float, constant: float = 1.0) -> np.ndarray:
    """Asymptotic a-priori choice  M_l = K h_L^-4s h_l^((gamma+4s)/2)  (case 4s > gamma).

    Its consecutive ratio is 2^((gamma+4s)/2); the optimiser above is sharper.
    """
    h = level_sizes(L, h0)
    s, g = rates.s, rates.gamma
    return constant * h[-1] ** (-4 * s) * h ** ((g + 4 * s) / 2)
