"""Pathwise optimal control with variational discretization.

For one coefficient realisation the discrete problem is

    min_u  1/2 ||y_h - z_h||^2 + alpha/2 ||u||^2,   u_a <= u <= u_b,
    K y_h = (u, phi_i),

where only the state is discretised.  The optimal control is carried
implicitly as ``u = clamp(-p_h/alpha, u_a, u_b)`` with ``p_h`` the P1 adjoint,
so it is in general not a P1 function.  Without bounds the optimality system
is linear and is solved in one step.  With bounds a semi-smooth Newton
(primal-dual active set) iteration freezes the active set at the control
integration points and solves the symmetric saddle-point system

    [ -M        K      ] [y]   [ -M z_h ]
    [  K   M_I / alpha ] [p] = [  b_A   ]

where ``M_I`` is the mass matrix restricted to the inactive set and ``b_A``
the load of the clamped (active) part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from ._kernels import clamped_control_terms
from .errors import SolverError
from .mesh import TriMesh
from .randfield import CoefficientSample

__all__ = [
    "DesiredState",
    "OCPConfig",
    "PathwiseSolution",
    "solve_pathwise",
    "solve_unconstrained",
    "solve_constrained",
    "evaluate_cost",
    "control_terms",
    "QUAD5_POINTS",
    "QUAD5_WEIGHTS",
]


def _quad5():
    r = math.sqrt(15.0)
    a1, b1 = (9 - 2 * r) / 21, (6 + r) / 21
    a2, b2 = (9 + 2 * r) / 21, (6 - r) / 21
    w1, w2 = (155 + r) / 1200, (155 - r) / 1200
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    pts += [(a1, b1, b1), (b1, a1, b1), (b1, b1, a1)]
    pts += [(a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
    weights = [9 / 40] + [w1] * 3 + [w2] * 3
    return np.array(pts), np.array(weights)


# 7-point degree-5 rule on the reference triangle, barycentric, weights sum to 1
QUAD5_POINTS, QUAD5_WEIGHTS = _quad5()


@dataclass(frozen=True)
class DesiredState:
    """Closed-form target ``z``: the ``paper`` preset or a constant."""

    kind: str = "paper"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("paper", "constant"):
            raise ValueError(f"unknown desired state {self.kind!r}")

    @classmethod
    def parse(cls, spec) -> "DesiredState":
        if isinstance(spec, DesiredState):
            return spec
        if isinstance(spec, (int, float)):
            return cls("constant", float(spec))
        spec = str(spec).strip()
        if spec == "paper":
            return cls("paper")
        return cls("constant", float(spec))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "paper":
            return np.sin(2 * np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
        return np.full(x.shape[:-1], self.value)

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.value == 0.0


@dataclass(frozen=True)
class OCPConfig:
    alpha: float = 1e-2
    z: DesiredState = field(default_factory=DesiredState)
    u_a: float = -math.inf
    u_b: float = math.inf
    control_integration: str = "quadrature5"
    coeff_quadrature: str = "centroid"
    newton_tol: float = 1e-10
    newton_maxit: int = 50
    solve_rtol: float = 1e-12

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.u_a <= self.u_b:
            raise ValueError(f"need u_a <= u_b, got {self.u_a} > {self.u_b}")
        if self.control_integration not in ("quadrature5", "cutcell"):
            raise ValueError(f"unknown control integration {self.control_integration!r}")
        if not isinstance(self.z, DesiredState):
            object.__setattr__(self, "z", DesiredState.parse(self.z))

    @property
    def unconstrained(self) -> bool:
        return math.isinf(self.u_a) and self.u_a < 0 and math.isinf(self.u_b) and self.u_b > 0


@dataclass
class PathwiseSolution:
    """Optimal triple on one mesh; ``u`` is clamp(-p/alpha) at the interior vertices."""

    u: np.ndarray
    y: np.ndarray
    p: np.ndarray
    newton_iters: int
    residual: float
    cost_value: float
    active_fraction: float
    level: int
    sample_id: int | None = None
    work: int = 0  # nonzeros of all LU factors computed, a deterministic cost proxy


def _block_solve(K, M, MI_over_alpha, rhs, cfg: OCPConfig, level, sample_id):
    A = sp.bmat([[-M, K], [K, MI_over_alpha]], format="csc")
    try:
        lu = fem.factorize(A, definite=False)
    except RuntimeError as exc:
        raise SolverError(f"KKT factorization failed: {exc}", level, sample_id) from exc
    x = fem.solve_dirichlet(A, rhs, cfg.solve_rtol, level, sample_id, lu=lu, backward=True)
    n = K.shape[0]
    return x[:n], x[n:], int(lu.L.nnz + lu.U.nnz)


def _tracking(M, y, zh):
    d = y - zh
    return 0.5 * float(d @ (M @ d))


def solve_unconstrained(mesh: TriMesh, sample: CoefficientSample, cfg: OCPConfig) -> PathwiseSolution:
    """Linear optimality system; u = -p/alpha is then exactly P1."""
    level, sid = mesh.level, sample.sample_id
    K = fem.assemble_stiffness(mesh, sample, cfg.coeff_quadrature)
    M = fem.assemble_mass(mesh)
    zh = fem.interpolate(mesh, cfg.z)
    rhs = np.concatenate([-(M @ zh), np.zeros(mesh.n_interior)])
    y, p, work = _block_solve(K, M, M / cfg.alpha, rhs, cfg, level, sid)
    u = -p / cfg.alpha
    cost = _tracking(M, y, zh) + 0.5 * cfg.alpha * float(u @ (M @ u))
    residual = float(np.linalg.norm(cfg.alpha * u + p))
    return PathwiseSolution(u, y, p, 1, residual, cost, 0.0, level, sid, work)


def control_terms(mesh: TriMesh, p: np.ndarray, cfg: OCPConfig):
    """Integrals of the control clamp(-p/alpha) on every element.

    Returns ``(b_A, M_I, int u^2, state)`` where ``b_A`` is the interior load of
    the active part, ``M_I`` the interior inactive mass, and ``state`` a
    hashable-by-bytes record of the active set.
    """
    V = fem.space(mesh)
    pe = np.ascontiguousarray(V.gather(p))
    if cfg.control_integration == "quadrature5":
        bA_e, MI_e, usq_e, state = clamped_control_terms(
            pe, V.area, QUAD5_POINTS, QUAD5_WEIGHTS, cfg.alpha, cfg.u_a, cfg.u_b
        )
    else:
        from .cutcell import clamped_control_terms_exact

        bA_e, MI_e, usq_e, state = clamped_control_terms_exact(
            pe, V.area, cfg.alpha, cfg.u_a, cfg.u_b
        )
    bA = V.scatter_vector(bA_e)
    MI = V.interior.assemble(MI_e)
    return bA, MI, float(usq_e.sum()), state


def _initial_state(mesh, sample, K, M, zh, cfg):
    # u0 = projection of 0 onto the box, a constant function
    c = min(max(0.0, cfg.u_a), cfg.u_b)
    V = fem.space(mesh)
    load = c * V.scatter_vector(np.repeat(V.area[:, None] / 3.0, 3, axis=1))
    lu = fem.factorize(K)
    y = fem.solve_dirichlet(K, load, cfg.solve_rtol, mesh.level, sample.sample_id, lu=lu)
    p = fem.solve_dirichlet(K, M @ (y - zh), cfg.solve_rtol, mesh.level, sample.sample_id, lu=lu)
    return y, p, int(lu.L.nnz + lu.U.nnz)


def _mismatch(K, y, p, terms, alpha):
    """||K y - B(p)|| / max(1, ||B(p)||) with B(p) the load of clamp(-p/alpha)."""
    bA, MI = terms[0], terms[1]
    load = bA - MI @ p / alpha
    return float(np.linalg.norm(K @ y - load) / max(1.0, np.linalg.norm(load)))


def solve_constrained(mesh: TriMesh, sample: CoefficientSample, cfg: OCPConfig) -> PathwiseSolution:
    """Semi-smooth Newton on u = clamp(-p/alpha, u_a, u_b).

    Stops once the active set repeats and the control mismatch
    ``||K y - B(p)||`` is below ``newton_tol`` (relative to
    ``max(1, ||B(p)||)``), where ``B(p)`` is the load of the clamped control.

    Steps are plain active-set updates.  If an earlier active set comes back
    without convergence (cycling, seen on coarse meshes with quadrature-point
    active sets), the remaining steps backtrack on the mismatch instead.
    """
    level, sid = mesh.level, sample.sample_id
    K = fem.assemble_stiffness(mesh, sample, cfg.coeff_quadrature)
    M = fem.assemble_mass(mesh)
    zh = fem.interpolate(mesh, cfg.z)
    Mz = M @ zh

    y, p, work = _initial_state(mesh, sample, K, M, zh, cfg)
    terms = control_terms(mesh, p, cfg)
    state = terms[3]
    seen = {state.tobytes()}
    damped = False
    residual = math.inf
    for it in range(1, cfg.newton_maxit + 1):
        bA, MI = terms[0], terms[1]
        y_new, p_new, w = _block_solve(K, M, MI / cfg.alpha, np.concatenate([-Mz, bA]), cfg, level, sid)
        work += w
        if damped:
            r0 = _mismatch(K, y, p, terms, cfg.alpha)
            theta = 1.0
            while True:
                y_try = y + theta * (y_new - y)
                p_try = p + theta * (p_new - p)
                new_terms = control_terms(mesh, p_try, cfg)
                residual = _mismatch(K, y_try, p_try, new_terms, cfg.alpha)
                if residual <= (1.0 - 1e-4 * theta) * r0 or theta < 2.0**-10:
                    break
                theta *= 0.5
            y, p = y_try, p_try
        else:
            y, p = y_new, p_new
            new_terms = control_terms(mesh, p, cfg)
            residual = _mismatch(K, y, p, new_terms, cfg.alpha)
        new_state = new_terms[3]
        same = np.array_equal(new_state, state)
        if same and residual <= cfg.newton_tol:
            terms, state = new_terms, new_state
            break
        key = new_state.tobytes()
        if not same and key in seen:
            damped = True
        seen.add(key)
        terms, state = new_terms, new_state
    else:
        raise SolverError(
            f"semi-smooth Newton did not converge in {cfg.newton_maxit} iterations",
            level,
            sid,
            residual,
        )

    u = np.clip(-p / cfg.alpha, cfg.u_a, cfg.u_b)
    cost = _tracking(M, y, zh) + 0.5 * cfg.alpha * terms[2]
    active = float(np.count_nonzero(state)) / state.size if state.size else 0.0
    return PathwiseSolution(u, y, p, it, residual, cost, active, level, sid, work)


def solve_pathwise(mesh: TriMesh, sample: CoefficientSample, cfg: OCPConfig) -> PathwiseSolution:
    if cfg.unconstrained:
        return solve_unconstrained(mesh, sample, cfg)
    return solve_constrained(mesh, sample, cfg)


def evaluate_cost(mesh: TriMesh, sample: CoefficientSample, cfg: OCPConfig, u: np.ndarray) -> float:
    """Reduced cost of a P1 control given by its interior nodal values."""
    K = fem.assemble_stiffness(mesh, sample, cfg.coeff_quadrature)
    M = fem.assemble_mass(mesh)
    zh = fem.interpolate(mesh, cfg.z)
    u = np.asarray(u, dtype=float)
    y = fem.solve_dirichlet(K, M @ u, cfg.solve_rtol, mesh.level, sample.sample_id)
    return _tracking(M, y, zh) + 0.5 * cfg.alpha * float(u @ (M @ u))
