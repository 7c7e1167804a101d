"""P1 finite elements with homogeneous Dirichlet conditions.

Boundary rows and columns are eliminated at assembly, so every operator
returned here acts on interior dofs only.  Sparsity patterns and the
element-to-CSR scatter maps are computed once per mesh and cached; per-sample
assembly is a single scatter of element values.
"""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm, splu

from ._kernels import scatter_add
from .errors import SolverError
from .mesh import TriMesh
from .randfield import CoefficientSample

__all__ = [
    "P1Space",
    "space",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "interpolate",
    "solve_dirichlet",
    "factorize",
    "l2_norm",
    "l2_inner",
]

_MIN_AREA = 1e-14
_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class _Pattern:
    """CSR pattern of an element-assembled operator and its scatter map."""

    def __init__(self, local_to_global: np.ndarray, n: int):
        ne = len(local_to_global)
        rows = np.repeat(local_to_global, 3, axis=1)  # (ne, 9): i i i j j j k k k
        cols = np.tile(local_to_global, (1, 3))  # (ne, 9): i j k i j k ...
        valid = (rows >= 0) & (cols >= 0)
        keys = rows[valid] * n + cols[valid]
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.n = n
        self.nnz = len(uniq)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        scatter = np.full((ne, 9), -1, dtype=np.int64)
        scatter[valid] = inverse
        self.scatter = np.ascontiguousarray(scatter)

    def assemble(self, element_values: np.ndarray) -> sp.csr_matrix:
        data = np.zeros(self.nnz)
        scatter_add(data, self.scatter, np.ascontiguousarray(element_values, dtype=float))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


class P1Space:
    """Geometry and patterns of the P1 space on one mesh."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        tri = mesh.triangles
        p = mesh.vertices[tri]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.area = 0.5 * det
        if (self.area < _MIN_AREA).any():
            bad = int(np.argmin(self.area))
            raise ValueError(
                f"degenerate element {bad} (area {self.area[bad]:.3e}) on level {mesh.level}"
            )
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        self.grads = np.stack([-g1 - g2, g1, g2], axis=1)  # (ne, 3, 2)
        self.stiffness_ref = (
            self.area[:, None, None] * np.einsum("eik,ejk->eij", self.grads, self.grads)
        ).reshape(-1, 9)
        self.mass_ref = (self.area[:, None, None] * _MASS_REF).reshape(-1, 9)
        self.centroids = p.mean(axis=1)
        self.dofs = mesh.dof_index[tri]  # (ne, 3), -1 on boundary
        self.interior = _Pattern(self.dofs, mesh.n_interior)
        self._full = None
        self._mass = None

    @property
    def full(self) -> _Pattern:
        if self._full is None:
            self._full = _Pattern(self.mesh.triangles, self.mesh.n_vertices)
        return self._full

    @property
    def mass(self) -> sp.csr_matrix:
        if self._mass is None:
            self._mass = self.interior.assemble(self.mass_ref)
        return self._mass

    def element_coefficient(self, sample: CoefficientSample, quadrature: str = "centroid") -> np.ndarray:
        if quadrature == "centroid":
            return sample(self.centroids)
        if quadrature == "vertex_avg":
            return sample(self.mesh.vertices)[self.mesh.triangles].mean(axis=1)
        raise ValueError(f"unknown coefficient quadrature {quadrature!r}")

    def gather(self, values: np.ndarray) -> np.ndarray:
        """Interior nodal vector -> (ne, 3) element vertex values."""
        return self.mesh.expand(values)[self.mesh.triangles]

    def scatter_vector(self, element_values: np.ndarray) -> np.ndarray:
        """Sum (ne, 3) element contributions into an interior vector."""
        keep = self.dofs >= 0
        return np.bincount(
            self.dofs[keep], weights=element_values[keep], minlength=self.mesh.n_interior
        )


_SPACES: "weakref.WeakKeyDictionary[TriMesh, P1Space]" = weakref.WeakKeyDictionary()


def space(mesh: TriMesh) -> P1Space:
    """Cached :class:`P1Space` of ``mesh``."""
    sp_ = _SPACES.get(mesh)
    if sp_ is None:
        sp_ = _SPACES[mesh] = P1Space(mesh)
    return sp_


def assemble_stiffness(
    mesh: TriMesh,
    sample: CoefficientSample,
    quadrature: str = "centroid",
    full: bool = False,
) -> sp.csr_matrix:
    """Stiffness matrix of ``-div(a grad .)`` with a one-point coefficient rule.

    ``full=True`` returns the matrix over all vertices, before the Dirichlet
    rows and columns are removed.
    """
    V = space(mesh)
    coef = V.element_coefficient(sample, quadrature)
    pattern = V.full if full else V.interior
    return pattern.assemble(coef[:, None] * V.stiffness_ref)


def assemble_mass(mesh: TriMesh, full: bool = False) -> sp.csr_matrix:
    V = space(mesh)
    if full:
        return V.full.assemble(V.mass_ref)
    return V.mass


def assemble_load(mesh: TriMesh, f) -> np.ndarray:
    """Interior load vector of ``int f phi_i`` by the edge-midpoint rule."""
    V = space(mesh)
    p = mesh.vertices[mesh.triangles]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))  # midpoints of edges 01, 12, 20
    fm = np.asarray(f(mids.reshape(-1, 2)), dtype=float).reshape(-1, 3)
    if fm.shape[0] != mesh.n_triangles:
        fm = np.broadcast_to(fm, (mesh.n_triangles, 3))
    # vertex i touches edges i and i-1
    local = (V.area / 6.0)[:, None] * (fm + np.roll(fm, 1, axis=1))
    return V.scatter_vector(local)


def interpolate(mesh: TriMesh, f) -> np.ndarray:
    """Interior nodal values of ``f``."""
    pts = mesh.vertices[mesh.interior_vertices]
    return np.broadcast_to(np.asarray(f(pts), dtype=float), (len(pts),)).copy()


def factorize(A: sp.spmatrix, definite: bool = True):
    """Sparse LU of a symmetric matrix with a symmetric fill-reducing ordering.

    ``definite=False`` (saddle-point systems) keeps threshold pivoting on;
    full partial pivoting would destroy the ordering and multiply fill-in.
    """
    return splu(
        sp.csc_matrix(A),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0 if definite else 0.1,
        options={"SymmetricMode": True},
    )


def solve_dirichlet(
    K: sp.spmatrix,
    rhs: np.ndarray,
    rtol: float = 1e-12,
    level: int | None = None,
    sample_id: int | None = None,
    lu=None,
    backward: bool = False,
) -> np.ndarray:
    """Sparse direct solve with a residual check.

    The default test is ``||K x - rhs|| <= rtol ||rhs||``.  ``backward=True``
    uses the normwise backward error ``||r|| <= rtol (||K||_inf ||x|| + ||rhs||)``
    instead, which is what badly scaled saddle-point systems can attain.
    Up to two steps of iterative refinement are taken before giving up with
    :class:`SolverError`.
    """
    rhs = np.asarray(rhs, dtype=float)
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs == 0.0:
        return np.zeros_like(rhs)
    try:
        if lu is None:
            lu = factorize(K)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}", level, sample_id) from exc
    norm_K = sparse_norm(K, np.inf) if backward else 0.0
    for _ in range(3):
        r = rhs - K @ x
        scale = norm_rhs + norm_K * np.linalg.norm(x)
        res = np.linalg.norm(r) / scale
        if res <= rtol:
            return x
        x += lu.solve(r)
    raise SolverError("linear solve missed its residual tolerance", level, sample_id, res)


def l2_inner(mesh: TriMesh, v: np.ndarray, w: np.ndarray) -> float:
    n = mesh.n_interior
    if len(v) != n or len(w) != n:
        raise ValueError(
            f"nodal vectors of length {len(v)}, {len(w)} do not live on level {mesh.level} ({n} dofs)"
        )
    return float(v @ (space(mesh).mass @ w))


def l2_norm(mesh: TriMesh, v: np.ndarray) -> float:
    return float(np.sqrt(max(l2_inner(mesh, v, v), 0.0)))
