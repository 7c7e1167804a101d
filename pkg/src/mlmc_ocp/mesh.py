"""Nested uniform triangulations of the square (-0.5, 0.5)^2.

The coarsest mesh is the "crossing" pattern: four triangles joined at the
origin, with a single interior vertex.  Each refinement splits every triangle
into four congruent children through its edge midpoints.  Parent vertices keep
their indices, so the vertex array of a coarse level is a prefix of the vertex
array of every finer level and prolongation is pure index arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "TriMesh",
    "MeshHierarchy",
    "build_initial_mesh",
    "refine_uniform",
    "prolong",
    "evaluate_p1",
    "write_mesh",
    "read_mesh",
]

HALF_WIDTH = 0.5
_BOUNDARY_TOL = 1e-12
_MIN_AREA = 1e-14


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation of the square with P1 interior dofs.

    ``h`` is stored as the exact dyadic value ``2**-level * h0`` rather than
    recomputed from the geometry.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    interior_mask: np.ndarray
    level: int
    h: float
    # for refined meshes: endpoints of the parent edge each new vertex bisects
    parent_edges: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def dof_index(self) -> np.ndarray:
        """Map vertex index -> interior dof index, -1 on the boundary."""
        idx = np.full(self.n_vertices, -1, dtype=np.int64)
        idx[self.interior_mask] = np.arange(self.n_interior)
        return idx

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Pad interior nodal values with the homogeneous Dirichlet zeros."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_interior:
            raise ValueError(
                f"expected {self.n_interior} interior values on level {self.level}, "
                f"got {values.shape[0]}"
            )
        full = np.zeros((self.n_vertices,) + values.shape[1:])
        full[self.interior_mask] = values
        return full

    def max_diameter(self) -> float:
        p = self.vertices[self.triangles]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return float(np.sqrt((edges**2).sum(axis=-1)).max())


def _interior_mask(vertices: np.ndarray) -> np.ndarray:
    on_boundary = (np.abs(np.abs(vertices) - HALF_WIDTH) < _BOUNDARY_TOL).any(axis=1)
    return ~on_boundary


def build_initial_mesh() -> TriMesh:
    """Four triangles meeting at the origin; one interior dof."""
    vertices = np.array(
        [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5], [0.0, 0.0]]
    )
    triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]], dtype=np.int64)
    mesh = TriMesh(vertices, triangles, _interior_mask(vertices), level=0, h=0.0)
    object.__setattr__(mesh, "h", mesh.max_diameter())
    _check_areas(mesh)
    return mesh


def _check_areas(mesh: TriMesh) -> None:
    if (mesh.signed_areas < _MIN_AREA).any():
        raise ValueError("degenerate or inverted triangle in mesh")


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Red refinement: each triangle -> four congruent children.

    New midpoint vertices are appended after the parent vertices.
    """
    tri = mesh.triangles
    nv = mesh.n_vertices
    local = tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = np.sort(local, axis=-1).reshape(-1, 2)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1, 3)
    mids = nv + inverse  # midpoint of edges (0,1), (1,2), (2,0)

    vertices = np.vstack([mesh.vertices, 0.5 * mesh.vertices[edges].sum(axis=1)])
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m01, m12, m20 = mids[:, 0], mids[:, 1], mids[:, 2]
    children = np.stack(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([m01, b, m12], axis=1),
            np.stack([m20, m12, c], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)

    fine = TriMesh(
        vertices,
        children,
        _interior_mask(vertices),
        level=mesh.level + 1,
        h=0.5 * mesh.h,
        parent_edges=edges,
    )
    return fine


def _prolongation_full(coarse: TriMesh, fine: TriMesh) -> sp.csr_matrix:
    nc = coarse.n_vertices
    edges = fine.parent_edges
    if edges is None or fine.n_vertices != nc + len(edges):
        raise ValueError("meshes are not consecutive levels of one refinement")
    n_new = len(edges)
    rows = np.concatenate([np.arange(nc), np.repeat(nc + np.arange(n_new), 2)])
    cols = np.concatenate([np.arange(nc), edges.ravel()])
    vals = np.concatenate([np.ones(nc), np.full(2 * n_new, 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_vertices, nc))


class MeshHierarchy:
    """Meshes ``levels[0..L]`` plus interior-to-interior prolongations.

    ``levels[0]`` need not be the crossing mesh: with ``coarsest=2`` the
    hierarchy starts after two refinements (h = 1/4), which is the coarse
    level used by the multilevel estimator.  Indices into the hierarchy are
    positions, each mesh still records its absolute refinement ``level``.
    """

    def __init__(self, levels: list[TriMesh]):
        if not levels:
            raise ValueError("hierarchy needs at least one mesh")
        self.levels = list(levels)
        self.prolongations = [
            _interior_block(_prolongation_full(c, f), c, f)
            for c, f in zip(self.levels[:-1], self.levels[1:])
        ]

    @classmethod
    def build(cls, finest: int, coarsest: int = 0) -> "MeshHierarchy":
        """Meshes with refinement counts ``coarsest..finest``."""
        if not 0 <= coarsest <= finest:
            raise ValueError(f"invalid level range {coarsest}..{finest}")
        mesh = build_initial_mesh()
        for _ in range(coarsest):
            mesh = refine_uniform(mesh)
        meshes = [mesh]
        for _ in range(finest - coarsest):
            meshes.append(refine_uniform(meshes[-1]))
        return cls(meshes)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> TriMesh:
        return self.levels[index]

    @property
    def h0(self) -> float:
        return self.levels[0].h


def _interior_block(P: sp.csr_matrix, coarse: TriMesh, fine: TriMesh) -> sp.csr_matrix:
    return P[fine.interior_vertices][:, coarse.interior_vertices].tocsr()


def prolong(
    hierarchy: MeshHierarchy, from_level: int, to_level: int, coeffs: np.ndarray
) -> np.ndarray:
    """Represent an interior nodal vector of ``from_level`` on ``to_level``.

    Works column-wise for 2-D input.
    """
    n = len(hierarchy)
    if not (0 <= from_level <= to_level < n):
        raise ValueError(f"cannot prolong from level {from_level} to {to_level} (have {n})")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != hierarchy[from_level].n_interior:
        raise ValueError(
            f"length {coeffs.shape[0]} does not match {hierarchy[from_level].n_interior} "
            f"interior dofs on level {from_level}"
        )
    out = coeffs
    for level in range(from_level, to_level):
        out = hierarchy.prolongations[level] @ out
    return out


def evaluate_p1(mesh: TriMesh, full_values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate a P1 function given by all vertex values at arbitrary points.

    Brute-force point location; meant for checks on small meshes.
    """
    points = np.atleast_2d(points)
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    x0 = p[:, 0]
    e1 = p[:, 1] - x0
    e2 = p[:, 2] - x0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = points[:, None, :] - x0[None, :, :]  # (np, nt, 2)
    l1 = (d[..., 0] * e2[:, 1] - d[..., 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[..., 1] - e1[:, 1] * d[..., 0]) / det
    l0 = 1.0 - l1 - l2
    lam = np.stack([l0, l1, l2], axis=-1)  # (np, nt, 3)
    inside = (lam >= -1e-12).all(axis=-1)
    if not inside.any(axis=1).all():
        raise ValueError("point outside the mesh")
    owner = inside.argmax(axis=1)
    idx = np.arange(len(points))
    vals = full_values[mesh.triangles[owner]]
    return (lam[idx, owner] * vals).sum(axis=-1)


def write_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Plain-text dump: ``v x y interior_flag`` lines then ``t i j k`` lines."""
    with open(path, "w") as fh:
        for (x, y), flag in zip(mesh.vertices, mesh.interior_mask):
            fh.write(f"v {float(x)!r} {float(y)!r} {int(flag)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")


def read_mesh(path: str | Path, level: int = 0, h: float | None = None) -> TriMesh:
    verts, flags, tris = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
                flags.append(bool(int(parts[3])))
            elif parts[0] == "t":
                tris.append(tuple(int(v) for v in parts[1:4]))
            else:
                raise ValueError(f"unrecognised mesh line: {line!r}")
    mesh = TriMesh(
        np.array(verts), np.array(tris, dtype=np.int64), np.array(flags), level, 0.0
    )
    object.__setattr__(mesh, "h", mesh.max_diameter() if h is None else h)
    return mesh
