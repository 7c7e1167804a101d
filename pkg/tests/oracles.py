"""Independent dense reference solvers shared by the unit and acceptance tests."""

import numpy as np

from mlmc_ocp import fem
from mlmc_ocp.ocp import QUAD5_POINTS, QUAD5_WEIGHTS, DesiredState


def dense_kkt_control(mesh, sample, alpha):
    """u from the full (y, u, p) Lagrange system with a P1 control."""
    K = fem.assemble_stiffness(mesh, sample).toarray()
    M = fem.assemble_mass(mesh).toarray()
    z = fem.interpolate(mesh, DesiredState())
    n = len(z)
    Z = np.zeros((n, n))
    A = np.block([[M, Z, K.T], [Z, alpha * M, -M.T], [K, -M, Z]])
    rhs = np.concatenate([M @ z, np.zeros(n), np.zeros(n)])
    return np.linalg.solve(A, rhs)[n : 2 * n]


def projected_gradient_control(mesh, sample, alpha, ua, ub, tol=1e-13, maxit=20000):
    """Box-constrained minimisation over controls living on the quadrature points.

    Works with dense matrices and a step from the largest eigenvalue of the
    reduced Hessian, so it shares nothing with the Newton solver beyond
    the assembled K and M.
    """
    K = fem.assemble_stiffness(mesh, sample).toarray()
    M = fem.assemble_mass(mesh).toarray()
    z = fem.interpolate(mesh, DesiredState())
    V = fem.space(mesh)
    ne, nq = mesh.n_triangles, len(QUAD5_WEIGHTS)
    wa = (V.area[:, None] * QUAD5_WEIGHTS[None, :]).ravel()
    # E[(e,q), i] = value of interior hat i at point q of element e
    E = np.zeros((ne * nq, mesh.n_interior))
    for e in range(ne):
        for a in range(3):
            d = V.dofs[e, a]
            if d >= 0:
                E[e * nq : (e + 1) * nq, d] = QUAD5_POINTS[:, a]
    B = E.T * wa  # load of a quadrature-point control
    S = np.linalg.solve(K, B)
    H = S.T @ M @ S
    sq = np.sqrt(wa)
    Lip = np.linalg.eigvalsh(H / np.outer(sq, sq)).max()
    tau = 1.0 / (alpha + Lip)
    u = np.zeros(ne * nq)
    for _ in range(maxit):
        y = S @ u
        p = np.linalg.solve(K, M @ (y - z))
        grad = alpha * u + E @ p  # gradient in the weighted inner product
        new = np.clip(u - tau * grad, ua, ub)
        if np.abs(new - u).max() < tol:
            u = new
            break
        u = new
    y = S @ u
    p = np.linalg.solve(K, M @ (y - z))
    return np.clip(-p / alpha, ua, ub), (u == ua).any() or (u == ub).any()
