"""Pure numpy versions of the compiled kernels (same signatures)."""

import numpy as np


def scatter_add(data, scatter, values):
    """``data[scatter[e, k]] += values[e, k]`` skipping negative targets.

    Contributions are accumulated in element order, matching the compiled loop.
    """
    scatter = scatter.ravel()
    keep = scatter >= 0
    data += np.bincount(scatter[keep], weights=values.ravel()[keep], minlength=len(data))


def clamped_control_terms(pe, area, lam, w, alpha, ua, ub):
    """Quadrature terms of the control clamp(-p/alpha, ua, ub) per element.

    Parameters
    ----------
    pe : (ne, 3) adjoint values at the element vertices
    area : (ne,) element areas
    lam, w : barycentric quadrature points (nq, 3) and weights (nq,), sum(w) == 1

    Returns
    -------
    bA : (ne, 3)  integral of the active (clamped) part times each hat function
    MI : (ne, 9)  inactive-set mass, row-major 3x3
    usq : (ne,)   integral of the clamped control squared
    state : (ne, nq) int8, -1 lower active, 0 inactive, +1 upper active
    """
    g = -(pe @ lam.T) / alpha
    low = g < ua
    up = g > ub
    inact = ~(low | up)
    u = np.where(low, ua, np.where(up, ub, g))
    wa = w[None, :] * area[:, None]
    bound = np.where(low, ua, 0.0) + np.where(up, ub, 0.0)
    bA = (wa * bound) @ lam
    wi = wa * inact
    MI = np.einsum("eq,qi,qj->eij", wi, lam, lam).reshape(-1, 9)
    usq = (wa * u * u).sum(axis=1)
    state = up.astype(np.int8) - low.astype(np.int8)
    return bA, MI, usq, state
