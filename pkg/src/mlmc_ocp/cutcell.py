"""Exact integration of clamped linear functions on triangles.

Alternative to the 7-point rule in :mod:`mlmc_ocp.ocp`.  Elements on which
``g = -p/alpha`` crosses a bound are split along the level lines ``g = u_a``
and ``g = u_b``.  Each convex piece is fan-triangulated and integrated with
the edge-midpoint rule, which is exact for the quadratic integrands involved.
Work happens in barycentric coordinates, where hat functions are the
coordinates themselves.
"""

import numpy as np

_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _clip(poly, h):
    """Part of the convex polygon ``poly`` (rows: barycentric points) where h >= 0.

    ``h`` holds the values of a linear function at the polygon vertices.
    """
    out_pts = []
    n = len(poly)
    for k in range(n):
        P, Q = poly[k], poly[(k + 1) % n]
        hp, hq = h[k], h[(k + 1) % n]
        if hp >= 0:
            out_pts.append(P)
        if (hp >= 0) != (hq >= 0):
            t = hp / (hp - hq)
            out_pts.append(P + t * (Q - P))
    return np.array(out_pts) if len(out_pts) >= 3 else None


def _integrate(poly, area, g):
    """Integrals of (1, lam_i, g lam_i, lam_i lam_j, g^2) over a polygon piece."""
    r = np.zeros(3)
    rg = np.zeros(3)
    mm = np.zeros((3, 3))
    g2 = 0.0
    for k in range(1, len(poly) - 1):
        tri = np.array([poly[0], poly[k], poly[k + 1]])
        sub = area * abs(np.linalg.det(tri))
        mids = 0.5 * (tri + np.roll(tri, -1, axis=0))
        w = sub / 3.0
        gv = mids @ g
        r += w * mids.sum(axis=0)
        rg += w * (gv[:, None] * mids).sum(axis=0)
        mm += w * mids.T @ mids
        g2 += w * float(gv @ gv)
    return r, rg, mm, g2


def clamped_control_terms_exact(pe, area, alpha, ua, ub):
    """Same outputs as the quadrature kernel, but integrated exactly.

    ``state`` is reported per element vertex.
    """
    ne = len(pe)
    g = -pe / alpha
    low_v = g < ua
    up_v = g > ub
    state = up_v.astype(np.int8) - low_v.astype(np.int8)

    all_low = (g <= ua).all(axis=1)
    all_up = (g >= ub).all(axis=1)
    all_in = ((g >= ua) & (g <= ub)).all(axis=1)
    # an element pinned to a single bound value at all vertices counts as inactive
    all_low &= ~all_in
    all_up &= ~all_in

    bA = np.zeros((ne, 3))
    MI = np.zeros((ne, 3, 3))
    usq = np.zeros(ne)

    third = area / 3.0
    if np.isfinite(ua):
        bA[all_low] = (ua * third[all_low])[:, None]
        usq[all_low] = ua * ua * area[all_low]
    if np.isfinite(ub):
        bA[all_up] = (ub * third[all_up])[:, None]
        usq[all_up] = ub * ub * area[all_up]
    MI[all_in] = area[all_in, None, None] * _MASS_REF
    gi = g[all_in]
    usq[all_in] = area[all_in] * np.einsum("ei,ij,ej->e", gi, _MASS_REF, gi)

    cut = np.flatnonzero(~(all_low | all_up | all_in))
    eye = np.eye(3)
    for e in cut:
        ge, ae = g[e], area[e]
        # lower piece: ua - g > 0, upper piece: g - ub > 0
        if np.isfinite(ua):
            piece = _clip(eye, ua - ge)
            if piece is not None:
                r, _, _, _ = _integrate(piece, ae, ge)
                bA[e] += ua * r
                usq[e] += ua * ua * r.sum()
        if np.isfinite(ub):
            piece = _clip(eye, ge - ub)
            if piece is not None:
                r, _, _, _ = _integrate(piece, ae, ge)
                bA[e] += ub * r
                usq[e] += ub * ub * r.sum()
        piece = eye
        if np.isfinite(ua):
            piece = _clip(piece, piece @ ge - ua)
        if piece is not None and np.isfinite(ub):
            piece = _clip(piece, ub - piece @ ge)
        if piece is not None:
            _, _, mm, g2 = _integrate(piece, ae, ge)
            MI[e] += mm
            usq[e] += g2
    return bA, np.ascontiguousarray(MI.reshape(ne, 9)), usq, state
