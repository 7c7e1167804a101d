import math

import numpy as np
import pytest

from mlmc_ocp import fem
from mlmc_ocp.errors import SolverError
from mlmc_ocp.ocp import (
    QUAD5_POINTS,
    QUAD5_WEIGHTS,
    DesiredState,
    OCPConfig,
    evaluate_cost,
    solve_constrained,
    solve_pathwise,
    solve_unconstrained,
)
from mlmc_ocp.randfield import draw_sample
from oracles import dense_kkt_control, projected_gradient_control


def test_unconstrained_matches_dense_kkt(hierarchy):
    mesh = hierarchy[1]
    cfg = OCPConfig()
    for sid in range(5):
        s = draw_sample(11, sid)
        sol = solve_unconstrained(mesh, s, cfg)
        np.testing.assert_allclose(sol.u, dense_kkt_control(mesh, s, cfg.alpha), atol=1e-10)
        assert sol.residual < 1e-12


def test_huge_bounds_reduce_to_unconstrained(hierarchy):
    mesh = hierarchy[3]
    s = draw_sample(11, 2)
    free = solve_pathwise(mesh, s, OCPConfig())
    boxed = solve_pathwise(mesh, s, OCPConfig(u_a=-1e9, u_b=1e9))
    assert boxed.newton_iters >= 1
    assert np.abs(free.u - boxed.u).max() <= 1e-10
    assert boxed.cost_value == pytest.approx(free.cost_value, rel=1e-10)


@pytest.mark.parametrize("bounds", [(-5.0, 5.0), (-0.3, 0.4), (-np.inf, 0.2)])
def test_constrained_matches_projected_gradient(hierarchy, bounds):
    mesh = hierarchy[1]
    ua, ub = bounds
    cfg = OCPConfig(u_a=ua, u_b=ub)
    for sid in range(3):
        s = draw_sample(21, sid)
        sol = solve_constrained(mesh, s, cfg)
        ref, _ = projected_gradient_control(mesh, s, cfg.alpha, ua, ub)
        np.testing.assert_allclose(sol.u, ref, atol=1e-7)


def test_tight_bounds_are_active_and_respected(hierarchy):
    mesh = hierarchy[3]
    cfg = OCPConfig(u_a=-0.5, u_b=0.5)
    sol = solve_constrained(mesh, draw_sample(4, 0), cfg)
    assert 0 < sol.active_fraction < 1
    assert sol.u.min() >= -0.5 and sol.u.max() <= 0.5
    assert sol.residual <= cfg.newton_tol
    assert sol.newton_iters <= 10


def subsampled_rule(n):
    """Centroid rule on the n^2 congruent sub-triangles of the reference triangle."""
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1 / 3) / n, (j + 1 / 3) / n))
            if i + j < n - 1:
                pts.append(((i + 2 / 3) / n, (j + 2 / 3) / n))
    pts = np.array(pts)
    return np.column_stack([1 - pts.sum(axis=1), pts]), np.full(len(pts), 1.0 / len(pts))


def test_clamped_load_against_brute_force(hierarchy):
    """The cut-cell load is exact, the 7-point load is accurate to O(h^3) per element."""
    from mlmc_ocp._kernels._pykernels import clamped_control_terms
    from mlmc_ocp.ocp import control_terms

    mesh = hierarchy[4]
    cfg = OCPConfig(u_a=-0.5, u_b=0.5)
    p = solve_constrained(mesh, draw_sample(4, 0), cfg).p
    V = fem.space(mesh)
    lam, w = subsampled_rule(64)
    bA, MI, _, _ = clamped_control_terms(V.gather(p), V.area, lam, w, cfg.alpha, cfg.u_a, cfg.u_b)
    ref = V.scatter_vector(bA) - V.interior.assemble(MI) @ p / cfg.alpha
    errs = {}
    for mode in ("quadrature5", "cutcell"):
        c = OCPConfig(u_a=-0.5, u_b=0.5, control_integration=mode)
        bA, MI, _, _ = control_terms(mesh, p, c)
        errs[mode] = np.abs(bA - MI @ p / c.alpha - ref).max()
    assert errs["cutcell"] < 1e-7
    assert errs["quadrature5"] < 10 * mesh.h**3


def test_cutcell_agrees_with_quadrature(hierarchy):
    for l in (3, 4, 5):
        mesh = hierarchy[l]
        s = draw_sample(4, 0)
        q = solve_constrained(mesh, s, OCPConfig(u_a=-0.5, u_b=0.5))
        c = solve_constrained(mesh, s, OCPConfig(u_a=-0.5, u_b=0.5, control_integration="cutcell"))
        assert fem.l2_norm(mesh, q.u - c.u) < 0.01 * fem.l2_norm(mesh, c.u)
        assert c.cost_value == pytest.approx(q.cost_value, rel=1e-3)


def test_cycling_case_converges(hierarchy):
    """Pure active-set steps cycle here; the backtracking fallback finishes."""
    cfg = OCPConfig(u_a=-0.5, u_b=0.5)
    ok = 0
    for sid in range(20):
        sol = solve_constrained(hierarchy[2], draw_sample(4, sid), cfg)
        assert sol.residual <= cfg.newton_tol
        assert sol.u.min() >= -0.5 - 1e-12 and sol.u.max() <= 0.5 + 1e-12
        ok += 1
    assert ok == 20


def test_variational_inequality_and_descent(hierarchy):
    mesh = hierarchy[4]
    cfg = OCPConfig(u_a=-1.0, u_b=0.8)
    s = draw_sample(6, 1)
    sol = solve_constrained(mesh, s, cfg)
    g = sol.p + cfg.alpha * sol.u
    for v in (cfg.u_a, cfg.u_b, np.clip(-sol.p / cfg.alpha, cfg.u_a, cfg.u_b)):
        assert (g * (v - sol.u) >= -1e-9).all()
    c = min(max(0.0, cfg.u_a), cfg.u_b)
    assert sol.cost_value <= evaluate_cost(mesh, s, cfg, np.full(mesh.n_interior, c))


def test_zero_target_gives_zero_control(hierarchy):
    for cfg in (OCPConfig(z=0.0), OCPConfig(z=0.0, u_a=-1.0, u_b=1.0)):
        sol = solve_pathwise(hierarchy[3], draw_sample(1, 0), cfg)
        assert not sol.u.any() and not sol.y.any()
        assert sol.cost_value == 0.0


def test_unconstrained_minimises_cost(hierarchy, rng):
    mesh = hierarchy[2]
    cfg = OCPConfig()
    s = draw_sample(8, 3)
    sol = solve_unconstrained(mesh, s, cfg)
    best = evaluate_cost(mesh, s, cfg, sol.u)
    assert best == pytest.approx(sol.cost_value, rel=1e-10)
    for _ in range(10):
        delta = 1e-3 * rng.standard_normal(mesh.n_interior)
        assert evaluate_cost(mesh, s, cfg, sol.u + delta) > best


def test_newton_failure_is_reported(hierarchy):
    cfg = OCPConfig(u_a=-0.5, u_b=0.5, newton_maxit=1)
    with pytest.raises(SolverError) as info:
        solve_constrained(hierarchy[3], draw_sample(4, 7), cfg)
    assert info.value.level == 3 and info.value.sample_id == 7


def test_config_validation():
    with pytest.raises(ValueError):
        OCPConfig(alpha=0.0)
    with pytest.raises(ValueError):
        OCPConfig(u_a=1.0, u_b=0.0)
    with pytest.raises(ValueError):
        OCPConfig(control_integration="exact")
    assert OCPConfig().unconstrained
    assert not OCPConfig(u_b=math.inf, u_a=-1.0).unconstrained
    assert OCPConfig(z="0.5").z == DesiredState("constant", 0.5)


def test_quadrature_rule_is_degree_five(rng):
    # exact integral of b1^i b2^j b3^k over the reference triangle (area 1/2)
    from math import factorial

    for i in range(6):
        for j in range(6 - i):
            k = 5 - i - j if (i + j) <= 5 else 0
            for kk in range(k + 1):
                exact = factorial(i) * factorial(j) * factorial(kk) / factorial(i + j + kk + 2) * 2
                got = QUAD5_WEIGHTS @ (
                    QUAD5_POINTS[:, 0] ** i * QUAD5_POINTS[:, 1] ** j * QUAD5_POINTS[:, 2] ** kk
                )
                assert got == pytest.approx(exact, rel=1e-13)


def test_level2_unit_coefficient_projected_gradient(hierarchy):
    from mlmc_ocp.randfield import fixed_sample

    mesh = hierarchy[2]
    unit = fixed_sample(np.zeros(4))
    for ua, ub in [(-5.0, 5.0), (-0.4, 0.3)]:
        sol = solve_constrained(mesh, unit, OCPConfig(u_a=ua, u_b=ub))
        ref, _ = projected_gradient_control(mesh, unit, 1e-2, ua, ub)
        np.testing.assert_allclose(sol.u, ref, atol=1e-7)


def test_large_alpha_limit(hierarchy):
    mesh = hierarchy[3]
    sol = solve_unconstrained(mesh, draw_sample(0, 0), OCPConfig(alpha=1e8))
    zh = fem.interpolate(mesh, DesiredState())
    assert np.abs(sol.u).max() < 1e-8
    assert sol.cost_value == pytest.approx(0.5 * fem.l2_norm(mesh, zh) ** 2, rel=1e-8)


def test_one_sided_bound_zero_target(hierarchy):
    sol = solve_constrained(hierarchy[3], draw_sample(0, 0), OCPConfig(z=0.0, u_a=0.0))
    assert not sol.u.any()
