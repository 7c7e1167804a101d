import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mlmc_ocp.randfield import (
    PAPER_BASIS,
    draw_sample,
    evaluate_coeff,
    field_extrema,
    fixed_sample,
    make_basis,
)
from mlmc_ocp.randfield import _uniforms


def hand_log_coeff(y, x1, x2):
    """Four-mode expansion written out term by term."""
    lo, hi = 0.42 * np.pi, 1.17 * np.pi
    return (
        0.84 * y[0] * np.cos(lo * x1) * np.cos(lo * x2)
        + 0.45 * y[1] * np.cos(lo * x1) * np.sin(hi * x2)
        + 0.45 * y[2] * np.sin(hi * x1) * np.cos(lo * x2)
        + 0.25 * y[3] * np.sin(hi * x1) * np.sin(hi * x2)
    )


def test_paper_basis_matches_hand_expansion(rng):
    y = rng.standard_normal(4)
    pts = rng.uniform(-0.5, 0.5, size=(50, 2))
    got = fixed_sample(y).log_coeff(pts)
    np.testing.assert_allclose(got, hand_log_coeff(y, pts[:, 0], pts[:, 1]), rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(evaluate_coeff(fixed_sample(y), pts), np.exp(got))


def test_zero_weights_give_unit_coefficient():
    s = fixed_sample(np.zeros(4))
    assert field_extrema(s) == (1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(0, 10**9), st.integers(0, 64))
def test_draws_are_pure(seed, sid, stream):
    a = draw_sample(seed, sid, stream)
    b = draw_sample(seed, sid, stream)
    np.testing.assert_array_equal(a.y, b.y)
    assert np.isfinite(a.y).all()


def test_streams_and_ids_differ():
    base = draw_sample(7, 3, 0).y
    assert not np.array_equal(base, draw_sample(7, 3, 1).y)
    assert not np.array_equal(base, draw_sample(7, 4, 0).y)
    assert not np.array_equal(base, draw_sample(8, 3, 0).y)


def test_long_bases_do_not_share_blocks():
    # more than four draws per sample must not reuse the next id's block
    a = _uniforms(1, 0, 10, 16)
    b = _uniforms(1, 0, 11, 16)
    assert np.intersect1d(a, b).size == 0


def test_weights_are_standard_normal():
    y = np.array([draw_sample(2024, i).y for i in range(4000)])
    for k in range(4):
        assert stats.kstest(y[:, k], "norm").pvalue > 1e-3
    corr = np.corrcoef(y.T)
    np.testing.assert_allclose(corr, np.eye(4), atol=0.06)


def test_upper_bound_dominates(rng):
    for i in range(20):
        s = draw_sample(99, i)
        lo, hi = field_extrema(s, 33)
        assert 0 < lo <= hi <= s.upper_bound()


def test_bad_arguments():
    with pytest.raises(ValueError):
        draw_sample(-1, 0)
    with pytest.raises(ValueError):
        draw_sample(0, -1)
    with pytest.raises(ValueError):
        make_basis((1.0, 2.0))
    with pytest.raises(ValueError):
        field_extrema(fixed_sample(np.zeros(4)), 1)


def test_custom_frequencies_change_field():
    b = make_basis(freq_low=1.0, freq_high=2.0)
    y = np.ones(4)
    pt = np.array([[0.3, -0.2]])
    assert fixed_sample(y, b)(pt)[0] != fixed_sample(y, PAPER_BASIS)(pt)[0]
