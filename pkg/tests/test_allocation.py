import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_ocp.estimators import (
    RateParams,
    allocate_samples,
    allocate_samples_numeric,
    constraint_value,
    continuous_allocation,
    level_sizes,
    power_law_costs,
    theorem_allocation,
)

# sample counts of the reference study: h0 = 1/4, s = 1, gamma = 2.4, c0 = 1/2
TABLE = {
    1: [183, 24],
    2: [4815, 631, 83],
    3: [102258, 13387, 1753, 230],
    4: [1948277, 255053, 33390, 4372, 573],
    5: [34878076, 4565950, 597737, 78251, 10244, 1342],
}


@pytest.mark.parametrize("L", sorted(TABLE))
def test_reference_table(L):
    plans = allocate_samples(L, RateParams(), power_law_costs(L, 0.25, 2.4), 0.25)
    got = np.array([p.M for p in plans])
    assert np.abs(got - TABLE[L]).max() <= 1


def test_power_law_ratio():
    for s, g in [(1.0, 2.4), (0.5, 1.0), (0.8, 3.0)]:
        r = RateParams(s=s, gamma=g)
        M = continuous_allocation(6, r, power_law_costs(6, 0.5, g), 0.5)
        if (M > 1).all():
            np.testing.assert_allclose(M[:-1] / M[1:], 2 ** ((4 * s + 2 * g) / 3), rtol=1e-12)


def test_theorem_allocation_ratio():
    r = RateParams(s=1.0, gamma=2.4)
    M = theorem_allocation(5, r, 0.25)
    np.testing.assert_allclose(M[:-1] / M[1:], 2 ** ((2.4 + 4) / 2), rtol=1e-12)


def test_single_level():
    for c0 in (0.5, 0.3, 1.0):
        plans = allocate_samples(0, RateParams(c0=c0), [3.0], 0.25)
        assert plans[0].M == math.ceil(1 / c0**2 - 1e-9)
        M = continuous_allocation(0, RateParams(c0=c0), [3.0], 0.25)
        assert M[0] == pytest.approx(1 / c0**2)


@settings(max_examples=40, deadline=None)
@given(
    L=st.integers(0, 6),
    s=st.floats(0.5, 1.0),
    gamma=st.floats(1.0, 3.0),
    c0=st.floats(0.1, 1.0),
    h0=st.sampled_from([1.0, 0.5, 0.25]),
    noise=st.lists(st.floats(0.5, 2.0), min_size=7, max_size=7),
)
def test_plans_satisfy_constraint(L, s, gamma, c0, h0, noise):
    r = RateParams(s=s, gamma=gamma, c0=c0)
    costs = power_law_costs(L, h0, gamma) * np.array(noise[: L + 1])
    plans = allocate_samples(L, r, costs, h0)
    h = level_sizes(L, h0)
    M = [p.M for p in plans]
    assert min(M) >= 1
    assert constraint_value(M, h, s) <= c0 * h[-1] ** (2 * s) * (1 + 1e-12)
    cont = continuous_allocation(L, r, costs, h0)
    assert constraint_value(cont, h, s) == pytest.approx(c0 * h[-1] ** (2 * s), rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_closed_form_matches_numeric_oracle(seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(0, 7))
    r = RateParams(s=rng.uniform(0.5, 1), gamma=rng.uniform(1, 3), c0=rng.uniform(0.1, 1))
    h0 = 0.25
    costs = power_law_costs(L, h0, r.gamma) * rng.uniform(0.5, 2.0, L + 1)
    M = continuous_allocation(L, r, costs, h0)
    ref = allocate_samples_numeric(L, r, costs, h0)
    np.testing.assert_allclose(M, ref, rtol=1e-6, atol=1e-3)


def test_pinned_levels():
    # very expensive fine level: its KKT value drops below one and gets pinned
    r = RateParams(s=1.0, gamma=2.0, c0=4.0)
    costs = np.array([1.0, 1e3])
    M = continuous_allocation(1, r, costs, 1.0)
    assert M[1] == 1.0
    ref = allocate_samples_numeric(1, r, costs, 1.0)
    assert np.abs(M - ref).max() < 0.01


def test_sample_scale():
    costs = power_law_costs(3, 0.25, 2.4)
    full = [p.M for p in allocate_samples(3, RateParams(), costs, 0.25)]
    tenth = [p.M for p in allocate_samples(3, RateParams(), costs, 0.25, sample_scale=0.1)]
    assert all(math.ceil(f / 10) - 1 <= t <= math.ceil(f / 10) + 1 for f, t in zip(full, tenth))
    with pytest.raises(ValueError):
        allocate_samples(3, RateParams(), costs, 0.25, sample_scale=0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        allocate_samples(2, RateParams(), [1.0, 2.0], 0.25)
    with pytest.raises(ValueError):
        allocate_samples(1, RateParams(), [1.0, -2.0], 0.25)
    with pytest.raises(ValueError):
        RateParams(s=0.0)
    assert RateParams().consistent and not RateParams(s=1.2).consistent
