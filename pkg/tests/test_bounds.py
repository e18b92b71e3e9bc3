import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allpay.bounds import (
    L_sqrt_case,
    L_value,
    PropInput,
    R_closed_form,
    R_lower_bound,
    R_value,
    h_value,
    hatF_construct,
    hatF_family,
    hatF_jump,
    prop1_min_search,
    prop1_random_check,
    prop1_value,
    random_cdf,
)
from allpay.strategies import PiecewiseCDF, tabulate


def test_prop1_examples():
    assert prop1_value(PropInput([1, 1], [1, 1]))[:2] == (2.0, 1.0)
    H, root, holds = prop1_value(PropInput([1, 1], [1, 3]))
    assert H == pytest.approx(10 / 3) and holds
    with pytest.raises(ValueError):
        PropInput([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        PropInput([0.5, 1.0], [1.0, -1.0])


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_prop1_random_draws(n):
    holds, gap = prop1_random_check(n, 100_000, seed=n)
    assert holds and gap >= -1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 7).flatmap(lambda n: st.tuples(
    st.lists(st.floats(1e-6, 1.0), min_size=n, max_size=n),
    st.lists(st.floats(1e-4, 1e4), min_size=n, max_size=n))))
def test_prop1_property(case):
    G, g = case
    assert prop1_value(PropInput(G, g))[2]


def test_single_concentrated_player_closed_form():
    # G = (F, 1, ..., 1), g = (c, 1, ..., 1): H = c/(n-1) + (n-1)/(c/F + n - 2)
    n, F = 10, 0.25
    for c in (0.5, 2.5, 7.0):
        G = np.array([F] + [1.0] * (n - 1))
        g = np.array([c] + [1.0] * (n - 1))
        assert h_value(G, g) == pytest.approx(c / (n - 1) + (n - 1) / (c / F + n - 2), rel=1e-13)


def test_min_search_target_one():
    r = prop1_min_search(4, 1.0, starts=32, seed=1)
    assert r.minimum >= 1.0
    assert r.minimum == pytest.approx(4 / 3, abs=1e-9)


def test_min_search_never_below_bound():
    r = prop1_min_search(5, 0.3, starts=32, seed=2)
    assert r.holds and r.minimum >= math.sqrt(0.3) - 1e-9
    assert np.prod(r.G) == pytest.approx(0.3, rel=1e-12)


def test_L_examples():
    assert L_value(5, 5, 0.4, 3.0) == pytest.approx(5 / 4 * 0.4)
    assert L_value(10, 2, 0.25, 1e6) == pytest.approx(0.5, abs=1e-5)
    with pytest.raises(ValueError):
        L_value(3, 4, 0.5, 1.0)


def test_L_grid_lower_bounds():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(2, 30))
        k = int(rng.integers(1, n + 1))
        a = float(rng.uniform(1e-3, 1.0))
        g = float(np.exp(rng.uniform(-8, 8)))
        L = L_value(n, k, a, g)
        assert L >= a - 1e-12
        if L_sqrt_case(k, a):
            assert L >= math.sqrt(a) - 1e-12


def test_R_examples():
    assert R_value(PiecewiseCDF.point_mass_zero(), 1.0, 0.7) == (1.0, 1.0)
    A, R = R_value(PiecewiseCDF.uniform(), 1.0, 0.0)
    assert A == 0.0 and R == pytest.approx(0.5)


def test_R_lower_bound_values():
    assert R_lower_bound(0.56) == pytest.approx(0.856943, abs=1e-6)
    assert R_lower_bound(0.0) == 0.5
    assert R_lower_bound(1.0) == 1.0
    with pytest.raises(ValueError):
        R_lower_bound(1.2)


@pytest.mark.parametrize("lam", [0.2, 0.56, 0.9])
def test_hatF_family_is_tight(lam):
    t = lam * lam
    # the split of t between A and x0 does not matter
    for A in (0.0, 0.3 * t, t):
        _, R = R_value(hatF_family(A, t - A, 1.0), 1.0, lam)
        assert R == pytest.approx(R_lower_bound(lam), abs=1e-9)
        assert R_closed_form(lam, t) == pytest.approx(R_lower_bound(lam), abs=1e-15)


def test_hatF_for_x_squared():
    F = tabulate(lambda x: x * x, 1.0)
    A, x0 = hatF_jump(F, 1.0)
    assert A == 0.0
    # area match 2/3 = x0 + (1 - x0)^2 / 2 gives x0 = 1/sqrt(3)
    assert x0 == pytest.approx(1 / math.sqrt(3), abs=1e-7)
    H = hatF_construct(F, 1.0)
    assert R_value(F, 1.0, 0.56)[1] >= R_value(H, 1.0, 0.56)[1]


def test_hatF_fixed_point():
    H = hatF_family(0.1, 0.3, 1.0)
    A, x0 = hatF_jump(H, 1.0)
    assert A == pytest.approx(0.1, abs=1e-12) and x0 == pytest.approx(0.3, abs=1e-9)


def test_hatF_preserves_A_and_area():
    rng = np.random.default_rng(7)
    from allpay.strategies import cdf_integrate

    for _ in range(200):
        F = random_cdf(rng)
        v = float(rng.uniform(0.2, 2.0))
        A, R = R_value(F, v, 0.0)
        H = hatF_construct(F, v)
        AH, RH = R_value(H, v, 0.0)
        assert AH == pytest.approx(A, abs=1e-9)
        assert cdf_integrate(H, 0, v - A, "1-F") == pytest.approx(cdf_integrate(F, 0, v - A, "1-F"), abs=1e-9)


def test_random_cdfs_respect_bounds():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        F = random_cdf(rng)
        for lam in (0.2, 0.56, 0.9):
            R = R_value(F, 1.0, lam)[1]
            assert R >= R_lower_bound(lam) - 1e-6
            assert R >= R_value(hatF_construct(F, 1.0), 1.0, lam)[1] - 1e-9
