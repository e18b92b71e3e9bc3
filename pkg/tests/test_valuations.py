import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allpay.valuations import (
    ConcavePL,
    MultiUnitValuation,
    XOSValuation,
    brute_force_multiunit,
    continuous_concave_optimum,
    optimal_combinatorial,
    optimal_multiunit,
    submodular_to_concave,
    xos_marginal_check,
    xos_maximizing_clause,
    xos_value,
)


def test_xos_value_takes_best_clause():
    V = XOSValuation([[1.0, 0.0, 2.0], [0.5, 0.5, 0.5]])
    assert xos_value(V, [0, 1]) == 1.0
    assert xos_value(V, [1]) == 0.5
    assert xos_value(V, []) == 0.0
    assert xos_maximizing_clause(V, [0, 2]) == 0


def test_xos_rejects_bad_input():
    with pytest.raises(ValueError):
        XOSValuation([[-1.0, 2.0]])
    with pytest.raises(IndexError):
        xos_value(XOSValuation.additive([1.0]), [3])


def test_marginal_check_unit_demand_slack():
    # unit demand on 3 items: v(S)=1, every marginal is 0
    V = XOSValuation(np.eye(3))
    holds, slack = xos_marginal_check(V, [0, 1, 2])
    assert holds and slack == 1.0


def _brute_assignment(Vs):
    n, m = len(Vs), Vs[0].n_items
    best = -1.0
    for a in itertools.product(range(n), repeat=m):
        w = sum(xos_value(V, [j for j in range(m) if a[j] == i]) for i, V in enumerate(Vs))
        best = max(best, w)
    return best


def test_optimal_combinatorial_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        Vs = [XOSValuation(rng.random((rng.integers(1, 4), 3))) for _ in range(3)]
        O, w, o = optimal_combinatorial(Vs)
        assert w == pytest.approx(_brute_assignment(Vs), abs=1e-12)
        assert o.sum() == pytest.approx(w, abs=1e-12)


def test_optimal_combinatorial_tie_goes_to_lowest_assignment():
    Vs = [XOSValuation.additive([1.0, 1.0]), XOSValuation.additive([1.0, 1.0])]
    O, w, _ = optimal_combinatorial(Vs)
    assert O == (0, 0) and w == 2.0


def test_multiunit_valuation_checks():
    with pytest.raises(ValueError):
        MultiUnitValuation([1.0, 2.0])
    with pytest.raises(ValueError):
        MultiUnitValuation([0.0, 2.0, 1.0])
    assert not MultiUnitValuation([0.0, 1.0, 3.0]).is_submodular()
    with pytest.raises(ValueError):
        optimal_multiunit([MultiUnitValuation([0.0, 1.0, 3.0])], 2)


def test_concave_interpolant():
    g = submodular_to_concave(MultiUnitValuation([0.0, 2.0, 3.0]), 2)
    assert g(0.25) == pytest.approx(1.0)
    assert g(0.75) == pytest.approx(2.5)
    assert list(g.slopes) == [4.0, 2.0]
    assert g.is_concave()


@st.composite
def submodular_sets(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 6))
    fs = []
    for _ in range(n):
        marg = sorted(draw(st.lists(st.floats(0.0, 5.0), min_size=m, max_size=m)), reverse=True)
        fs.append(MultiUnitValuation(np.concatenate(([0.0], np.cumsum(marg)))))
    return fs, m


@settings(max_examples=80, deadline=None)
@given(submodular_sets())
def test_greedy_equals_brute_force(case):
    fs, m = case
    _, greedy = optimal_multiunit(fs, m)
    _, brute = brute_force_multiunit(fs, m)
    assert greedy == pytest.approx(brute, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(submodular_sets())
def test_integral_optimum_equals_lp_relaxation(case):
    # concave interpolants have breakpoints at multiples of 1/m, so the LP over segments is integral
    fs, m = case
    _, opt = optimal_multiunit(fs, m)
    _, lp = continuous_concave_optimum([submodular_to_concave(f, m) for f in fs])
    assert lp == pytest.approx(opt, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda k: st.integers(1, 5).flatmap(
            lambda m: st.tuples(
                st.lists(st.lists(st.floats(0.0, 10.0), min_size=m, max_size=m), min_size=k, max_size=k),
                st.sets(st.integers(0, m - 1)),
            )
        )
    )
)
def test_marginal_sum_property(case):
    clauses, S = case
    V = XOSValuation(clauses)
    holds, slack = xos_marginal_check(V, S)
    assert holds
    if V.is_additive:
        assert abs(slack) <= 1e-12
