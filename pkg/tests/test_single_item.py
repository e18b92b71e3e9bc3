import math

import numpy as np
import pytest

from allpay.single_item import (
    PrizeVector,
    SingleItemInstance,
    allpay_utility,
    bkv_worst_equilibrium,
    equilibrium_welfare,
    first_price_worst_case,
    max_bid_cdf,
    max_bid_lower_bound_check,
    q_mechanism_equilibrium,
    revenue_closed_form,
    simulate,
    top_player_win_probability,
    welfare_T,
)
from allpay.strategies import cdf_eval, expected_max_bid

# welfare at v = 0.5694 from scipy quad on the closed-form densities (independent of the tables)
QUAD_WELFARE = {
    2: 0.87740818,
    4: 0.856457084128622,
    8: 0.849414345479472,
    16: 0.8464451324439248,
    32: 0.8450742898362531,
    64: 0.8444148306906692,
    128: 0.8440913101278271,
    256: 0.8439310685142539,
}


def test_instance_validation():
    with pytest.raises(ValueError):
        SingleItemInstance((0.5, 1.0))
    with pytest.raises(ValueError):
        PrizeVector((0.3, 0.7))
    with pytest.raises(ValueError):
        PrizeVector((0.6, 0.2))


def test_closed_form_cdf_values():
    inst = SingleItemInstance.top_vs_rest(3, 0.5)
    prof = bkv_worst_equilibrium(inst)
    G1, G2 = prof.cdfs[0][0], prof.cdfs[1][0]
    assert cdf_eval(G1, 0.25) == pytest.approx(0.25 / (0.5 * math.sqrt(0.75)), abs=1e-6)
    assert cdf_eval(G2, 0.25) == pytest.approx(math.sqrt(0.75), abs=1e-6)
    assert cdf_eval(G1, 0.5) == 1.0 and cdf_eval(G2, 0.5) == 1.0
    assert G2.atom_at_zero == pytest.approx(math.sqrt(0.5))


def test_two_player_welfare_formula():
    for v in (0.1, 0.5, 0.9):
        inst = SingleItemInstance.top_vs_rest(2, v)
        w = equilibrium_welfare(bkv_worst_equilibrium(inst), inst)
        assert w == pytest.approx(1 - v / 2 + v * v / 2, abs=1e-7)


def test_two_player_poa_is_8_over_7():
    inst = SingleItemInstance.top_vs_rest(2, 0.5)
    w = equilibrium_welfare(bkv_worst_equilibrium(inst), inst)
    assert w == pytest.approx(0.875, abs=1e-9)
    assert 1 / w == pytest.approx(8 / 7, abs=1e-8)


def test_welfare_matches_quadrature_and_decreases_in_n():
    ws = []
    for n, ref in QUAD_WELFARE.items():
        inst = SingleItemInstance.top_vs_rest(n, 0.5694)
        w = equilibrium_welfare(bkv_worst_equilibrium(inst), inst)
        assert w == pytest.approx(ref, abs=1e-7)
        ws.append(w)
    assert all(a >= b for a, b in zip(ws, ws[1:]))
    assert abs(ws[-1] - welfare_T(0.5694)) < 0.01


def test_scaling_is_linear():
    a = SingleItemInstance.top_vs_rest(3, 0.4)
    b = SingleItemInstance.top_vs_rest(3, 0.4, scale=7.0)
    wa = equilibrium_welfare(bkv_worst_equilibrium(a), a)
    wb = equilibrium_welfare(bkv_worst_equilibrium(b), b)
    assert wb == pytest.approx(7 * wa, rel=1e-9)


def test_T_values():
    assert welfare_T(0.5) == pytest.approx(0.5 * math.log(2) + 0.5, abs=1e-12)
    assert welfare_T(0.5694) == pytest.approx(0.8438, abs=1e-4)
    assert 1 / welfare_T(0.5694) == pytest.approx(1.185, abs=1e-3)
    assert welfare_T(1 - 1e-9) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        welfare_T(1.0)


def test_T_minimizer_near_05694():
    vs = np.linspace(0.3, 0.8, 50001)
    assert vs[np.argmin([welfare_T(v) for v in vs])] == pytest.approx(0.5694, abs=2e-4)


def test_revenue_closed_form():
    assert revenue_closed_form(0.5) == pytest.approx(0.34657359, abs=1e-8)
    assert revenue_closed_form(0.01) / 0.01 == pytest.approx(0.5032, abs=1e-3)
    assert revenue_closed_form(1 - 1e-9) == pytest.approx(1.0, abs=1e-6)


def test_max_bid_examples():
    # v1 = v2 = 1, k = 2: F = x^2 and E[h] = 2/3 (chord error of the 4097-point table is ~1e-8)
    eh, bound, holds = max_bid_lower_bound_check(SingleItemInstance((1.0, 1.0)), 2)
    assert eh == pytest.approx(2 / 3, abs=1e-7) and bound == 0.5 and holds
    # quad oracle for k = 200, v2 = 1/2
    eh, bound, holds = max_bid_lower_bound_check(SingleItemInstance((1.0, 0.5)), 200)
    assert eh == pytest.approx(0.2502424582775494, abs=1e-9) and holds


@pytest.mark.parametrize("v", [0.05, 0.3, 0.7, 1.0])
@pytest.mark.parametrize("k", [2, 5, 50])
def test_max_bid_at_least_half_v2(v, k):
    _, _, holds = max_bid_lower_bound_check(SingleItemInstance((1.0, v)), k)
    assert holds
    assert max_bid_cdf(SingleItemInstance((1.0, v)), k).upper == pytest.approx(v)


@pytest.mark.parametrize("n, v", [(2, 0.5), (3, 0.5), (5, 0.5694), (2, 0.9)])
def test_utility_constant_on_support(n, v):
    inst = SingleItemInstance.top_vs_rest(n, v)
    prof = bkv_worst_equilibrium(inst)
    xs = np.linspace(v / 400, v, 400)
    above = np.linspace(v * 1.001, 1.2, 50)
    for i in range(n):
        u = allpay_utility(prof, inst.values, i, xs)
        assert np.ptp(u) <= 1e-3
        assert np.all(allpay_utility(prof, inst.values, i, above) <= u.mean() + 1e-3)
    # top player earns 1 - v, the rest earn 0
    assert allpay_utility(prof, inst.values, 0, v / 2) == pytest.approx(1 - v, abs=1e-6)


def test_players_beyond_second_bid_zero_when_v1_above_v2():
    q = PrizeVector.top_two(0.8, 0.2)
    prof, _, _ = q_mechanism_equilibrium(0.1, q, n=5)
    for i in range(2, 5):
        assert prof.cdfs[i][0].atom_at_zero == 1.0


def test_q_mechanism_closed_forms():
    q = PrizeVector.top_two(0.8, 0.2)
    prof, rev, max_bid = q_mechanism_equilibrium(0.1, q)
    assert rev == pytest.approx(0.033, abs=1e-12)
    assert rev < 0.05
    # quad oracle: integral of 1 - G1 G2 over [0, v (q1 - q2)]
    assert max_bid == pytest.approx(0.031, abs=1e-9)
    xs = np.linspace(0.001, 0.06, 200)
    for i, val in enumerate((1.0, 0.1)):
        u = allpay_utility(prof, (1.0, 0.1, 0.0), i, xs, q=q)
        assert np.ptp(u) <= 1e-3 * val + 1e-12


def test_q_mechanism_monte_carlo_revenue():
    q = PrizeVector.top_two(0.8, 0.2)
    prof, rev, max_bid = q_mechanism_equilibrium(0.1, q)
    est = simulate(prof, (1.0, 0.1, 0.0), 200_000, seed=11, q=q)
    assert est["revenue"].within(rev)
    assert est["max_bid"].within(max_bid)


def test_first_price_worst_case():
    bids, rev, mb = first_price_worst_case(SingleItemInstance((1.0, 0.6, 0.3)))
    assert list(bids) == [0.6, 0.6, 0.6] and rev == 0.6 and mb == 0.6


def test_simulation_welfare_and_determinism():
    inst = SingleItemInstance.top_vs_rest(2, 0.5)
    prof = bkv_worst_equilibrium(inst)
    a = simulate(prof, inst.values, 300_000, seed=5)
    b = simulate(prof, inst.values, 300_000, seed=5)
    assert a["welfare"].mean == b["welfare"].mean
    assert a["welfare"].within(0.875, sigmas=4)
    # revenue is at least the expected max bid
    assert a["revenue"].mean >= a["max_bid"].mean
    assert a["max_bid"].within(expected_max_bid(prof, 0), sigmas=4)


def test_workers_change_streams_but_not_statistics():
    inst = SingleItemInstance.top_vs_rest(3, 0.5)
    prof = bkv_worst_equilibrium(inst)
    a = simulate(prof, inst.values, 200_000, seed=5, workers=1)
    b = simulate(prof, inst.values, 200_000, seed=5, workers=2)
    c = simulate(prof, inst.values, 200_000, seed=5, workers=2)
    assert b["welfare"].mean == c["welfare"].mean
    assert abs(a["welfare"].mean - b["welfare"].mean) < 5 * a["welfare"].stderr * math.sqrt(2)


def test_top_player_win_probability_two_uniforms():
    from allpay.strategies import MixedProfile, PiecewiseCDF

    prof = MixedProfile.single_item([PiecewiseCDF.uniform(), PiecewiseCDF.uniform()])
    assert top_player_win_probability(prof) == pytest.approx(0.5, abs=1e-9)
