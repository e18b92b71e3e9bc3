"""Simultaneous item-bidding all-pay auctions and the welfare inequalities behind the 1.82 bound.

The validators take a mixed profile (usually the product of per-item
single-item equilibria on additive instances) and compare its Monte Carlo
welfare with the analytic right-hand sides built from the profile's CDFs.
They are diagnostics: a general combinatorial equilibrium cannot be
computed here, only checked.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .montecarlo import Estimate, run_chunked, split_samples
from .single_item import SingleItemInstance, bkv_worst_equilibrium
from .strategies import (
    DEFAULT_GRID,
    MixedProfile,
    PiecewiseCDF,
    cdf_eval,
    cdf_integrate,
    cdf_product,
)
from .valuations import XOSValuation, optimal_combinatorial

log = logging.getLogger(__name__)

DEVIATION_FAMILIES = ("per-item-grid", "lemma2-optimal")


@dataclass(frozen=True)
class AuctionOutcome:
    allocation: tuple[int, ...]
    payments: tuple[float, ...]


def _check_bids(bids) -> np.ndarray:
    b = np.asarray(bids, dtype=float)
    if b.ndim != 2:
        raise ValueError("bids must be an n x m matrix")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError("bids must be finite and nonnegative")
    return b


def run_auction(bids, tie_rule: str = "lowest", rng: np.random.Generator | None = None) -> AuctionOutcome:
    """Each item to its highest bidder; every bidder pays the sum of her own bids."""
    b = _check_bids(bids)
    if tie_rule == "lowest":
        win = np.argmax(b, axis=0)
    elif tie_rule == "random":
        if rng is None:
            raise ValueError("random tie-breaking needs an rng")
        top = b == b.max(axis=0, keepdims=True)
        win = np.argmax(rng.random(b.shape) * top, axis=0)
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    return AuctionOutcome(tuple(int(w) for w in win), tuple(float(p) for p in b.sum(axis=1)))


def _winners(b: np.ndarray) -> np.ndarray:
    """Winners per (sample, item) for bids of shape (k, n, m), lowest-index ties."""
    return np.argmax(b, axis=1)


def _welfare_of_draws(b: np.ndarray, Vs: Sequence[XOSValuation]) -> np.ndarray:
    win = _winners(b)
    total = np.zeros(b.shape[0])
    for i, V in enumerate(Vs):
        total += V.value_of_masks(win == i)
    return total


def draw_bids(profile: MixedProfile, samples: int, seed: int, workers: int = 1) -> np.ndarray:
    """All bid draws at once, shape (samples, n, m); deterministic in (seed, workers)."""
    streams = np.random.SeedSequence(seed).spawn(workers)
    parts = [
        profile.sample(k, np.random.default_rng(s))
        for s, k in zip(streams, split_samples(samples, workers))
    ]
    return np.concatenate(parts, axis=0)


def mc_expected_welfare(profile, Vs: Sequence[XOSValuation], samples: int, seed: int, workers: int = 1) -> Estimate:
    """Monte Carlo E[SW]; a pure bid matrix is evaluated exactly with zero standard error."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not isinstance(profile, MixedProfile):
        b = _check_bids(profile)
        w = float(_welfare_of_draws(b[None], Vs)[0])
        return Estimate(w, 0.0, samples)
    if len(Vs) != profile.n_players:
        raise ValueError("one valuation per player required")
    return run_chunked(seed, samples, 1, lambda rng, k: _welfare_of_draws(profile.sample(k, rng), Vs), workers)[0]


def opponents_cdf(profile: MixedProfile, player: int, item: int) -> PiecewiseCDF:
    """F_ij: CDF of the highest bid on ``item`` excluding ``player``."""
    others = [row[item] for k, row in enumerate(profile.cdfs) if k != player]
    if not others:
        return PiecewiseCDF.point_mass_zero()
    return cdf_product(others)


def compute_Aj(F: PiecewiseCDF, o: float) -> float:
    """max over x >= 0 of F(x) o - x; the objective is linear between knots, so knots suffice."""
    if o < 0:
        raise ValueError("item contribution must be nonnegative")
    xs, fs = F.knots
    obj = fs * o - xs
    return float(max(obj.max(), F.atom_at_zero * o))


def argmax_Aj(F: PiecewiseCDF, o: float) -> float:
    """Smallest bid attaining ``compute_Aj``."""
    xs, fs = F.knots
    obj = fs * o - xs
    return float(xs[int(np.argmax(obj))])


def product_bkv_profile(Vs: Sequence[XOSValuation], grid_size: int = DEFAULT_GRID) -> MixedProfile:
    """Per-item single-item equilibria for additive bidders, played independently.

    On each item the top bidder and every bidder tied at the second-highest
    value play the symmetric equilibrium; lower bidders bid 0.
    """
    if not all(V.is_additive for V in Vs):
        raise ValueError("product profiles are equilibria only for additive bidders")
    n, m = len(Vs), Vs[0].n_items
    vals = np.array([V.clauses[0] for V in Vs])
    cols = []
    for j in range(m):
        order = sorted(range(n), key=lambda i: (-vals[i, j], i))
        v1, v2 = vals[order[0], j], vals[order[1], j] if n > 1 else 0.0
        if n < 2 or v2 <= 0:
            raise ValueError(f"item {j} needs two bidders with positive value")
        tied = [i for i in order[1:] if abs(vals[i, j] - v2) <= 1e-12 * v1]
        sub = bkv_worst_equilibrium(SingleItemInstance((v1,) + (v2,) * len(tied)), grid_size)
        col = [PiecewiseCDF.point_mass_zero()] * n
        col[order[0]] = sub.cdfs[0][0]
        for i in tied:
            col[i] = sub.cdfs[1][0]
        cols.append(col)
    return MixedProfile(tuple(tuple(cols[j][i] for j in range(m)) for i in range(n)))


def _inequality_terms(profile: MixedProfile, Vs: Sequence[XOSValuation]):
    O, opt, o = optimal_combinatorial(Vs)
    terms = []
    for j in range(profile.n_items):
        i = O[j]
        A = compute_Aj(opponents_cdf(profile, i, j), o[j])
        upper = o[j] - A
        if upper < 0:
            if upper < -1e-9:
                log.warning("item %d: A_j exceeds o_j by %.3g; clipping the integration range", j, -upper)
            upper = 0.0
        Fj = cdf_product(profile.column(j))
        terms.append((float(o[j]), A, upper, Fj))
    return opt, terms


def _validate(profile, Vs, samples, seed, workers, integrand):
    opt, terms = _inequality_terms(profile, Vs)
    if integrand == "1-F":
        rhs = sum(A + cdf_integrate(F, 0.0, up, "1-F") for _, A, up, F in terms)
    else:
        rhs = sum(cdf_integrate(F, 0.0, up, "sqrtF") for _, A, up, F in terms)
    sw = mc_expected_welfare(profile, Vs, samples, seed, workers)
    slack = sw.mean - rhs
    return {
        "lhs": sw.mean,
        "stderr": sw.stderr,
        "rhs": rhs,
        "slack": slack,
        "holds": bool(slack >= -3.0 * sw.stderr),
        "opt": opt,
        "o": [t[0] for t in terms],
        "A": [t[1] for t in terms],
    }


def validate_inequality_1(profile: MixedProfile, Vs, samples: int, seed: int, workers: int = 1) -> dict:
    """SW(B) against sum_j (A_j + integral_0^{o_j - A_j} (1 - F_j))."""
    return _validate(profile, Vs, samples, seed, workers, "1-F")


def validate_inequality_2(profile: MixedProfile, Vs, samples: int, seed: int, workers: int = 1) -> dict:
    """SW(B) against sum_j integral_0^{o_j - A_j} sqrt(F_j)."""
    return _validate(profile, Vs, samples, seed, workers, "sqrtF")


def combined_poa_bound(lam: float) -> float:
    """(6 lam + 6) / (3 + 4 lam - lam^4): the PoA bound from mixing both inequalities."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    den = 3.0 + 4.0 * lam - lam**4
    if den <= 0:
        raise ValueError(f"bound undefined at lambda={lam} (nonpositive denominator)")
    return (6.0 * lam + 6.0) / den


def scan_poa_bound(lo: float = 0.01, hi: float = 1.0, steps: int = 200):
    """Evaluate the bound on a uniform lambda grid; returns (lams, bounds, argmin, min)."""
    lams = np.linspace(lo, hi, steps)
    bounds = np.array([combined_poa_bound(l) for l in lams])
    k = int(np.argmin(bounds))
    return lams, bounds, float(lams[k]), float(bounds[k])


# -- deviations --------------------------------------------------------------


def _thresholds(opp: np.ndarray, player: int):
    """Highest opposing bid per sample and whether beating it needs a strict inequality.

    ``opp`` has shape (k, n); the player's own column is skipped and a lower
    index opponent wins ties against ``player``.
    """
    lower = opp[:, :player]
    higher = opp[:, player + 1 :]
    mlo = lower.max(axis=1) if lower.shape[1] else np.full(opp.shape[0], -np.inf)
    mhi = higher.max(axis=1) if higher.shape[1] else np.full(opp.shape[0], -np.inf)
    T = np.maximum(mlo, mhi)
    strict = mlo >= mhi
    return T, strict


def wins_with(x, T: np.ndarray, strict: np.ndarray) -> np.ndarray:
    """Whether bid(s) x beat thresholds T (ties decided by ``strict``)."""
    return (x > T) | ((x == T) & ~strict)


@dataclass(frozen=True)
class RegretEstimate:
    regret: float
    stderr: float
    deviation: dict
    family: str
    samples: int


def _player_utility_samples(b: np.ndarray, V: XOSValuation, player: int) -> np.ndarray:
    win = _winners(b)
    return V.value_of_masks(win == player) - b[:, player, :].sum(axis=1)


def _grid_gain_sums(T, strict, D, xs):
    """sum_s win_s(x) D_s for every x in xs, using sorted thresholds."""
    order = np.argsort(T, kind="stable")
    Ts, Ds = T[order], D[order]
    csum = np.concatenate(([0.0], np.cumsum(Ds)))
    below = csum[np.searchsorted(Ts, xs, side="left")]
    ns = ~strict
    Tn, Dn = T[ns], D[ns]
    o2 = np.argsort(Tn, kind="stable")
    Tn, Dn = Tn[o2], Dn[o2]
    c2 = np.concatenate(([0.0], np.cumsum(Dn)))
    eq = c2[np.searchsorted(Tn, xs, side="right")] - c2[np.searchsorted(Tn, xs, side="left")]
    return below + eq


def per_item_grid_regret(b: np.ndarray, V: XOSValuation, player: int, grid: np.ndarray) -> RegretEstimate:
    """Best single-item rebid on a grid, other own bids kept as drawn (common random numbers)."""
    k, n, m = b.shape
    base_u = _player_utility_samples(b, V, player)
    win = _winners(b)
    mask = win == player
    best = (0.0, 0.0, {"kind": "own-strategy"})
    for j in range(m):
        T, strict = _thresholds(b[:, :, j], player)
        with_j = mask.copy()
        with_j[:, j] = True
        without_j = mask.copy()
        without_j[:, j] = False
        v_with = V.value_of_masks(with_j)
        v_without = V.value_of_masks(without_j)
        rest = b[:, player, :].sum(axis=1) - b[:, player, j]
        D = v_with - v_without
        gains = _grid_gain_sums(T, strict, D, grid)
        dev_means = (v_without - rest).mean() + gains / k - grid
        diff = dev_means - base_u.mean()
        a = int(np.argmax(diff))
        if diff[a] > best[0]:
            x = grid[a]
            dev = v_without - rest + wins_with(x, T, strict) * D - x
            se = float(np.std(dev - base_u, ddof=1) / math.sqrt(k))
            best = (float(diff[a]), se, {"kind": "per-item-grid", "item": j, "bid": float(x)})
    return RegretEstimate(best[0], best[1], best[2], "per-item-grid", k)


def threshold_deviation_regret(
    b: np.ndarray, profile: MixedProfile, Vs: Sequence[XOSValuation], player: int
) -> RegretEstimate:
    """Deviation bidding argmax_x F_ij(x) o_j - x on the player's optimal bundle, 0 elsewhere."""
    k, n, m = b.shape
    O, _, o = optimal_combinatorial(Vs)
    x = np.zeros(m)
    for j in range(m):
        if O[j] == player and o[j] > 0:
            x[j] = argmax_Aj(opponents_cdf(profile, player, j), o[j])
    base_u = _player_utility_samples(b, Vs[player], player)
    won = np.zeros((k, m), dtype=bool)
    for j in range(m):
        T, strict = _thresholds(b[:, :, j], player)
        won[:, j] = wins_with(x[j], T, strict)
    dev = Vs[player].value_of_masks(won) - x.sum()
    diff = dev - base_u
    se = float(np.std(diff, ddof=1) / math.sqrt(k))
    gain = float(diff.mean())
    if gain <= 0:
        return RegretEstimate(0.0, se, {"kind": "own-strategy", "threshold_gain": gain}, "lemma2-optimal", k)
    return RegretEstimate(gain, se, {"kind": "lemma2-optimal", "bids": x.tolist()}, "lemma2-optimal", k)


def best_response_regret(
    profile: MixedProfile,
    Vs: Sequence[XOSValuation],
    player: int,
    deviation_family: str,
    samples: int,
    seed: int,
    grid_size: int = 400,
    workers: int = 1,
) -> RegretEstimate:
    """Regret of ``player`` relative to a deviation family (an epsilon-Nash certificate for that family only)."""
    if deviation_family not in DEVIATION_FAMILIES:
        raise ValueError(f"deviation family must be one of {DEVIATION_FAMILIES}")
    b = draw_bids(profile, samples, seed, workers)
    if deviation_family == "lemma2-optimal":
        return threshold_deviation_regret(b, profile, Vs, player)
    top = max(float(V.clauses.max()) for V in Vs)
    grid = np.linspace(0.0, 1.05 * top, grid_size)
    return per_item_grid_regret(b, Vs[player], player, grid)
