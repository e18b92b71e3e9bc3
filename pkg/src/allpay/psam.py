"""Random proportional-share allocation of m identical copies (all bids paid).

Shares are x_i = m b_i / sum(b); integral allocations come from systematic
(circular) rounding, which keeps every X_i in {floor(x_i), ceil(x_i)} and
E[X_i] = x_i exactly.  With submodular bidders the expected utility is
g_i(b_i / sum(b)) - b_i, i.e. Kelly's game on the concave interpolants g_i;
the pure equilibrium is found by bisection on the aggregate bid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .valuations import (
    ConcavePL,
    MultiUnitValuation,
    optimal_multiunit,
    submodular_to_concave,
)

SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class RandomAllocation:
    fractional: np.ndarray
    support: tuple[tuple[tuple[int, ...], float], ...]

    @property
    def m(self) -> int:
        return int(round(float(np.sum(self.fractional))))

    def marginals(self) -> np.ndarray:
        out = np.zeros(len(self.fractional))
        for alloc, p in self.support:
            out += p * np.asarray(alloc, dtype=float)
        return out

    def validate(self, tol: float = 1e-12):
        """Raise ValueError unless the lottery is a valid dependent rounding of ``fractional``."""
        x = np.asarray(self.fractional, dtype=float)
        m = int(round(float(x.sum())))
        probs = np.array([p for _, p in self.support])
        if np.any(probs < -tol) or abs(probs.sum() - 1.0) > tol:
            raise ValueError("support probabilities must be nonnegative and sum to 1")
        lo, hi = np.floor(x), np.ceil(x)
        for alloc, _ in self.support:
            a = np.asarray(alloc)
            if a.sum() != m:
                raise ValueError(f"outcome {alloc} does not allocate all {m} copies")
            if np.any(a < lo) or np.any(a > hi):
                raise ValueError(f"outcome {alloc} leaves the floor/ceil range")
        err = np.max(np.abs(self.marginals() - x))
        if err > tol:
            raise ValueError(f"marginals differ from the fractional allocation by {err:.3g}")
        if len(self.support) > x.size + 1:
            raise ValueError("support larger than n + 1")


@dataclass(frozen=True)
class PsamOutcome:
    allocation: tuple[int, ...]
    payments: tuple[float, ...]


def psam_fractional(bids, m: int) -> np.ndarray:
    b = np.asarray(bids, dtype=float)
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError("bids must be finite and nonnegative")
    total = b.sum()
    if total <= 0:
        return np.zeros_like(b)
    return m * b / total


def _split(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if np.any(x < -SNAP):
        raise ValueError("fractional allocation must be nonnegative")
    x = np.maximum(x, 0.0)
    fl = np.floor(x)
    frac = x - fl
    k = frac.sum()
    if abs(k - round(k)) > 1e-9:
        raise ValueError(f"fractional allocation sums to a non-integer ({x.sum()!r})")
    return x, fl.astype(int), frac, int(round(k))


def _arc_ends(frac: np.ndarray, k: int) -> np.ndarray:
    """Cumulative arc endpoints rescaled to end exactly at k; empty arcs stay empty."""
    cum = np.minimum(np.concatenate(([0.0], np.cumsum(frac))) * (k / frac.sum()), float(k))
    last = int(np.flatnonzero(frac > 0)[-1])
    cum[last + 1 :] = float(k)
    return cum


def _selected(cum: np.ndarray, beyond: np.ndarray) -> np.ndarray:
    """Grid points u, u+1, ... inside each arc [cum[i-1], cum[i]).

    #{j >= 0 : j + u < c} = floor(c) + [u < frac(c)]; ``beyond`` holds the
    comparisons u < frac(c), done on the fractional parts themselves so no
    subtraction can round a point across an arc end.
    """
    below = np.floor(cum) + beyond
    return (below[1:] - below[:-1]).astype(int)


def dependent_round(x) -> RandomAllocation:
    """Systematic rounding: fractional parts laid out as arcs on a circle of circumference k.

    Offsets u in [0, 1) select k points u, u+1, ..., u+k-1; a player whose arc
    contains a point gets the ceiling.  Enumerating the cells between the
    arc endpoints (mod 1) gives at most n+1 outcomes.
    """
    x, fl, frac, k = _split(x)
    if k == 0:
        return RandomAllocation(x, ((tuple(int(a) for a in fl), 1.0),))
    cum = _arc_ends(frac, k)
    r = np.mod(cum, 1.0)
    cuts = np.unique(np.concatenate(([0.0, 1.0], r)))
    outcomes: dict[tuple[int, ...], float] = {}
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        width = hi - lo
        if width <= 0:
            continue
        # every u in the open cell (lo, hi) sits below exactly the cuts >= hi
        alloc = tuple(int(a) for a in fl + _selected(cum, r >= hi))
        outcomes[alloc] = outcomes.get(alloc, 0.0) + float(width)
    support = tuple(sorted(outcomes.items(), key=lambda kv: kv[0], reverse=True))
    return RandomAllocation(x, support)


def round_with_offset(x, u: float) -> tuple[int, ...]:
    """The single outcome of systematic rounding for offset u."""
    if not 0.0 <= u < 1.0:
        raise ValueError("offset must lie in [0, 1)")
    x, fl, frac, k = _split(x)
    if k == 0:
        return tuple(int(a) for a in fl)
    cum = _arc_ends(frac, k)
    return tuple(int(a) for a in fl + _selected(cum, u < np.mod(cum, 1.0)))


def psam_outcome(bids, m: int, u: float) -> PsamOutcome:
    b = np.asarray(bids, dtype=float)
    x = psam_fractional(b, m)
    if b.sum() <= 0:
        return PsamOutcome(tuple(0 for _ in b), tuple(0.0 for _ in b))
    return PsamOutcome(round_with_offset(x, u), tuple(float(p) for p in b))


def _concave(f: MultiUnitValuation, m: int) -> ConcavePL:
    if not f.is_submodular():
        raise ValueError("valuation is not submodular")
    return submodular_to_concave(f, m)


def psam_expected_utility(f: MultiUnitValuation, bids, player: int, m: int) -> float:
    """g_i(b_i / sum b) - b_i, computed from the concave interpolant (no sampling)."""
    g = _concave(f, m)
    b = np.asarray(bids, dtype=float)
    total = b.sum()
    share = b[player] / total if total > 0 else 0.0
    return float(g(share)) - float(b[player])


def psam_utility_by_rounding(f: MultiUnitValuation, bids, player: int, m: int) -> float:
    """Expected utility through the explicit rounding lottery (the mechanism's own definition)."""
    b = np.asarray(bids, dtype=float)
    if b.sum() <= 0:
        return 0.0
    lottery = dependent_round(psam_fractional(b, m))
    value = sum(p * f.values[alloc[player]] for alloc, p in lottery.support)
    return float(value) - float(b[player])


def kelly_utility(g: ConcavePL, b: float, others_total: float) -> float:
    total = b + others_total
    share = b / total if total > 0 else 0.0
    return float(g(share)) - b


def kelly_best_response(g: ConcavePL, others_total: float) -> float:
    """argmax_b g(b / (b + B)) - b for B = others_total > 0; ties go to the smallest b.

    On the segment with slope c the stationary point is sqrt(c B) - B,
    clipped to the bids mapping into that segment's share interval.
    """
    B = float(others_total)
    if not B > 0:
        raise ValueError("best response needs positive opposing bids")
    m = g.m
    cands = [0.0]
    for k, c in enumerate(g.slopes):
        lo_share, hi_share = k / m, (k + 1) / m
        b_lo = B * lo_share / (1.0 - lo_share)
        b_hi = math.inf if hi_share >= 1.0 else B * hi_share / (1.0 - hi_share)
        stat = math.sqrt(c * B) - B if c > 0 else 0.0
        cands.append(min(max(stat, b_lo), b_hi))
        cands.append(b_lo)
    cands = sorted(set(c for c in cands if math.isfinite(c)))
    vals = [kelly_utility(g, b, B) for b in cands]
    best = max(vals)
    for b, u in zip(cands, vals):
        if u >= best - 1e-15 * max(1.0, abs(best)):
            return b
    return cands[int(np.argmax(vals))]


def conditional_share(g: ConcavePL, B: float) -> float:
    """Share theta solving g'(theta)(1 - theta) = B (superdifferential at kinks)."""
    m = g.m
    c = g.slopes
    for k in range(m):
        lo = k / m
        # at the kink lo the superdifferential of g is [c_k, c_{k-1}]
        if c[k] * (1.0 - lo) <= B:
            return lo
        if c[k] > 0:
            theta = 1.0 - B / c[k]
            if theta <= (k + 1) / m:
                return theta
    return 1.0


def _aggregate_shares(gs, B: float) -> float:
    return sum(conditional_share(g, B) for g in gs)


def psam_pure_nash(
    fs: Sequence[MultiUnitValuation],
    m: int,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-15,
    max_iter: int = 400,
) -> np.ndarray:
    """Pure equilibrium bids by bisection on the aggregate bid B.

    Each player's equilibrium share given B solves g_i'(theta)(1 - theta) = B;
    the shares are nonincreasing in B and the equilibrium aggregate solves
    sum_i theta_i(B) = 1.  When that holds on an interval (all players on
    kinks) the largest such B is returned, which makes the answer independent
    of the starting bracket.
    """
    gs = [_concave(f, m) for f in fs]
    active = [g for g in gs if g.slopes[0] > 0]
    if len(active) < 2:
        raise ValueError("need at least two bidders with positive value")
    top = max(g.slopes[0] for g in gs)
    lo, hi = bracket if bracket is not None else (top * 1e-12, top)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    # widen until the bracket straddles the root
    while _aggregate_shares(gs, hi) >= 1.0:
        hi *= 2.0
    tries = 0
    while _aggregate_shares(gs, lo) < 1.0:
        lo *= 1e-3
        tries += 1
        if tries > 100 or lo == 0.0:
            raise ValueError("no pure equilibrium with positive bids: demand saturates below m copies")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol * hi:
            break
        if _aggregate_shares(gs, mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    B = lo
    shares = np.array([conditional_share(g, B) for g in gs])
    return shares * B


def psam_regret(fs: Sequence[MultiUnitValuation], bids, m: int) -> np.ndarray:
    """Per-player utility gain from the exact Kelly best response."""
    b = np.asarray(bids, dtype=float)
    out = np.zeros(b.size)
    for i, f in enumerate(fs):
        g = _concave(f, m)
        B = b.sum() - b[i]
        if B <= 0:
            out[i] = math.inf if g.slopes[0] > 0 else 0.0
            continue
        br = kelly_best_response(g, B)
        out[i] = max(0.0, kelly_utility(g, br, B) - kelly_utility(g, b[i], B))
    return out


def psam_welfare(fs: Sequence[MultiUnitValuation], bids, m: int) -> float:
    """Expected welfare sum_i g_i(share_i); equals the rounded lottery's mean by linearity."""
    x = psam_fractional(bids, m)
    return float(sum(_concave(f, m)(xi / m) for f, xi in zip(fs, x)))


def psam_efficiency(fs: Sequence[MultiUnitValuation], m: int, check: bool = True):
    """Return (equilibrium welfare, optimal welfare, ratio); ratio >= 3/4 is asserted when ``check``."""
    bids = psam_pure_nash(fs, m)
    ne = psam_welfare(fs, bids, m)
    _, opt = optimal_multiunit(fs, m)
    ratio = ne / opt if opt > 0 else 1.0
    if check and ratio < 0.75 - 1e-6:
        raise AssertionError(f"efficiency {ratio} below 3/4")
    return ne, opt, ratio
