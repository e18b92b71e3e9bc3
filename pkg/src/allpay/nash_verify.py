"""Epsilon-Nash certificates: regret of each player against a stated deviation family.

Monte Carlo mechanisms (all-pay auctions) compare the profile's utility with
grid deviations on the same sampled opponent bids; closed-form mechanisms
(first price with pure bids, PSAM) compute regrets exactly.  A certificate is
relative to its family and says nothing about deviations outside it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .montecarlo import Estimate
from .psam import _concave, kelly_best_response, kelly_utility
from .simultaneous import _grid_gain_sums, _thresholds, best_response_regret, draw_bids, wins_with
from .single_item import PrizeVector, rank_order
from .strategies import MixedProfile
from .valuations import MultiUnitValuation, XOSValuation

MECHANISMS = ("single-allpay", "simultaneous-allpay", "first-price", "psam")
EXACT_EPS = 1e-8
MC_EPS_REL = 1e-3


@dataclass
class EquilibriumCertificate:
    mechanism: str
    family: str
    regrets: list[float]
    stderrs: list[float]
    deviations: list[dict]
    eps: float
    samples: int
    seed: int | None
    verdict: str = field(init=False)

    def __post_init__(self):
        refuted = any(r > self.eps + 3.0 * s for r, s in zip(self.regrets, self.stderrs))
        self.verdict = "refuted" if refuted else "certified"

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    @property
    def max_regret(self) -> float:
        return max(self.regrets)

    def to_dict(self) -> dict:
        return asdict(self)


def win_probability(profile: MixedProfile, player: int, item: int, x: float, samples: int, seed: int, workers: int = 1) -> Estimate:
    """Frequency with which bid x takes ``item`` against sampled opponents (lowest index wins ties)."""
    if x < 0:
        raise ValueError("bid must be nonnegative")
    b = draw_bids(profile, samples, seed, workers)
    T, strict = _thresholds(b[:, :, item], player)
    w = wins_with(x, T, strict).astype(float)
    return Estimate(float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size)), int(w.size))


def _order_thresholds(opp: np.ndarray, idx: np.ndarray, player: int):
    """Opponents ranked by (bid, beats-player-on-ties) descending.

    Bid x is outranked by at most r opponents iff it beats the (r+1)-th in
    this order; returns thresholds and strictness flags of shape (k, n-1).
    """
    lower = np.broadcast_to(idx < player, opp.shape)
    order = np.lexsort((~lower, -opp), axis=-1)
    T = np.take_along_axis(opp, order, axis=-1)
    strict = np.take_along_axis(lower, order, axis=-1)
    return T, strict


def _single_item_regret(b: np.ndarray, values: np.ndarray, player: int, grid: np.ndarray, q: np.ndarray):
    k, n = b.shape
    prize_by_rank = np.zeros(n)
    prize_by_rank[: min(q.size, n)] = q[:n]
    # realized utility in the profile
    order = rank_order(b)
    rank = np.argmax(order == player, axis=1)
    base = values[player] * prize_by_rank[rank] - b[:, player]
    opp_idx = np.array([t for t in range(n) if t != player])
    T, strict = _order_thresholds(np.delete(b, player, axis=1), opp_idx, player)
    # E[prize(x)] = q_{n-1} + sum_r (q_r - q_{r+1}) P(outranked by <= r)
    steps = prize_by_rank[:-1] - prize_by_rank[1:]
    dev_mean = np.full(grid.size, values[player] * prize_by_rank[-1]) - grid
    for r in range(n - 1):
        if steps[r] != 0:
            D = np.full(k, values[player] * steps[r])
            dev_mean += _grid_gain_sums(T[:, r], strict[:, r], D, grid) / k
    diff = dev_mean - base.mean()
    a = int(np.argmax(diff))
    if diff[a] <= 0:
        return 0.0, float(np.std(base, ddof=1) / math.sqrt(k)), {"kind": "own-strategy"}
    x = grid[a]
    prize = np.full(k, prize_by_rank[-1])
    for r in range(n - 1):
        prize += steps[r] * wins_with(x, T[:, r], strict[:, r])
    d = values[player] * prize - x - base
    se = float(np.std(d, ddof=1) / math.sqrt(k))
    return float(diff[a]), se, {"kind": "grid", "bid": float(x)}


def _certify_single(profile, values, eps, grid_size, samples, seed, q, workers):
    vals = np.asarray(values, dtype=float)
    if profile.n_items != 1 or profile.n_players != vals.size:
        raise ValueError("single-item certification needs one CDF per value and one item")
    qv = np.array([1.0]) if q is None else np.asarray(q.q if isinstance(q, PrizeVector) else q, dtype=float)
    b = draw_bids(profile, samples, seed, workers)[:, :, 0]
    grid = np.linspace(0.0, 1.05 * vals.max(), grid_size)
    out = [_single_item_regret(b, vals, i, grid, qv) for i in range(vals.size)]
    eps = MC_EPS_REL * vals.max() if eps is None else eps
    return EquilibriumCertificate(
        "single-allpay", f"uniform-grid[{grid_size}]", [o[0] for o in out], [o[1] for o in out],
        [o[2] for o in out], eps, samples, seed,
    )


def _certify_simultaneous(profile, Vs, eps, grid_size, samples, seed, family, workers):
    res = [
        best_response_regret(profile, Vs, i, family, samples, seed, grid_size, workers)
        for i in range(len(Vs))
    ]
    top = max(float(V.clauses.max()) for V in Vs)
    eps = MC_EPS_REL * top if eps is None else eps
    return EquilibriumCertificate(
        "simultaneous-allpay", family, [r.regret for r in res], [r.stderr for r in res],
        [r.deviation for r in res], eps, samples, seed,
    )


def first_price_regret(bids, values, player: int, grid: np.ndarray) -> tuple[float, float]:
    """Exact regret of a pure first-price profile over a bid grid plus the critical bids.

    Lowest index wins ties.  Returns (regret, best deviation).
    """
    b = np.asarray(bids, dtype=float)
    v = float(values[player])
    opp = np.delete(b, player)
    idx = np.delete(np.arange(b.size), player)
    T = opp.max() if opp.size else -math.inf
    strict = bool(opp.size and np.any(idx[opp == T] < player))

    def utility(x):
        return v - x if (x > T or (x == T and not strict)) else 0.0

    cands = np.concatenate((grid, [0.0, max(T, 0.0), b[player]]))
    cands = cands[cands >= 0]
    gains = np.array([utility(x) for x in cands]) - utility(b[player])
    a = int(np.argmax(gains))
    return max(float(gains[a]), 0.0), float(cands[a])


def _certify_first_price(bids, values, eps, grid_size):
    vals = np.asarray(values, dtype=float)
    b = np.asarray(bids, dtype=float).reshape(-1)
    if b.size != vals.size:
        raise ValueError("first-price certification needs one pure bid per value")
    grid = np.linspace(0.0, 1.05 * vals.max(), grid_size)
    out = [first_price_regret(b, vals, i, grid) for i in range(vals.size)]
    return EquilibriumCertificate(
        "first-price", f"uniform-grid[{grid_size}]+critical", [o[0] for o in out], [0.0] * len(out),
        [{"kind": "pure-bid", "bid": o[1]} for o in out], EXACT_EPS if eps is None else eps, 0, None,
    )


def _certify_psam(bids, fs: Sequence[MultiUnitValuation], m, eps):
    b = np.asarray(bids, dtype=float).reshape(-1)
    if m is None:
        raise ValueError("psam certification needs the number of copies m")
    if b.size != len(fs):
        raise ValueError("psam certification needs one bid per valuation")
    regrets, devs = [], []
    for i, f in enumerate(fs):
        g = _concave(f, m)
        B = b.sum() - b[i]
        if B <= 0:
            regrets.append(math.inf if g.slopes[0] > 0 else 0.0)
            devs.append({"kind": "no-opponent-bids"})
            continue
        here = kelly_utility(g, b[i], B)
        br = kelly_best_response(g, B)
        # independent 1-D search as a cross-check of the closed-form best response
        hi = max(float(g.slopes[0]), b[i]) * 1.05
        res = minimize_scalar(lambda x: -kelly_utility(g, x, B), bounds=(0.0, hi), method="bounded",
                              options={"xatol": 1e-12})
        best_b, best_u = br, kelly_utility(g, br, B)
        if -float(res.fun) > best_u:
            best_b, best_u = float(res.x), -float(res.fun)
        regrets.append(float(max(best_u - here, 0.0)))
        devs.append({"kind": "kelly-best-response", "bid": best_b})
    return EquilibriumCertificate(
        "psam", "exact-best-response", regrets, [0.0] * len(regrets), devs,
        EXACT_EPS if eps is None else eps, 0, None,
    )


def certify(
    mechanism: str,
    profile,
    valuations,
    eps: float | None = None,
    grid_size: int = 400,
    samples: int = 10**6,
    seed: int = 0,
    q=None,
    m: int | None = None,
    family: str = "per-item-grid",
    workers: int = 1,
) -> EquilibriumCertificate:
    """Per-player regret over the mechanism's deviation family.

    ``profile`` is a MixedProfile for the all-pay auctions and a pure bid
    vector for first price and PSAM.  ``valuations`` are values (single item,
    first price), XOS valuations (simultaneous) or multi-unit valuations (PSAM).
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}")
    if mechanism == "single-allpay":
        return _certify_single(profile, valuations, eps, grid_size, samples, seed, q, workers)
    if mechanism == "simultaneous-allpay":
        if not all(isinstance(V, XOSValuation) for V in valuations):
            raise ValueError("simultaneous certification needs XOS valuations")
        return _certify_simultaneous(profile, valuations, eps, grid_size, samples, seed, family, workers)
    if mechanism == "first-price":
        return _certify_first_price(profile, valuations, eps, grid_size)
    return _certify_psam(profile, valuations, m, eps)


def atom_diagnostic(profile: MixedProfile, jump: float = 1e-6, width: float = 1e-9) -> dict:
    """Flag interior jumps: a CDF rise above ``jump`` over a segment narrower than ``width`` * scale."""
    scale = max(F.upper for row in profile.cdfs for F in row) or 1.0
    flags = []
    for i, row in enumerate(profile.cdfs):
        for j, F in enumerate(row):
            xs, fs = F.knots
            dx, df = np.diff(xs), np.diff(fs)
            for s in np.flatnonzero((dx <= width * scale) & (df > jump)):
                flags.append({"player": i, "item": j, "at": float(xs[s]), "jump": float(df[s])})
    return {"clean": not flags, "flags": flags}
