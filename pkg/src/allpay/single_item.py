"""Single-item all-pay auctions: closed-form equilibria and their welfare, revenue and max bid.

Constructors normalize the top value to 1 internally and rescale bids and
outputs by ``scale = v1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .montecarlo import Estimate, run_chunked
from .strategies import (
    DEFAULT_GRID,
    MixedProfile,
    PiecewiseCDF,
    cdf_eval,
    cdf_integrate,
    expected_max_bid,
    tabulate,
)

T_MINIMIZER = 0.5694


@dataclass(frozen=True)
class SingleItemInstance:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("need at least one bidder")
        if any(v < 0 for v in vals):
            raise ValueError("values must be nonnegative")
        if any(a < b for a, b in zip(vals, vals[1:])):
            raise ValueError("values must be sorted in nonincreasing order")
        object.__setattr__(self, "values", vals)

    @classmethod
    def top_vs_rest(cls, n: int, v: float, scale: float = 1.0) -> "SingleItemInstance":
        """v1 = scale and v2 = ... = vn = v * scale."""
        return cls((scale,) + (v * scale,) * (n - 1))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def scale(self) -> float:
        return self.values[0]

    @property
    def v1(self) -> float:
        return self.values[0]

    @property
    def v2(self) -> float:
        return self.values[1] if self.n > 1 else 0.0


@dataclass(frozen=True)
class PrizeVector:
    """Probability q_r that the r-th highest bidder receives the item."""

    q: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(x) for x in self.q)
        if len(q) < 2:
            raise ValueError("prize vector needs at least q1 and q2")
        if any(x < 0 or x > 1 for x in q):
            raise ValueError("prize probabilities must lie in [0, 1]")
        if abs(sum(q) - 1.0) > 1e-12:
            raise ValueError(f"prize probabilities sum to {sum(q)}, not 1")
        if not q[1] < q[0]:
            raise ValueError("need q2 < q1")
        object.__setattr__(self, "q", q)

    @classmethod
    def top_two(cls, q1: float, q2: float) -> "PrizeVector":
        rest = 1.0 - q1 - q2
        return cls((q1, q2) if abs(rest) <= 1e-12 else (q1, q2, rest))

    @property
    def q1(self) -> float:
        return self.q[0]

    @property
    def q2(self) -> float:
        return self.q[1]


def _check_open_unit(v: float, name: str = "v"):
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {v}")


def bkv_worst_equilibrium(inst: SingleItemInstance, grid_size: int = DEFAULT_GRID) -> MixedProfile:
    """Equilibrium with v1 = 1 and v2 = ... = vn = v where players 2..n play symmetrically.

    G1(x) = x / (v (1-v+x)^((n-2)/(n-1))) and Gi(x) = (1-v+x)^(1/(n-1)) on [0, v];
    the Gi carry an atom (1-v)^(1/(n-1)) at zero.
    """
    n = inst.n
    if n < 2:
        raise ValueError("need at least two bidders")
    s = inst.scale
    if s <= 0:
        raise ValueError("top value must be positive")
    v = inst.v2 / s
    if not 0.0 < v <= 1.0:
        raise ValueError(f"normalized second value must lie in (0, 1], got {v}")
    if any(abs(x - inst.v2) > 1e-12 * s for x in inst.values[1:]):
        raise ValueError("players 2..n must share the same value")
    e1 = (n - 2) / (n - 1)
    e2 = 1.0 / (n - 1)

    def g1(x):
        y = x / s
        return y / (v * (1.0 - v + y) ** e1)

    def gi(x):
        return (1.0 - v + x / s) ** e2

    hi = v * s
    G1 = tabulate(g1, hi, grid_size, exact_tag=f"bkv-top(n={n},v={v})")
    Gi = tabulate(gi, hi, grid_size, exact_tag=f"bkv-rest(n={n},v={v})")
    return MixedProfile.single_item([G1] + [Gi] * (n - 1))


def welfare_T(v: float) -> float:
    """Limit (n -> infinity) equilibrium welfare with OPT = 1."""
    _check_open_unit(v)
    return (1.0 - v) ** 2 / v * math.log(1.0 / (1.0 - v)) + v


def revenue_closed_form(v: float) -> float:
    """Limit (k -> infinity) equilibrium revenue with v1 = 1, v2 = v."""
    _check_open_unit(v)
    return v - (1.0 - v) * (1.0 + (1.0 - v) / v * math.log(1.0 - v))


def top_player_win_probability(profile: MixedProfile, tol: float = 1e-6, max_level: int = 12) -> float:
    """P(player 1 wins) = integral of F_1 dG_1 over player 1's table.

    Trapezoid Stieltjes sums on G_1's segments (G_1 is linear on each, so
    dG_1 is exact); segments are halved until the sum changes by < tol.
    Player 1 wins ties at 0 under the lowest-index rule.
    """
    col = profile.column(0)
    G1, others = col[0], col[1:]
    if not others:
        return 1.0

    def F1(x):
        out = np.ones_like(x)
        for G in others:
            out = out * np.asarray(cdf_eval(G, x))
        return out

    xs, fs = G1.knots
    atom_part = G1.atom_at_zero * float(F1(np.array([0.0]))[0])
    prev = None
    for level in range(max_level + 1):
        k = 1 << level
        t = np.arange(k + 1) / k
        pts = xs[:-1, None] + np.diff(xs)[:, None] * t[None, :]
        dG = (np.diff(fs) / k)[:, None]
        h = F1(pts.ravel()).reshape(pts.shape)
        total = atom_part + float(np.sum(0.5 * (h[:, :-1] + h[:, 1:]) * dG))
        if prev is not None and abs(total - prev) < tol:
            return total
        prev = total
    return prev


def equilibrium_welfare(profile: MixedProfile, inst: SingleItemInstance) -> float:
    """v1 P1 + v (1 - P1) for a profile where players 2..n share value v."""
    P1 = top_player_win_probability(profile)
    return inst.v1 * P1 + inst.v2 * (1.0 - P1)


def max_bid_cdf(inst: SingleItemInstance, k: int, grid_size: int = DEFAULT_GRID) -> PiecewiseCDF:
    """F(x) = (x/v2) ((v1 - v2 + x)/v1)^(1/(k-1)) on [0, v2]: the symmetric-k max-bid CDF."""
    if k < 2:
        raise ValueError("need k >= 2")
    v1, v2 = inst.v1, inst.v2
    if v2 <= 0:
        raise ValueError("second value must be positive")

    def F(x):
        return (x / v2) * ((v1 - v2 + x) / v1) ** (1.0 / (k - 1))

    return tabulate(F, v2, grid_size, exact_tag=f"max-bid(k={k})")


def max_bid_lower_bound_check(inst: SingleItemInstance, k: int, grid_size: int = DEFAULT_GRID, tol: float = 1e-9):
    """Return (E[max bid], v2/2, E[max bid] >= v2/2 - tol) for the symmetric-k equilibrium."""
    F = max_bid_cdf(inst, k, grid_size)
    eh = cdf_integrate(F, 0.0, F.upper, "1-F")
    bound = inst.v2 / 2.0
    return eh, bound, eh >= bound - tol


def q_mechanism_equilibrium(v: float, q: PrizeVector, n: int = 3, grid_size: int = DEFAULT_GRID):
    """Equilibrium of the prize-vector all-pay mechanism for values (1, v, 0, ..., 0).

    Returns ``(profile, revenue, max_bid)``; revenue is the closed form
    v(q1-q2)/2 + v^2(q1-q2)/2 and max_bid integrates 1 - G1 G2.
    """
    _check_open_unit(v)
    if n < 2:
        raise ValueError("need at least two bidders")
    d = q.q1 - q.q2
    hi = v * d
    G1 = tabulate(lambda x: x / hi, hi, grid_size, exact_tag="q-top")
    G2 = tabulate(lambda x: x / d + 1.0 - v, hi, grid_size, exact_tag="q-second")
    profile = MixedProfile.single_item([G1, G2] + [PiecewiseCDF.point_mass_zero()] * (n - 2))
    revenue = v * d / 2.0 + v * v * d / 2.0
    return profile, revenue, expected_max_bid(profile, 0)


def first_price_worst_case(inst: SingleItemInstance):
    """Everyone bids v2; with ties favoring player 1 this is a pure equilibrium.

    Returns ``(bids, revenue, max_bid)``.
    """
    if inst.n < 2:
        raise ValueError("need at least two bidders")
    bids = np.full(inst.n, inst.v2)
    return bids, float(inst.v2), float(inst.v2)


def winners(bids: np.ndarray, tie_rule: str = "lowest", rng: np.random.Generator | None = None) -> np.ndarray:
    """Index of the highest bid along the last axis; ties to the lowest index or uniformly at random."""
    if tie_rule == "lowest":
        return np.argmax(bids, axis=-1)
    if tie_rule == "random":
        if rng is None:
            raise ValueError("random tie-breaking needs an rng")
        top = bids == bids.max(axis=-1, keepdims=True)
        noise = rng.random(bids.shape) * top
        return np.argmax(noise, axis=-1)
    raise ValueError(f"unknown tie rule {tie_rule!r}")


def rank_order(bids: np.ndarray) -> np.ndarray:
    """Players sorted by decreasing bid per row, ties to the lower index."""
    n = bids.shape[-1]
    idx = np.broadcast_to(np.arange(n), bids.shape)
    return np.lexsort((idx, -bids), axis=-1)


def simulate(
    profile: MixedProfile,
    values: Sequence[float],
    samples: int,
    seed: int,
    q: PrizeVector | None = None,
    workers: int = 1,
    tie_rule: str = "lowest",
) -> dict[str, Estimate]:
    """Monte Carlo welfare, revenue and max bid of a single-item all-pay profile."""
    vals = np.asarray(values, dtype=float)
    if profile.n_items != 1 or profile.n_players != vals.size:
        raise ValueError("profile must be single-item with one CDF per value")

    def chunk(rng, k):
        b = profile.sample(k, rng)[:, :, 0]
        if q is None:
            w = winners(b, tie_rule, rng)
            welfare = vals[w]
        else:
            order = rank_order(b)
            welfare = np.zeros(k)
            for r, qr in enumerate(q.q[: vals.size]):
                welfare += qr * vals[order[:, r]]
        return np.column_stack((welfare, b.sum(axis=1), b.max(axis=1)))

    est = run_chunked(seed, samples, 3, chunk, workers)
    return dict(zip(("welfare", "revenue", "max_bid"), est))


def allpay_utility(
    profile: MixedProfile,
    values: Sequence[float],
    player: int,
    x,
    q: PrizeVector | None = None,
):
    """Exact expected utility of bidding x > 0 against the tabulated opponents (ties ignored)."""
    x = np.asarray(x, dtype=float)
    col = profile.column(0)
    others = [G for k, G in enumerate(col) if k != player]
    G = np.array([np.asarray(cdf_eval(H, x)) for H in others]).reshape(len(others), -1)
    win = np.prod(G, axis=0)
    if q is None:
        prize = win
    else:
        # exactly one opponent above x
        second = np.zeros_like(win)
        for a in range(len(others)):
            rest = np.prod(np.delete(G, a, axis=0), axis=0)
            second += (1.0 - G[a]) * rest
        prize = q.q1 * win + q.q2 * second
    out = values[player] * prize - x.reshape(-1)
    return out.reshape(x.shape) if x.ndim else float(out[0])
