"""Tabulated bid distributions and mixed bidding profiles.

Every bid CDF in the package is a :class:`PiecewiseCDF`: a monotone table on
a strictly increasing grid, linearly interpolated, with an optional atom at
zero.  Evaluation, inverse-transform sampling, products (highest-bid CDFs)
and integrals all work off the same table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_GRID = 4097

INTEGRANDS = ("1-F", "sqrtF", "F")


@dataclass(frozen=True, eq=False)
class PiecewiseCDF:
    """Monotone CDF table with linear interpolation and a possible atom at 0.

    For ``0 < x < grid[0]`` the CDF is interpolated between ``(0, atom_at_zero)``
    and ``(grid[0], values[0])``; for ``x >= grid[-1]`` it is 1.
    """

    atom_at_zero: float
    grid: np.ndarray
    values: np.ndarray
    exact_tag: str | None = None
    _xs: np.ndarray = field(init=False, repr=False)
    _fs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        atom = float(self.atom_at_zero)
        if grid.ndim != 1 or grid.size == 0 or grid.shape != values.shape:
            raise ValueError("grid and values must be nonempty 1-D arrays of equal length")
        if not np.all(np.isfinite(grid)) or grid[0] < 0:
            raise ValueError("grid must be finite and nonnegative")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not 0.0 <= atom <= 1.0:
            raise ValueError(f"atom_at_zero={atom} outside [0, 1]")
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise ValueError("CDF values must lie in [0, 1]")
        if np.any(np.diff(values) < -1e-12):
            raise ValueError("CDF values must be nondecreasing")
        if abs(values[-1] - 1.0) > 1e-12:
            raise ValueError(f"terminal CDF value {values[-1]!r} is not 1")
        if values[0] < atom - 1e-12:
            raise ValueError("first CDF value is below the atom at zero")
        if grid[0] == 0.0 and abs(values[0] - atom) > 1e-12:
            # a jump right after 0 would be an atom at 0 of a different size
            raise ValueError("values[0] must equal atom_at_zero when grid starts at 0")
        values = np.clip(np.maximum.accumulate(values), 0.0, 1.0)
        values[-1] = 1.0
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "atom_at_zero", atom)
        if grid[0] > 0.0:
            xs = np.concatenate(([0.0], grid))
            fs = np.concatenate(([atom], values))
        else:
            xs, fs = grid, values
        xs.setflags(write=False)
        fs.setflags(write=False)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_fs", fs)

    @property
    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Interpolation knots including the point ``(0, atom_at_zero)``."""
        return self._xs, self._fs

    @property
    def upper(self) -> float:
        """Smallest tabulated bid at which the CDF reaches 1."""
        return float(self.grid[-1])

    def __call__(self, x):
        return cdf_eval(self, x)

    @classmethod
    def point_mass_zero(cls) -> "PiecewiseCDF":
        """Strategy that always bids 0."""
        return cls(1.0, np.array([0.0]), np.array([1.0]), exact_tag="zero")

    @classmethod
    def uniform(cls, hi: float = 1.0) -> "PiecewiseCDF":
        return cls(0.0, np.array([0.0, hi]), np.array([0.0, 1.0]), exact_tag=f"uniform[0,{hi}]")


@dataclass(frozen=True)
class MixedProfile:
    """Independent per-(player, item) bid distributions; ``cdfs[i][j]`` is G_ij."""

    cdfs: tuple[tuple[PiecewiseCDF, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.cdfs)
        if not rows or not rows[0]:
            raise ValueError("profile needs at least one player and one item")
        width = len(rows[0])
        for r in rows:
            if len(r) != width:
                raise ValueError("every player needs one CDF per item")
            for F in r:
                if not isinstance(F, PiecewiseCDF):
                    raise TypeError(f"expected PiecewiseCDF, got {type(F).__name__}")
        object.__setattr__(self, "cdfs", rows)

    @property
    def n_players(self) -> int:
        return len(self.cdfs)

    @property
    def n_items(self) -> int:
        return len(self.cdfs[0])

    @classmethod
    def single_item(cls, cdfs: Sequence[PiecewiseCDF]) -> "MixedProfile":
        return cls(tuple((F,) for F in cdfs))

    def column(self, item: int) -> list[PiecewiseCDF]:
        return [row[item] for row in self.cdfs]

    def sample(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """Draw independent bid matrices; result has shape (n_samples, n_players, n_items)."""
        out = np.empty((n_samples, self.n_players, self.n_items))
        for i, row in enumerate(self.cdfs):
            for j, F in enumerate(row):
                out[:, i, j] = cdf_sample(F, rng.random(n_samples))
        return out


def endpoint_dense_grid(lo: float, hi: float, n: int = DEFAULT_GRID) -> np.ndarray:
    """Grid on [lo, hi] clustered toward both endpoints (cosine spacing)."""
    if not hi > lo:
        raise ValueError("need hi > lo")
    if n < 2:
        raise ValueError("need at least two grid points")
    t = np.linspace(0.0, 1.0, n)
    g = lo + (hi - lo) * 0.5 * (1.0 - np.cos(np.pi * t))
    g[0], g[-1] = lo, hi
    return g


def tabulate(
    func: Callable[[np.ndarray], np.ndarray],
    hi: float,
    n: int = DEFAULT_GRID,
    lo: float = 0.0,
    exact_tag: str | None = None,
) -> PiecewiseCDF:
    """Tabulate a closed-form CDF on [lo, hi]; the atom at zero is ``func(0)`` when lo == 0.

    Raises if the tabulated function jumps inside the support, since only
    atoms at 0 are representable.
    """
    grid = endpoint_dense_grid(lo, hi, n)
    values = np.asarray(func(grid), dtype=float)
    if abs(values[-1] - 1.0) > 1e-9:
        raise ValueError(f"closed form does not reach 1 at the support end ({values[-1]!r})")
    values = np.clip(values, 0.0, 1.0)
    values[-1] = 1.0
    if lo == 0.0:
        atom = float(values[0])
    else:
        atom = 0.0
        if values[0] > 1e-12:
            raise ValueError("CDF starting above 0 at a positive bid would need an interior atom")
    return PiecewiseCDF(atom, grid, values, exact_tag=exact_tag)


def _as_money(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("bids must be nonnegative")
    return arr


def cdf_eval(F: PiecewiseCDF, x):
    """Evaluate F at bid(s) x >= 0 by linear interpolation; F(0) is the atom."""
    arr = _as_money(x)
    xs, fs = F.knots
    out = np.interp(arr, xs, fs, left=F.atom_at_zero, right=1.0)
    out = np.where(arr == 0.0, F.atom_at_zero, out)
    return float(out) if np.ndim(out) == 0 else out


def cdf_sample(F: PiecewiseCDF, u):
    """Inverse-transform sample for uniform variate(s) u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u >= 1):
        raise ValueError("uniform variates must lie in [0, 1)")
    xs, fs = F.knots
    # first knot whose CDF value exceeds u
    k = np.searchsorted(fs, u, side="right")
    k = np.clip(k, 1, len(xs) - 1)
    f0, f1 = fs[k - 1], fs[k]
    x0, x1 = xs[k - 1], xs[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(f1 > f0, (u - f0) / (f1 - f0), 0.0)
    out = x0 + np.clip(w, 0.0, 1.0) * (x1 - x0)
    out = np.where(u < F.atom_at_zero, 0.0, out)
    return float(out) if out.ndim == 0 else out


def cdf_product(Fs: Iterable[PiecewiseCDF], tol: float = 1e-10, max_points: int = 2_000_000) -> PiecewiseCDF:
    """CDF of the maximum of independent bids: pointwise product of the members.

    The product of linear pieces is a polynomial, so merged segments are
    subdivided until the linear interpolant is within ``tol`` of the exact
    product (bounded via the second derivative on each segment).
    """
    Fs = list(Fs)
    if not Fs:
        raise ValueError("cdf_product needs at least one CDF")
    if len(Fs) == 1:
        return Fs[0]
    atom = float(np.prod([F.atom_at_zero for F in Fs]))
    merged = np.unique(np.concatenate([F.knots[0] for F in Fs]))
    merged = merged[merged <= max(F.upper for F in Fs)]
    if merged[0] != 0.0:
        merged = np.concatenate(([0.0], merged))
    # slopes of every member on every merged segment
    dx = np.diff(merged)
    slopes = np.empty((len(Fs), dx.size))
    for a, F in enumerate(Fs):
        vals = np.interp(merged, *F.knots, right=1.0)
        slopes[a] = np.diff(vals) / dx
    s1 = np.abs(slopes).sum(axis=0)
    s2 = (slopes**2).sum(axis=0)
    curvature = s1**2 - s2  # bounds |(prod)''| since every other factor is <= 1
    pieces = np.ceil(dx * np.sqrt(np.maximum(curvature, 0.0) / (8.0 * tol)))
    pieces = np.maximum(pieces, 1).astype(np.int64)
    if pieces.sum() > max_points:
        pieces = np.maximum(1, np.floor(pieces * (max_points / pieces.sum()))).astype(np.int64)
    seg = np.repeat(np.arange(dx.size), pieces)
    starts = np.repeat(np.cumsum(pieces) - pieces, pieces)
    offs = (np.arange(seg.size) - starts) / pieces[seg]
    grid = np.concatenate((merged[seg] + dx[seg] * offs, merged[-1:]))
    values = np.ones_like(grid)
    for F in Fs:
        values *= np.interp(grid, *F.knots, right=1.0)
    return PiecewiseCDF(atom, grid, values, exact_tag="product")


def _segment_integrals(x0, x1, f0, f1, integrand: str):
    w = x1 - x0
    if integrand == "F":
        return 0.5 * (f0 + f1) * w
    if integrand == "1-F":
        return w - 0.5 * (f0 + f1) * w
    # sqrt of a linear function, integrated exactly
    f0 = np.maximum(f0, 0.0)
    f1 = np.maximum(f1, 0.0)
    df = f1 - f0
    flat = np.abs(df) <= 1e-15
    with np.errstate(invalid="ignore", divide="ignore"):
        curved = (2.0 / 3.0) * w * (f1**1.5 - f0**1.5) / df
    return np.where(flat, np.sqrt(0.5 * (f0 + f1)) * w, curved)


def cdf_integrate(F: PiecewiseCDF, a: float, b: float, integrand: str = "1-F") -> float:
    """Integrate 1-F, sqrt(F) or F over [a, b].

    F is piecewise linear between knots, so each segment is integrated in
    closed form; the result is exact for the tabulated CDF.
    """
    if integrand not in INTEGRANDS:
        raise ValueError(f"integrand must be one of {INTEGRANDS}")
    if a < 0 or b < a:
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")
    if b == a:
        return 0.0
    xs, fs = F.knots
    inner = xs[(xs > a) & (xs < b)]
    pts = np.concatenate(([a], inner, [b]))
    vals = np.interp(pts, xs, fs, right=1.0)
    total = _segment_integrals(pts[:-1], pts[1:], vals[:-1], vals[1:], integrand).sum()
    return float(total)


def expected_max_bid(profile: MixedProfile, item: int) -> float:
    """E[highest bid on ``item``] = integral of 1 - F_j over its support."""
    Fj = cdf_product(profile.column(item))
    return cdf_integrate(Fj, 0.0, Fj.upper, "1-F")


def ks_distance(samples, F: PiecewiseCDF) -> float:
    """Sup distance between the empirical CDF of ``samples`` and F (atoms handled)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("ks_distance needs at least one sample")
    uniq, counts = np.unique(x, return_counts=True)
    ecdf_right = np.cumsum(counts) / x.size
    ecdf_left = np.concatenate(([0.0], ecdf_right[:-1]))
    f_at = np.asarray(cdf_eval(F, uniq), dtype=float).reshape(-1)
    # F is continuous except at 0, where the left limit is 0
    f_left = np.where(uniq == 0.0, 0.0, f_at)
    return float(max(np.max(np.abs(ecdf_right - f_at)), np.max(np.abs(ecdf_left - f_left))))


def dkw_bound(n: int, alpha: float = 0.01) -> float:
    """Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))
