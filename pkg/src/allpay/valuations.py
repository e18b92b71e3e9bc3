"""Bidder valuations: XOS clause lists (items) and concave multi-unit curves (copies)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

WELFARE_TOL = 1e-9


def _item_mask(S: Iterable[int], n_items: int) -> np.ndarray:
    mask = np.zeros(n_items, dtype=bool)
    for j in S:
        if not 0 <= int(j) < n_items:
            raise IndexError(f"item {j} out of range for {n_items} items")
        mask[int(j)] = True
    return mask


@dataclass(frozen=True, eq=False)
class XOSValuation:
    """v(S) = max over clauses of the additive clause value of S."""

    clauses: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.clauses, dtype=float))
        if c.size == 0 or c.ndim != 2:
            raise ValueError("XOS valuation needs a nonempty list of clauses")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("clause entries must be finite and nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "clauses", c)

    @classmethod
    def additive(cls, values: Sequence[float]) -> "XOSValuation":
        return cls(np.asarray([values], dtype=float))

    @property
    def n_items(self) -> int:
        return self.clauses.shape[1]

    @property
    def is_additive(self) -> bool:
        return self.clauses.shape[0] == 1

    def value_of_masks(self, masks: np.ndarray) -> np.ndarray:
        """Vectorized v over boolean item masks of shape (..., n_items)."""
        return np.max(masks.astype(float) @ self.clauses.T, axis=-1)

    def __call__(self, S) -> float:
        return xos_value(self, S)


@dataclass(frozen=True, eq=False)
class MultiUnitValuation:
    """Value f(k) for receiving k identical copies, k = 0..m."""

    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.values, dtype=float)
        if f.ndim != 1 or f.size < 1:
            raise ValueError("multi-unit valuation must be a 1-D vector f(0..m)")
        if f[0] != 0.0:
            raise ValueError("multi-unit valuation must satisfy f(0) = 0")
        if np.any(np.diff(f) < -WELFARE_TOL):
            raise ValueError("multi-unit valuation must be nondecreasing")
        f.setflags(write=False)
        object.__setattr__(self, "values", f)

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def marginals(self) -> np.ndarray:
        return np.diff(self.values)

    def is_submodular(self, tol: float = WELFARE_TOL) -> bool:
        return bool(np.all(np.diff(self.marginals) <= tol))


@dataclass(frozen=True, eq=False)
class ConcavePL:
    """Piecewise-linear g on [0, 1] with g(k/m) = f(k)."""

    m: int
    knots: np.ndarray

    @property
    def slopes(self) -> np.ndarray:
        """Slope of g on each segment [k/m, (k+1)/m] (share units)."""
        return self.m * np.diff(self.knots)

    def is_concave(self, tol: float = WELFARE_TOL) -> bool:
        return bool(np.all(np.diff(self.slopes) <= tol))

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        if np.any(th < -1e-15) or np.any(th > 1 + 1e-15):
            raise ValueError("share must lie in [0, 1]")
        x = np.clip(th, 0.0, 1.0) * self.m
        k = np.minimum(np.floor(x), self.m - 1).astype(int)
        f = self.knots
        out = f[k] + (x - k) * (f[k + 1] - f[k])
        return float(out) if out.ndim == 0 else out


def xos_value(V: XOSValuation, S) -> float:
    mask = _item_mask(S, V.n_items)
    if not mask.any():
        return 0.0
    return float(np.max(V.clauses[:, mask].sum(axis=1)))


def xos_maximizing_clause(V: XOSValuation, S) -> int:
    """Index of a clause attaining v(S); ties go to the lowest index."""
    mask = _item_mask(S, V.n_items)
    if not mask.any():
        raise ValueError("maximizing clause is undefined for the empty set")
    return int(np.argmax(V.clauses[:, mask].sum(axis=1)))


def xos_marginal_check(V: XOSValuation, S, tol: float = 1e-12) -> tuple[bool, float]:
    """Check v(S) >= sum_j (v(S) - v(S minus j)); returns (holds, slack)."""
    S = sorted(set(int(j) for j in S))
    vS = xos_value(V, S)
    marg = 0.0
    for j in S:
        marg += vS - xos_value(V, [i for i in S if i != j])
    slack = vS - marg
    return slack >= -tol, slack


def optimal_combinatorial(Vs: Sequence[XOSValuation], max_assignments: int = 10**7):
    """Exhaustive welfare maximization over item partitions.

    Returns ``(assignment, welfare, o)`` where ``assignment[j]`` is the player
    receiving item j in the lexicographically smallest optimal assignment and
    ``o[j]`` is item j's contribution through that player's maximizing clause.
    """
    n = len(Vs)
    if n == 0:
        raise ValueError("need at least one bidder")
    m = Vs[0].n_items
    if any(V.n_items != m for V in Vs):
        raise ValueError("all valuations must cover the same items")
    if n**m > max_assignments:
        raise ValueError(f"instance too large for exhaustive search ({n}^{m} assignments)")
    # welfare of every assignment, vectorized over the n^m product
    assign = np.array(list(itertools.product(range(n), repeat=m)), dtype=int).reshape(-1, m)
    welfare = np.zeros(assign.shape[0])
    for i, V in enumerate(Vs):
        welfare += V.value_of_masks(assign == i)
    best = welfare.max()
    # first index within tolerance is the lexicographically smallest optimum
    k = int(np.flatnonzero(welfare >= best - WELFARE_TOL)[0])
    O = assign[k]
    o = np.zeros(m)
    for i, V in enumerate(Vs):
        items = np.flatnonzero(O == i)
        if items.size:
            c = xos_maximizing_clause(V, items)
            o[items] = V.clauses[c, items]
    return tuple(int(i) for i in O), float(welfare[k]), o


def submodular_to_concave(f: MultiUnitValuation, m: int) -> ConcavePL:
    if f.m != m:
        raise ValueError(f"valuation covers {f.m} units, expected {m}")
    return ConcavePL(m, np.array(f.values))


def _require_submodular(fs: Sequence[MultiUnitValuation]):
    for i, f in enumerate(fs):
        if not f.is_submodular():
            raise ValueError(f"valuation {i} is not submodular (marginals increase)")


def optimal_multiunit(fs: Sequence[MultiUnitValuation], m: int, brute_force: bool = False):
    """Welfare-maximizing integral split of m copies.

    Greedy on marginals (ties to the lowest player index) for submodular
    input; ``brute_force=True`` enumerates all splits instead and accepts any
    monotone input.
    """
    for f in fs:
        if f.m != m:
            raise ValueError(f"valuation covers {f.m} units, expected {m}")
    if brute_force:
        return brute_force_multiunit(fs, m)
    _require_submodular(fs)
    alloc = [0] * len(fs)
    for _ in range(m):
        gains = [f.values[a + 1] - f.values[a] if a < m else -np.inf for f, a in zip(fs, alloc)]
        alloc[int(np.argmax(gains))] += 1
    welfare = float(sum(f.values[a] for f, a in zip(fs, alloc)))
    return tuple(alloc), welfare


def brute_force_multiunit(fs: Sequence[MultiUnitValuation], m: int):
    """Enumerate every composition of m into len(fs) parts."""
    n = len(fs)
    best, best_alloc = -np.inf, None
    for cut in itertools.combinations(range(m + n - 1), n - 1):
        bounds = (-1,) + cut + (m + n - 1,)
        alloc = tuple(bounds[k + 1] - bounds[k] - 1 for k in range(n))
        w = sum(f.values[a] for f, a in zip(fs, alloc))
        if w > best + WELFARE_TOL:
            best, best_alloc = w, alloc
    return best_alloc, float(best)


def continuous_concave_optimum(gs: Sequence[ConcavePL]) -> tuple[np.ndarray, float]:
    """Maximize sum_i g_i(theta_i) over the simplex as a linear program over segments.

    Independent of the greedy: each g_i is split into its linear pieces, each a
    variable in [0, 1/m] with its slope as objective weight.
    """
    from scipy.optimize import linprog

    weights = np.concatenate([g.slopes for g in gs])
    bounds = [(0.0, 1.0 / g.m) for g in gs for _ in range(g.m)]
    res = linprog(-weights, A_ub=np.ones((1, weights.size)), b_ub=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"linear program failed: {res.message}")
    shares, start = [], 0
    for g in gs:
        shares.append(res.x[start : start + g.m].sum())
        start += g.m
    return np.array(shares), float(-res.fun)
