"""Analytic inequalities behind the efficiency bounds, evaluated numerically.

* H(G, g) = sum_i g_i / sum_{k != i} g_k / G_k against sqrt(prod G), with a
  multi-start search for the minimum of H at fixed prod G.
* The auxiliary function L(n, k, a, g) that lower-bounds H.
* R(F, v) = A + int_0^{v-A} (1 - F) + lam int_0^{v-A} sqrt(F), the
  area-preserving replacement hatF, and the closed-form lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .simultaneous import compute_Aj
from .strategies import PiecewiseCDF, cdf_integrate

G_CAP = 1e8
# width of the steep ramp standing in for hatF's interior jump (relative to v)
JUMP_WIDTH = 1e-12


@dataclass(frozen=True, eq=False)
class PropInput:
    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if G.ndim != 1 or G.shape != g.shape or G.size < 2:
            raise ValueError("G and g must be 1-D of equal length n >= 2")
        if np.any(G <= 0) or np.any(G > 1):
            raise ValueError("every G_i must lie in (0, 1]")
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise ValueError("every g_i must be positive and finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)


def h_terms(G: np.ndarray, g: np.ndarray) -> np.ndarray:
    """H_i = g_i / sum_{k != i} g_k/G_k along the last axis."""
    r = g / G
    return g / (r.sum(axis=-1, keepdims=True) - r)


def h_value(G: np.ndarray, g: np.ndarray) -> np.ndarray:
    return h_terms(G, g).sum(axis=-1)


def prop1_value(p: PropInput, tol: float = 1e-12):
    """Return (H, sqrt(prod G), H >= sqrt(prod G) - tol)."""
    H = float(h_value(p.G, p.g))
    root = math.sqrt(float(np.prod(p.G)))
    return H, root, H >= root - tol


def prop1_random_check(n: int, draws: int, seed: int, tol: float = 1e-12):
    """Evaluate the inequality on random (G, g); returns (all hold, smallest H - sqrt(prod G))."""
    rng = np.random.default_rng(seed)
    G = 1.0 - rng.random((draws, n))  # (0, 1]
    # a quarter of the draws put some G_i exactly at 1
    G[: draws // 4] = np.where(rng.random((draws // 4, n)) < 0.5, 1.0, G[: draws // 4])
    g = np.exp(rng.uniform(-8.0, 8.0, (draws, n)))
    gap = h_value(G, g) - np.sqrt(np.prod(G, axis=1))
    return bool(np.all(gap >= -tol)), float(gap.min())


@dataclass
class MinSearchResult:
    minimum: float
    G: np.ndarray
    g: np.ndarray
    bound: float
    boundary_hit: bool
    starts: int

    @property
    def holds(self) -> bool:
        return self.minimum >= self.bound - 1e-9


def _unpack(z: np.ndarray, n: int, total: float):
    # -ln G_i = total * softmax(w)_i keeps prod G fixed; g_i = exp(t_i)
    w = z[:n]
    e = np.exp(w - w.max())
    G = np.exp(-total * e / e.sum())
    return G, np.exp(z[n:])


def _coordinate_descent(z, n, total, log_cap, sweeps, tol):
    def f(x):
        G, g = _unpack(x, n, total)
        return float(h_value(G, g))

    best = f(z)
    for _ in range(sweeps):
        start = best
        for c in range(2 * n):
            if c < n:
                lo, hi = z[c] - 12.0, z[c] + 12.0
            else:
                lo, hi = 0.0, log_cap

            def along(x, c=c):
                z[c] = x
                return f(z)

            keep = z[c]
            res = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
            if res.fun < best:
                z[c], best = res.x, float(res.fun)
            else:
                z[c] = keep
        if start - best <= tol:
            break
    return z, best


def prop1_min_search(
    n: int,
    target_product: float,
    starts: int = 32,
    seed: int = 0,
    g_cap: float = G_CAP,
    sweeps: int = 60,
    tol: float = 1e-13,
) -> MinSearchResult:
    """Minimize H over (G, g) with prod G = target_product.

    Multi-start coordinate descent: -ln G is a softmax share of -ln(target),
    g is log-parameterized in [1, g_cap] (H is scale-invariant in g).  Besides
    ``starts`` random points, one structured start per k puts the whole
    product on k players with a range of g ratios.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not 0.0 < target_product <= 1.0:
        raise ValueError("target product must lie in (0, 1]")
    if starts < 1:
        raise ValueError("need at least one start")
    total = -math.log(target_product)
    log_cap = math.log(g_cap)
    rng = np.random.default_rng(seed)

    inits = []
    for _ in range(starts):
        w = rng.normal(size=n) * rng.uniform(0.1, 4.0)
        t = rng.uniform(0.0, log_cap, n) * rng.uniform(0.0, 1.0)
        inits.append(np.concatenate((w, t)))
    for k in range(1, n + 1):
        w = np.where(np.arange(n) < k, 0.0, -30.0)
        t = np.where(np.arange(n) < k, rng.uniform(0.0, 3.0), 0.0)
        inits.append(np.concatenate((w, t)))

    best, best_z = math.inf, None
    for z0 in inits:
        z, val = _coordinate_descent(z0.copy(), n, total, log_cap, sweeps, tol)
        if val < best:
            best, best_z = val, z
    G, g = _unpack(best_z, n, total)
    hit = bool(np.any(best_z[n:] >= log_cap - 1e-6))
    return MinSearchResult(best, G, g, math.sqrt(target_product), hit, len(inits))


def L_value(n: int, k: int, a: float, g: float) -> float:
    """L = k g / ((k-1) g/a + n-k) + (n-k) / (k g/a + n-k-1)."""
    if n < 2 or not 1 <= k <= n:
        raise ValueError("need n >= 2 and 1 <= k <= n")
    if not 0.0 < a <= 1.0:
        raise ValueError("a must lie in (0, 1]")
    if not g > 0:
        raise ValueError("g must be positive")
    first = k * g / ((k - 1) * g / a + n - k)
    if k == n:
        return first
    return first + (n - k) / (k * g / a + n - k - 1)


def L_sqrt_case(k: int, a: float) -> bool:
    """Whether k <= 1/(1 - sqrt a), the regime where L >= sqrt(a)."""
    return a >= 1.0 or k <= 1.0 / (1.0 - math.sqrt(a))


def R_value(F: PiecewiseCDF, v: float, lam: float):
    """Return (A, R) with A = max_x F(x) v - x."""
    if not v > 0:
        raise ValueError("v must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    A = min(compute_Aj(F, v), v)
    L = v - A
    R = A + cdf_integrate(F, 0.0, L, "1-F") + lam * cdf_integrate(F, 0.0, L, "sqrtF")
    return A, R


def hatF_family(A: float, x0: float, v: float) -> PiecewiseCDF:
    """0 on [0, x0], (x + A)/v on (x0, v - A].

    The jump at x0 > 0 is drawn as a linear ramp of width JUMP_WIDTH * v,
    since interior atoms are not representable; integrals move by O(JUMP_WIDTH * v).
    """
    if not v > 0:
        raise ValueError("v must be positive")
    L = v - A
    if A < 0 or L < 0 or x0 < 0 or x0 > L:
        raise ValueError("need 0 <= A <= v and 0 <= x0 <= v - A")
    if L <= 0:
        return PiecewiseCDF.point_mass_zero()
    delta = JUMP_WIDTH * v
    if x0 <= delta:
        return PiecewiseCDF(A / v, np.array([0.0, L]), np.array([A / v, 1.0]), exact_tag="hatF")
    if L - x0 <= delta:
        # the whole jump goes to 1 at x0: 0 on [0, x0) then certain
        return PiecewiseCDF(0.0, np.array([x0, x0 + delta]), np.array([0.0, 1.0]), exact_tag="hatF")
    grid = np.array([x0, x0 + delta, L])
    vals = np.array([0.0, (x0 + delta + A) / v, 1.0])
    return PiecewiseCDF(0.0, grid, vals, exact_tag="hatF")


def hatF_jump(F: PiecewiseCDF, v: float):
    """(A, x0) for the replacement of F: same A, same area of 1 - F on [0, v - A].

    Area match x0 + (L - x0)^2 / (2v) = I with L = v - A gives
    x0 = sqrt(v^2 - 2v (L - I)) - A.
    """
    A = min(compute_Aj(F, v), v)
    L = v - A
    I = cdf_integrate(F, 0.0, L, "1-F")
    x0 = math.sqrt(max(v * v - 2.0 * v * (L - I), 0.0)) - A
    return A, min(max(x0, 0.0), L)


def hatF_construct(F: PiecewiseCDF, v: float) -> PiecewiseCDF:
    A, x0 = hatF_jump(F, v)
    return hatF_family(A, x0, v)


def R_lower_bound(lam: float) -> float:
    """(3 + 4 lam - lam^4) / 6, the minimum of R(F, v)/v."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return (3.0 + 4.0 * lam - lam**4) / 6.0


def R_closed_form(lam: float, t: float) -> float:
    """R/v on the hatF family with (A + x0)/v = t: (1 + t^2)/2 + (2 lam/3)(1 - t^{3/2})."""
    return 0.5 * (1.0 + t * t) + (2.0 * lam / 3.0) * (1.0 - t**1.5)


def random_cdf(rng: np.random.Generator, hi: float = 1.0, max_knots: int = 12) -> PiecewiseCDF:
    """Random monotone table on [0, hi] with a random atom at zero and occasional flat stretches."""
    k = int(rng.integers(1, max_knots + 1))
    inner = np.sort(rng.uniform(0.0, hi, k))
    grid = np.unique(np.concatenate(([0.0], inner, [hi])))
    atom = float(rng.random() ** 2) if rng.random() < 0.5 else 0.0
    steps = rng.exponential(size=grid.size - 1) * (rng.random(grid.size - 1) < 0.8)
    if steps.sum() == 0:
        steps[-1] = 1.0
    vals = atom + (1.0 - atom) * np.concatenate(([0.0], np.cumsum(steps) / steps.sum()))
    vals[-1] = 1.0
    return PiecewiseCDF(atom, grid, vals)
