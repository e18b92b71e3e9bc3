"""Seeded, chunked Monte Carlo plumbing.

Samples are split across ``workers`` independent substreams spawned from one
``SeedSequence``; results depend only on ``(seed, workers)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

CHUNK = 1 << 16


@dataclass
class Estimate:
    mean: float
    stderr: float
    samples: int

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.mean - target) <= sigmas * self.stderr + 1e-15


class Moments:
    """Running sums for means and standard errors of several statistics."""

    def __init__(self, width: int = 1):
        self.n = 0
        self.s1 = np.zeros(width)
        self.s2 = np.zeros(width)

    def add(self, block: np.ndarray):
        block = np.asarray(block, dtype=float).reshape(block.shape[0], -1)
        self.n += block.shape[0]
        self.s1 += block.sum(axis=0)
        self.s2 += (block**2).sum(axis=0)

    def merge(self, other: "Moments") -> "Moments":
        self.n += other.n
        self.s1 += other.s1
        self.s2 += other.s2
        return self

    def estimates(self) -> list[Estimate]:
        if self.n == 0:
            raise ValueError("no samples")
        mean = self.s1 / self.n
        var = np.maximum(self.s2 / self.n - mean**2, 0.0)
        se = np.sqrt(var / max(self.n - 1, 1))
        return [Estimate(float(m), float(s), self.n) for m, s in zip(mean, se)]


def split_samples(samples: int, workers: int) -> list[int]:
    base, extra = divmod(samples, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def run_chunked(
    seed: int,
    samples: int,
    width: int,
    chunk_fn: Callable[[np.random.Generator, int], np.ndarray],
    workers: int = 1,
) -> list[Estimate]:
    """Evaluate ``chunk_fn(rng, k) -> (k, width)`` over all samples and average."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(workers)
    shares = split_samples(samples, workers)

    def work(w: int) -> Moments:
        rng = np.random.default_rng(streams[w])
        acc = Moments(width)
        left = shares[w]
        while left > 0:
            k = min(CHUNK, left)
            acc.add(chunk_fn(rng, k))
            left -= k
        return acc

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    total = Moments(width)
    for p in parts:
        total.merge(p)
    return total.estimates()


def three_sigma(se: float) -> float:
    return 3.0 * se if math.isfinite(se) else math.inf
