"""Exact and baseline TSP solvers used to score blob tours.

Held-Karp is the exact reference (n <= 24), brute force validates it on
tiny instances and 2-opt with random restarts is the baseline when the DP
table would be too large.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from numba import njit

from .geometry import Tour

HK_MAX = 24
BRUTE_MAX = 9


class DistanceMatrix:
    """Symmetric, zero-diagonal distance matrix."""

    def __init__(self, d, check: bool = True):
        d = np.array(d, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        self.d = d
        self.n = d.shape[0]
        if check:
            self._validate()

    @classmethod
    def from_points(cls, xy) -> "DistanceMatrix":
        p = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        diff = p[:, None, :] - p[None, :, :]
        return cls(np.sqrt((diff**2).sum(-1)))

    def _validate(self):
        d = self.d
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix not symmetric")
        if np.any(np.diag(d) != 0) or np.any(d < 0):
            raise ValueError("distance matrix needs a zero diagonal and non-negative entries")
        # d[i,k] <= d[i,j] + d[j,k] for all triples
        if self.n and np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + 1e-9 * (1 + d.max())):
            raise ValueError("triangle inequality violated")

    def __len__(self):
        return self.n

    def tour_length(self, order) -> float:
        order = list(order)
        return float(sum(self.d[order[i], order[(i + 1) % len(order)]]
                         for i in range(len(order))))


def _as_matrix(d) -> DistanceMatrix:
    return d if isinstance(d, DistanceMatrix) else DistanceMatrix(d)


def canonical(order) -> list[int]:
    """Rotate to start at city 0 and orient so the second city is the smaller neighbour."""
    order = [int(i) for i in order]
    k = order.index(0)
    order = order[k:] + order[:k]
    if len(order) > 2 and order[-1] < order[1]:
        order = [order[0]] + order[:0:-1]
    return order


def _tour(order, dm: DistanceMatrix) -> Tour:
    order = canonical(order)
    return Tour(order, dm.tour_length(order))


@njit(cache=True)
def _held_karp(d):
    # city 0 is the fixed start; subsets range over cities 1..n-1 (bit i-1)
    n = d.shape[0]
    m = n - 1
    full = 1 << m
    cost = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int8)
    for j in range(m):
        cost[1 << j, j] = d[0, j + 1]
    for s in range(1, full):
        for j in range(m):
            if not (s >> j) & 1:
                continue
            c = cost[s, j]
            if c == np.inf:
                continue
            for k in range(m):
                if (s >> k) & 1:
                    continue
                t = s | (1 << k)
                v = c + d[j + 1, k + 1]
                if v < cost[t, k]:
                    cost[t, k] = v
                    parent[t, k] = j
    best = np.inf
    last = -1
    s = full - 1
    for j in range(m):
        v = cost[s, j] + d[j + 1, 0]
        if v < best:
            best = v
            last = j
    order = np.empty(n, dtype=np.int64)
    order[0] = 0
    pos = n - 1
    while last >= 0:
        order[pos] = last + 1
        prev = parent[s, last]
        s ^= 1 << last
        last = prev
        pos -= 1
    return best, order


def held_karp(d) -> Tour:
    """Exact minimum closed tour by dynamic programming over subsets."""
    dm = _as_matrix(d)
    if not 3 <= dm.n <= HK_MAX:
        raise ValueError(f"held_karp needs 3 <= n <= {HK_MAX} (got {dm.n}); use two_opt")
    _, order = _held_karp(dm.d)
    return _tour(order, dm)


def brute_force(d) -> Tour:
    """Exhaustive search over (n-1)!/2 tours; validation only."""
    dm = _as_matrix(d)
    if dm.n > BRUTE_MAX:
        raise ValueError(f"brute_force limited to n <= {BRUTE_MAX}")
    if dm.n < 3:
        return _tour(range(dm.n), dm)
    best, best_order = math.inf, None
    for perm in itertools.permutations(range(1, dm.n)):
        if perm[0] > perm[-1]:
            continue
        order = (0,) + perm
        length = dm.tour_length(canonical(order))
        if length < best:
            best, best_order = length, order
    return _tour(best_order, dm)


def nearest_neighbour(d, start: int = 0) -> Tour:
    dm = _as_matrix(d)
    left = set(range(dm.n)) - {start}
    order = [start]
    while left:
        cur = order[-1]
        nxt = min(left, key=lambda j: (dm.d[cur, j], j))
        order.append(nxt)
        left.remove(nxt)
    return _tour(order, dm)


@njit(cache=True)
def _two_opt(d, order):
    # first-improvement 2-opt until no reversal shortens the tour
    n = order.shape[0]
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            a = order[i]
            b = order[i + 1]
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                c = order[j]
                e = order[(j + 1) % n]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -1e-10:
                    lo, hi = i + 1, j
                    while lo < hi:
                        t = order[lo]
                        order[lo] = order[hi]
                        order[hi] = t
                        lo += 1
                        hi -= 1
                    improved = True
                    b = order[i + 1]
    return order


def two_opt(d, seed: int = 0, restarts: int = 10) -> Tour:
    """Best of ``restarts`` random tours, each 2-opted to a local optimum."""
    dm = _as_matrix(d)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if dm.n < 4:
        raise ValueError("two_opt needs n >= 4")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        order = _two_opt(dm.d, rng.permutation(dm.n).astype(np.int64))
        t = _tour(order, dm)
        if best is None or t.length < best.length:
            best = t
    return best
