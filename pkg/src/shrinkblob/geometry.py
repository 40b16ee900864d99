"""City datasets, convex hulls and tour lengths."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

ARENA_CENTER = (100, 100)
ARENA_RADIUS = 90
MIN_SEPARATION = 25
SAMPLING_BUDGET = 10**6


class DegenerateHullError(ValueError):
    pass


class InfeasiblePackingError(RuntimeError):
    pass


class NotAPermutationError(ValueError):
    pass


def city_label(i: int) -> str:
    """A, B, ..., Z, then AA, AB, ... (spreadsheet style)."""
    letters = string.ascii_uppercase
    label = ""
    i += 1
    while i > 0:
        i, r = divmod(i - 1, 26)
        label = letters[r] + label
    return label


@dataclass
class CityDataset:
    labels: list[str]
    xy: np.ndarray  # (n, 2) int64, columns x, y
    arena_center: tuple[float, float] = ARENA_CENTER
    arena_radius: float = ARENA_RADIUS
    min_separation: float = MIN_SEPARATION
    name: str = ""

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.int64).reshape(-1, 2)
        if len(self.labels) != len(self.xy):
            raise ValueError("labels and coordinates differ in length")

    def __len__(self):
        return len(self.xy)

    def distance_matrix(self) -> np.ndarray:
        p = self.xy.astype(np.float64)
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def min_pairwise_distance(self) -> float:
        d = self.distance_matrix()
        iu = np.triu_indices(len(self), 1)
        return float(d[iu].min()) if len(iu[0]) else math.inf


@dataclass
class Tour:
    order: list[int]
    length: float
    labels: list[str] = field(default_factory=list)

    def label_line(self) -> str:
        return " ".join(self.labels)


def generate_dataset(n: int = 20, arena_center=ARENA_CENTER, arena_radius: float = ARENA_RADIUS,
                     min_sep: float = MIN_SEPARATION, seed: int = 0,
                     budget: int = SAMPLING_BUDGET) -> CityDataset:
    """Rejection-sample ``n`` integer cities uniformly in a disc, pairwise >= min_sep apart."""
    if n < 3:
        raise ValueError("need at least 3 cities")
    rng = np.random.default_rng(seed)
    cx, cy = arena_center
    pts: list[tuple[int, int]] = []
    attempts = 0
    while len(pts) < n:
        if attempts >= budget:
            raise InfeasiblePackingError(
                f"infeasible packing: placed {len(pts)}/{n} cities after {budget} attempts")
        attempts += 1
        r = arena_radius * math.sqrt(rng.random())
        t = 2.0 * math.pi * rng.random()
        x = int(round(cx + r * math.cos(t)))
        y = int(round(cy + r * math.sin(t)))
        if (x - cx) ** 2 + (y - cy) ** 2 > arena_radius**2:
            continue
        if any((x - a) ** 2 + (y - b) ** 2 < min_sep**2 for a, b in pts):
            continue
        pts.append((x, y))
    return CityDataset([city_label(i) for i in range(n)], np.array(pts), (cx, cy),
                       arena_radius, min_sep)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone chain hull, counter-clockwise in standard (y-up) orientation.

    Collinear points on edges are dropped. Raises DegenerateHullError when
    the points do not span a 2D region.
    """
    pts = sorted({(int(p[0]), int(p[1])) for p in np.asarray(points).reshape(-1, 2)})
    if len(pts) < 3:
        raise DegenerateHullError("degenerate hull")
    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHullError("degenerate hull")
    return np.array(hull, dtype=np.int64)


def _hull_edges(hull):
    hull = np.asarray(hull, dtype=np.int64)
    if len(hull) < 3:
        raise DegenerateHullError("degenerate hull")
    return hull, np.roll(hull, -1, axis=0)


def points_in_hull(points, hull) -> np.ndarray:
    """Vectorised inclusive containment test for a CCW hull (exact on integers)."""
    a, b = _hull_edges(hull)
    p = np.asarray(points).reshape(-1, 2)
    exact = np.issubdtype(p.dtype, np.integer)
    if not exact:
        p = p.astype(np.float64)
    inside = np.ones(len(p), dtype=bool)
    for (ax, ay), (bx, by) in zip(a, b):
        cross = (bx - ax) * (p[:, 1] - ay) - (by - ay) * (p[:, 0] - ax)
        inside &= cross >= (0 if exact else -1e-9)
    return inside


def point_in_hull(p, hull) -> bool:
    return bool(points_in_hull(np.asarray([p]), hull)[0])


def hull_cells(hull, width: int, height: int) -> np.ndarray:
    """Boolean ``[y, x]`` mask of lattice cells inside or on the hull."""
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.int64)
    return points_in_hull(pts, hull).reshape(height, width)


def check_permutation(order, n: int) -> list[int]:
    order = [int(i) for i in order]
    if sorted(order) != list(range(n)):
        raise NotAPermutationError(f"not a permutation of {n} cities: {order}")
    return order


def tour_length(order, dataset) -> float:
    """Closed-loop Euclidean length. ``dataset`` may be a CityDataset or an (n, 2) array."""
    xy = dataset.xy if isinstance(dataset, CityDataset) else np.asarray(dataset)
    order = check_permutation(order, len(xy))
    p = xy[order].astype(np.float64)
    seg = p - np.roll(p, -1, axis=0)
    return float(np.sqrt((seg**2).sum(1)).sum())


def make_tour(order, dataset: CityDataset) -> Tour:
    order = check_permutation(order, len(dataset))
    return Tour(order, tour_length(order, dataset), [dataset.labels[i] for i in order])


def segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper crossing of segments p1p2 and p3p4 (shared endpoints don't count)."""
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4)


def tour_self_intersects(order, xy) -> bool:
    n = len(order)
    pts = [tuple(xy[i]) for i in order]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return True
    return False
