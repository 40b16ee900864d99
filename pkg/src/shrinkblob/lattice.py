"""Diffusive chemoattractant lattice and particle occupancy grid.

Arrays are stored row-major as ``[y, x]`` so a field snapshot is directly an
image (y grows downward). The public functions take ``(x, y)`` coordinates.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DAMPING = 0.95
PROJECTION_UNCOVERED = 1.275
PROJECTION_COVERED = 0.01275
EMPTY = -1


class ChemoField:
    """Scalar concentration per cell with a back buffer for diffusion."""

    def __init__(self, width: int = 200, height: int = 200):
        self.width = int(width)
        self.height = int(height)
        self.values = np.zeros((self.height, self.width), dtype=np.float64)
        self._back = np.zeros_like(self.values)

    def diffuse(self) -> "ChemoField":
        _diffuse(self.values, self._back, DAMPING)
        self.values, self._back = self._back, self.values
        return self

    def deposit(self, x: int, y: int, amount: float) -> None:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"deposit at ({x}, {y}) outside {self.width}x{self.height} lattice")
        if amount < 0:
            raise ValueError("deposit amount must be non-negative")
        self.values[y, x] += amount

    def __getitem__(self, xy):
        x, y = xy
        return self.values[y, x]

    def total(self) -> float:
        return float(self.values.sum())


class OccupancyGrid:
    """At most one particle id per cell; ``EMPTY`` marks a free cell."""

    def __init__(self, width: int = 200, height: int = 200):
        self.width = int(width)
        self.height = int(height)
        self.cells = np.full((self.height, self.width), EMPTY, dtype=np.int32)

    def occupied(self) -> np.ndarray:
        return self.cells != EMPTY

    def count_window(self, cx: int, cy: int, half_width: int) -> int:
        return int(count_window(self.cells, cx, cy, half_width))


class CityStimulus:
    """A city projected into the lattice, with its traffic-light state."""

    __slots__ = ("index", "x", "y", "uncovered")

    def __init__(self, index: int, x: int, y: int, uncovered: bool = False):
        self.index = index
        self.x = int(x)
        self.y = int(y)
        self.uncovered = uncovered

    def __repr__(self):
        return f"CityStimulus({self.index}, {self.x}, {self.y}, uncovered={self.uncovered})"


@njit(cache=True)
def _diffuse(src, dst, damping):
    # separable 3x3 box sum, zero padding, fixed divisor of 9
    h, w = src.shape
    tmp = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            s = src[y, x]
            if x > 0:
                s += src[y, x - 1]
            if x < w - 1:
                s += src[y, x + 1]
            tmp[y, x] = s
    scale = damping / 9.0
    for y in range(h):
        if 0 < y < h - 1:
            for x in range(w):
                dst[y, x] = (tmp[y - 1, x] + tmp[y, x] + tmp[y + 1, x]) * scale
        else:
            for x in range(w):
                s = tmp[y, x]
                if y > 0:
                    s += tmp[y - 1, x]
                if y < h - 1:
                    s += tmp[y + 1, x]
                dst[y, x] = s * scale


def diffuse(field: ChemoField) -> ChemoField:
    """Damped 3x3 mean filter; cells beyond the edge contribute zero."""
    return field.diffuse()


def deposit(field: ChemoField, x: int, y: int, amount: float) -> None:
    field.deposit(x, y, amount)


@njit(cache=True)
def count_window(occ, cx, cy, half_width):
    h, w = occ.shape
    n = 0
    for y in range(max(cy - half_width, 0), min(cy + half_width, h - 1) + 1):
        for x in range(max(cx - half_width, 0), min(cx + half_width, w - 1) + 1):
            if occ[y, x] != -1:
                n += 1
    return n


def count_particles_window(occ: OccupancyGrid, cx: int, cy: int, half_width: int) -> int:
    return occ.count_window(cx, cy, half_width)


@njit(cache=True)
def _project(values, occ, cx, cy, hi, lo):
    for k in range(cx.shape[0]):
        x = cx[k]
        y = cy[k]
        amount = lo if count_window(occ, x, y, 1) > 0 else hi
        for yy in range(y - 1, y + 2):
            for xx in range(x - 1, x + 2):
                values[yy, xx] += amount


def project_cities(field: ChemoField, cities, occ: OccupancyGrid) -> None:
    """Add each city's stimulus to its 3x3 window, suppressed where covered."""
    if len(cities) == 0:
        return
    cx = np.array([c.x for c in cities], dtype=np.int64)
    cy = np.array([c.y for c in cities], dtype=np.int64)
    _project(field.values, occ.cells, cx, cy, PROJECTION_UNCOVERED, PROJECTION_COVERED)


def to_gray8(values: np.ndarray) -> np.ndarray:
    """Min-max normalize a frame to uint8; a constant frame maps to zeros."""
    lo = float(values.min())
    hi = float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (values - lo) * (255.0 / (hi - lo))
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a uint8 image as binary PGM (P5)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(image.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write frame {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def frame_name(step: int) -> str:
    return f"frame_{step:06d}.pgm"
