"""Reading a tour off the halted blob.

The occupancy bitmap is reduced to its largest 8-connected component, its
outer boundary is followed clockwise (image coordinates, y down, interior on
the walker's right) and cities are listed in the order the walk first comes
within ``detect_radius`` of them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import CityDataset, Tour, tour_length

log = logging.getLogger(__name__)

DETECT_RADIUS = 3

# clockwise on screen, starting west: W, NW, N, NE, E, SE, S, SW as (dx, dy)
_RING = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]
_RING_INDEX = {d: i for i, d in enumerate(_RING)}


class EmptyBlobError(ValueError):
    pass


class CityOffPerimeterError(RuntimeError):
    def __init__(self, labels):
        self.labels = list(labels)
        super().__init__(f"city off perimeter: {', '.join(self.labels)}")


@dataclass(frozen=True)
class BlobMask:
    mask: np.ndarray  # bool [y, x]
    dropped_fragments: int = 0
    dropped_cells: int = 0

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


_EIGHT = np.ones((3, 3), dtype=bool)


def largest_component(occupied: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Largest 8-connected component of a bool image plus (#others, #cells in others)."""
    lab, k = ndimage.label(occupied, structure=_EIGHT)
    if k == 0:
        raise EmptyBlobError("empty blob")
    sizes = np.bincount(lab.ravel())
    sizes[0] = 0
    big = int(np.argmax(sizes))
    return lab == big, k - 1, int(sizes.sum() - sizes[big])


def component_share(occupied: np.ndarray) -> float:
    """Fraction of occupied cells that lie in the largest 8-connected component."""
    total = int(np.count_nonzero(occupied))
    if total == 0:
        return 0.0
    comp, _, dropped = largest_component(occupied)
    return (total - dropped) / total


def extract_mask(state_or_occupied) -> BlobMask:
    """Occupancy at halt restricted to its largest 8-connected component."""
    if hasattr(state_or_occupied, "occ"):
        occupied = state_or_occupied.occ.occupied()
    else:
        occupied = np.asarray(state_or_occupied, dtype=bool)
    comp, k, cells = largest_component(occupied)
    if k:
        log.warning("dropped %d fragment(s) holding %d cell(s)", k, cells)
    comp.setflags(write=False)
    return BlobMask(comp, k, cells)


def trace_boundary(mask) -> list[tuple[int, int]]:
    """Moore-neighbour boundary following with Jacob's stopping criterion.

    Starts at the topmost-then-leftmost cell and returns the closed loop as a
    list of (x, y) cells without repeating the start at the end. One-cell
    wide parts are walked on both sides, so cells can repeat.
    """
    m = mask.mask if isinstance(mask, BlobMask) else np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    if len(ys) == 0:
        raise EmptyBlobError("empty blob")
    h, w = m.shape
    start = (int(xs[0]), int(ys[0]))  # np.nonzero is row-major

    def fg(x, y):
        return 0 <= x < w and 0 <= y < h and m[y, x]

    def advance(c, back):
        # scan the 8 neighbours of c clockwise starting at the backtrack cell
        i0 = _RING_INDEX[(back[0] - c[0], back[1] - c[1])]
        prev = back
        for k in range(8):
            dx, dy = _RING[(i0 + k) % 8]
            q = (c[0] + dx, c[1] + dy)
            if fg(*q):
                return q, prev
            prev = q
        return None, None

    # the start is entered from the west (the cell to its left is empty)
    first = advance(start, (start[0] - 1, start[1]))
    if first[0] is None:
        return [start]
    path = [start]
    c, b = first
    while True:
        path.append(c)
        c, b = advance(c, b)
        if path[-1] == start and (c, b) == first:
            break
    path.pop()
    return path


def read_tour(path, dataset: CityDataset, detect_radius: int = DETECT_RADIUS) -> Tour:
    """Cities in order of first approach (Chebyshev distance) along the boundary walk."""
    xy = dataset.xy
    seen = np.zeros(len(xy), dtype=bool)
    order: list[int] = []
    cells = np.asarray(path, dtype=np.int64).reshape(-1, 2)
    # (cells x cities) Chebyshev distances; paths are a few thousand cells long
    near = np.abs(cells[:, None, :] - xy[None, :, :]).max(-1) <= detect_radius
    for row in near:
        if not row.any():
            continue
        for k in np.flatnonzero(row):
            if not seen[k]:
                seen[k] = True
                order.append(int(k))
    if not seen.all():
        raise CityOffPerimeterError([dataset.labels[k] for k in np.flatnonzero(~seen)])
    return Tour(order, tour_length(order, dataset), [dataset.labels[k] for k in order])


def boundary_cells(mask: np.ndarray) -> set[tuple[int, int]]:
    """Outer boundary by flood fill: component cells 4-adjacent to outside background.

    Background is flood-filled (4-connected) from a one-cell frame around the
    image, so holes are not counted. Independent of the walker above.
    """
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    outside = ndimage.label(~m)[0]  # default structure is 4-connected
    outside = outside == outside[0, 0]
    touch = np.zeros_like(m)
    touch[1:, :] |= outside[:-1, :]
    touch[:-1, :] |= outside[1:, :]
    touch[:, 1:] |= outside[:, :-1]
    touch[:, :-1] |= outside[:, 1:]
    ys, xs = np.nonzero(m & touch)
    return {(int(x) - 1, int(y) - 1) for x, y in zip(xs, ys)}
