"""Particle population, shrinkage scheduler and traffic-light halting.

Particles live in struct-of-arrays storage (``px``, ``py``, ``heading``,
``moved``) whose index is the id stored in the occupancy grid. All
stochastic draws come from a single ``numpy.random.Generator``, always as
``random()`` doubles, in this order per step:

1. Fisher-Yates shuffle of the population, one draw per swap
   (``j = floor(u * (i + 1))`` for ``i = n-1 .. 1``);
2. per particle, sensory tie-break (one draw, only when both flank sensors
   beat the front one; ``u < 0.5`` turns by +RA) and then one draw for a new
   heading (``u * 360``) only when the forward move is blocked;
3. division sweep (every ``division_period`` steps): shuffle of the
   snapshot, then per spawning particle one draw for the target cell among
   its empty neighbours (row-major order) and one for the child heading;
4. deletion sweep (every ``deletion_period`` steps): shuffle of the snapshot.

The compiled scheduler (:func:`advance`) and the per-operation functions
(:func:`sense`, :func:`attempt_move`, ...) implement the same rules;
:func:`reference_step` strings the latter together and must reproduce the
compiled trajectory draw for draw.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, NamedTuple

import numpy as np
from numba import njit

from . import lattice
from .geometry import hull_cells
from .lattice import ChemoField, CityStimulus, OccupancyGrid

KEEP, RIGHT, LEFT, EITHER = 0, 1, -1, 2


class NoConvergenceError(RuntimeError):
    """Raised when the blob fails to halt; ``state`` is kept for diagnosis."""

    def __init__(self, msg, state):
        super().__init__(msg)
        self.state = state


@dataclass
class SwarmConfig:
    sensor_angle: float = 60.0
    rotation_angle: float = 60.0
    sensor_offset: float = 7.0
    deposit_amount: float = 5.0
    step_length: float = 1.0
    division_period: int = 5
    deletion_period: int = 10
    division_window_min: int = 1
    division_window_max: int = 10
    survival_max: int = 80
    shrink_window_half_width: int = 4
    halting_window_half_width: int = 2
    halting_threshold: int = 15
    init_density: float = 0.6
    confine_to_hull: bool = False
    continuous_positions: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.sensor_angle <= 180 and 0 < self.rotation_angle <= 180):
            raise ValueError("sensor and rotation angles must lie in (0, 180]")
        if self.sensor_offset < 3:
            raise ValueError("sensor_offset must be >= 3 cells")
        if not (0 <= self.init_density <= 1):
            raise ValueError("init_density must lie in [0, 1]")
        if self.division_period < 1 or self.deletion_period < 1:
            raise ValueError("division/deletion periods must be >= 1")

    def replace(self, **changes) -> "SwarmConfig":
        d = asdict(self)
        d.update(changes)
        return SwarmConfig(**d)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def _fparams(self):
        return np.array([self.sensor_angle, self.rotation_angle, self.sensor_offset,
                         self.deposit_amount, self.step_length,
                         lattice.PROJECTION_UNCOVERED, lattice.PROJECTION_COVERED,
                         lattice.DAMPING], dtype=np.float64)

    def _iparams(self):
        return np.array([self.division_period, self.deletion_period,
                         self.division_window_min, self.division_window_max,
                         self.survival_max, self.shrink_window_half_width,
                         self.halting_window_half_width, self.halting_threshold,
                         int(self.continuous_positions)],
                        dtype=np.int64)


class Particle(NamedTuple):
    x: int
    y: int
    heading: float
    moved_since_division_test: bool


# ---------------------------------------------------------------- kernels
# Array-taking helpers are inlined by hand in the hot loops: every call of a
# jitted function with array arguments pays for atomic refcounting.

@njit(cache=True)
def _rint(v):
    return int(math.floor(v + 0.5))


@njit(cache=True)
def _normalize(h):
    h = h % 360.0
    if h >= 360.0:
        h -= 360.0
    return h


@njit(cache=True)
def _turn_code(f, fl, fr):
    if f > fl and f > fr:
        return KEEP
    if f < fl and f < fr:
        return EITHER
    if fl < fr:
        return RIGHT
    if fr < fl:
        return LEFT
    return KEEP


@njit(cache=True)
def _shuffled(n, rng):
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    return perm


@njit(cache=True)
def _window_counts(occ, hw):
    # box sum of occupancy over (2hw+1)^2 windows, clipped at the edges
    h, w = occ.shape
    sat = np.zeros((h + 1, w + 1), dtype=np.int32)
    for y in range(h):
        row = 0
        for x in range(w):
            if occ[y, x] != -1:
                row += 1
            sat[y + 1, x + 1] = sat[y, x + 1] + row
    out = np.empty((h, w), dtype=np.int32)
    for y in range(h):
        y0 = max(y - hw, 0)
        y1 = min(y + hw, h - 1) + 1
        for x in range(w):
            x0 = max(x - hw, 0)
            x1 = min(x + hw, w - 1) + 1
            out[y, x] = sat[y1, x1] - sat[y0, x1] - sat[y1, x0] + sat[y0, x0]
    return out


@njit(cache=True)
def _bump(counts, x, y, hw, delta):
    h, w = counts.shape
    for yy in range(max(y - hw, 0), min(y + hw, h - 1) + 1):
        for xx in range(max(x - hw, 0), min(x + hw, w - 1) + 1):
            counts[yy, xx] += delta


@njit(cache=True)
def _compact(n, px, py, fx, fy, hd, moved, occ, dead):
    j = 0
    for i in range(n):
        if dead[i]:
            continue
        if j != i:
            px[j] = px[i]
            py[j] = py[i]
            fx[j] = fx[i]
            fy[j] = fy[i]
            hd[j] = hd[i]
            moved[j] = moved[i]
        occ[py[j], px[j]] = j
        j += 1
    return j


@njit(cache=True)
def _division_sweep(n, px, py, fx, fy, hd, moved, occ, bounds, hw, cmin, cmax, rng):
    h, w = occ.shape
    counts = _window_counts(occ, hw)
    order = _shuffled(n, rng)
    cand = np.empty(8, dtype=np.int64)
    for k in order:
        c = counts[py[k], px[k]]
        if cmin <= c <= cmax and moved[k]:
            m = 0
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    x = px[k] + dx
                    y = py[k] + dy
                    if (dx != 0 or dy != 0) and 0 <= x < w and 0 <= y < h \
                            and occ[y, x] == -1 and bounds[y, x]:
                        cand[m] = y * w + x
                        m += 1
            if m > 0:
                cell = cand[int(rng.random() * m)]
                x = cell % w
                y = cell // w
                px[n] = x
                py[n] = y
                fx[n] = x
                fy[n] = y
                hd[n] = rng.random() * 360.0
                moved[n] = 0
                occ[y, x] = n
                _bump(counts, x, y, hw, 1)
                n += 1
        moved[k] = 0
    return n


@njit(cache=True)
def _deletion_sweep(n, px, py, fx, fy, hd, moved, occ, hw, cmax, rng):
    counts = _window_counts(occ, hw)
    order = _shuffled(n, rng)
    dead = np.zeros(n, dtype=np.uint8)
    removed = 0
    for k in order:
        if counts[py[k], px[k]] > cmax:
            dead[k] = 1
            occ[py[k], px[k]] = -1
            _bump(counts, px[k], py[k], hw, -1)
            removed += 1
    if removed == 0:
        return n
    return _compact(n, px, py, fx, fy, hd, moved, occ, dead)


@njit(cache=True)
def _check_halting(occ, cx, cy, status, uncover_step, step, hw, threshold):
    all_uncovered = True
    for k in range(cx.shape[0]):
        green = lattice.count_window(occ, cx[k], cy[k], hw) < threshold
        if green:
            if status[k] == 0:
                uncover_step[k] = step
            status[k] = 1
        else:
            status[k] = 0
            uncover_step[k] = -1
            all_uncovered = False
    return all_uncovered


@njit(cache=True)
def _sense_move(order, px, py, fx, fy, hd, moved, occ, a, bounds, sa, ra, so, amount, step_len,
                continuous, rng):
    """Sensory then motor stage for every particle in ``order``; returns the dead mask."""
    h, w = occ.shape
    sab = math.radians(sa)
    csa = math.cos(sab)
    ssa = math.sin(sab)
    same = ra == sa
    n = order.shape[0]
    dead = np.zeros(n, dtype=np.uint8)
    lost = 0
    for k in order:
        x = fx[k]
        y = fy[k]
        cx = px[k]
        cy = py[k]
        # sensory stage: F, then FL / FR as the heading rotated by -sa / +sa
        rad = math.radians(hd[k])
        ux = math.cos(rad)
        uy = math.sin(rad)
        lx = ux * csa + uy * ssa
        ly = uy * csa - ux * ssa
        rx = ux * csa - uy * ssa
        ry = uy * csa + ux * ssa
        f = 0.0
        sx = _rint(x + so * ux)
        sy = _rint(y + so * uy)
        if 0 <= sx < w and 0 <= sy < h:
            f = a[sy, sx]
        fl = 0.0
        sx = _rint(x + so * lx)
        sy = _rint(y + so * ly)
        if 0 <= sx < w and 0 <= sy < h:
            fl = a[sy, sx]
        fr = 0.0
        sx = _rint(x + so * rx)
        sy = _rint(y + so * ry)
        if 0 <= sx < w and 0 <= sy < h:
            fr = a[sy, sx]
        code = _turn_code(f, fl, fr)
        if code == EITHER:
            code = RIGHT if rng.random() < 0.5 else LEFT
        heading = _normalize(hd[k] + code * ra)
        hd[k] = heading
        # motor stage; with ra == sa the new direction is a flank sensor direction
        if code == KEEP:
            mx, my = ux, uy
        elif same:
            mx, my = (rx, ry) if code == RIGHT else (lx, ly)
        else:
            rad = math.radians(heading)
            mx = math.cos(rad)
            my = math.sin(rad)
        nx = x + step_len * mx
        ny = y + step_len * my
        tx = _rint(nx)
        ty = _rint(ny)
        if tx == cx and ty == cy:
            # forward move that stays inside the particle's own cell
            if continuous:
                fx[k] = nx
                fy[k] = ny
            a[ty, tx] += amount
            moved[k] = 1
        elif tx < 0 or ty < 0 or tx >= w or ty >= h or occ[ty, tx] != -1:
            hd[k] = rng.random() * 360.0
        elif not bounds[ty, tx]:
            occ[cy, cx] = -1
            dead[k] = 1
            lost += 1
        else:
            occ[cy, cx] = -1
            occ[ty, tx] = k
            px[k] = tx
            py[k] = ty
            if continuous:
                fx[k] = nx
                fy[k] = ny
            else:
                fx[k] = tx
                fy[k] = ty
            a[ty, tx] += amount
            moved[k] = 1
    return dead, lost


@njit(cache=True)
def _run(n, px, py, fx, fy, hd, moved, occ, front, back, bounds, cx, cy, status, uncover_step,
         step, n_steps, fp, ip, rng):
    """Advance up to ``n_steps`` scheduler steps, stopping early on halt.

    Returns (population, step, halted, buffers_swapped).
    """
    sa, ra, so, amount, step_len, proj_hi, proj_lo, damping = (
        fp[0], fp[1], fp[2], fp[3], fp[4], fp[5], fp[6], fp[7])
    div_p, del_p, cmin, cmax, surv, hw, halt_hw, halt_thr = (
        ip[0], ip[1], ip[2], ip[3], ip[4], ip[5], ip[6], ip[7])
    continuous = ip[8] != 0
    a = front
    b = back
    swapped = False
    halted = False
    for _ in range(n_steps):
        t = step + 1
        lattice._project(a, occ, cx, cy, proj_hi, proj_lo)
        order = _shuffled(n, rng)
        dead, lost = _sense_move(order, px, py, fx, fy, hd, moved, occ, a, bounds, sa, ra, so,
                                 amount, step_len, continuous, rng)
        if lost:
            n = _compact(n, px, py, fx, fy, hd, moved, occ, dead)
        lattice._diffuse(a, b, damping)
        a, b = b, a
        swapped = not swapped
        if t % div_p == 0:
            n = _division_sweep(n, px, py, fx, fy, hd, moved, occ, bounds, hw, cmin, cmax, rng)
        if t % del_p == 0:
            n = _deletion_sweep(n, px, py, fx, fy, hd, moved, occ, hw, surv, rng)
        step = t
        if _check_halting(occ, cx, cy, status, uncover_step, t, halt_hw, halt_thr):
            halted = True
            break
    return n, step, halted, swapped


# ------------------------------------------------------------ python API

class SimState:
    """Mutable simulation state: particle arrays, lattice, cities, halting."""

    def __init__(self, width: int, height: int, cities, rng: np.random.Generator):
        self.width = width
        self.height = height
        self.field = ChemoField(width, height)
        self.occ = OccupancyGrid(width, height)
        cap = width * height
        self.px = np.zeros(cap, dtype=np.int64)
        self.py = np.zeros(cap, dtype=np.int64)
        # real-valued positions; (px, py) is always the rounded cell
        self.fx = np.zeros(cap, dtype=np.float64)
        self.fy = np.zeros(cap, dtype=np.float64)
        self.heading = np.zeros(cap, dtype=np.float64)
        self.moved = np.zeros(cap, dtype=np.uint8)
        # cells a particle may occupy; stepping outside deletes the particle
        self.bounds = np.ones((height, width), dtype=np.uint8)
        self.n = 0
        self.step = 0
        self.halted = False
        self.rng = rng
        self.cities = [c if isinstance(c, CityStimulus) else CityStimulus(i, c[0], c[1])
                       for i, c in enumerate(cities)]
        for c in self.cities:
            if not (1 <= c.x < width - 1 and 1 <= c.y < height - 1):
                raise ValueError(f"city {c.index} at ({c.x}, {c.y}) too close to the lattice edge")
        self.cx = np.array([c.x for c in self.cities], dtype=np.int64)
        self.cy = np.array([c.y for c in self.cities], dtype=np.int64)
        self.status = np.zeros(len(self.cities), dtype=np.uint8)
        self.uncover_step = np.full(len(self.cities), -1, dtype=np.int64)
        self.initial_population = 0

    @property
    def population(self) -> int:
        return self.n

    def add_particle(self, x: int, y: int, heading: float = 0.0) -> int:
        if self.occ.cells[y, x] != lattice.EMPTY:
            raise ValueError(f"cell ({x}, {y}) already occupied")
        i = self.n
        self.px[i], self.py[i], self.heading[i], self.moved[i] = x, y, heading % 360.0, 0
        self.fx[i], self.fy[i] = x, y
        self.occ.cells[y, x] = i
        self.n += 1
        return i

    def particle(self, i: int) -> Particle:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return Particle(int(self.px[i]), int(self.py[i]), float(self.heading[i]),
                        bool(self.moved[i]))

    def particles(self) -> list[Particle]:
        return [self.particle(i) for i in range(self.n)]

    def positions(self) -> np.ndarray:
        return np.stack([self.px[:self.n], self.py[:self.n]], axis=1)

    def real_positions(self) -> np.ndarray:
        return np.stack([self.fx[:self.n], self.fy[:self.n]], axis=1)

    def check_bijection(self) -> None:
        occ = self.occ.cells
        if np.count_nonzero(occ != lattice.EMPTY) != self.n:
            raise AssertionError("occupied cell count differs from population")
        ids = occ[self.py[:self.n], self.px[:self.n]]
        if not np.array_equal(ids, np.arange(self.n)):
            raise AssertionError("occupancy grid out of sync with particle store")

    def sync_traffic_lights(self) -> None:
        for c, s in zip(self.cities, self.status):
            c.uncovered = bool(s)

    @property
    def insertion_trace(self) -> list[tuple[int, int]]:
        """(step, city) for uncovered cities, ordered by when they last turned green."""
        idx = [k for k in range(len(self.cities)) if self.status[k]]
        idx.sort(key=lambda k: (self.uncover_step[k], k))
        return [(int(self.uncover_step[k]), k) for k in idx]

    def city_counts(self, half_width: int = 2) -> np.ndarray:
        return np.array([lattice.count_window(self.occ.cells, c.x, c.y, half_width)
                         for c in self.cities], dtype=np.int64)

    def snapshot(self) -> tuple:
        """Byte-level summary used for determinism checks."""
        n = self.n
        return (self.step, n, self.px[:n].tobytes(), self.py[:n].tobytes(),
                self.fx[:n].tobytes(), self.fy[:n].tobytes(),
                self.heading[:n].tobytes(), self.field.values.tobytes(),
                tuple(self.insertion_trace))


def init_blob(hull, cfg: SwarmConfig, width: int = 200, height: int = 200, cities=(),
              rng: np.random.Generator | None = None) -> SimState:
    """Seed particles on hull cells (boundary inclusive) with probability ``init_density``.

    One draw per hull cell (row-major) decides seeding, then one draw per
    seeded particle sets its heading.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    mask = hull_cells(hull, width, height)
    state = SimState(width, height, cities, rng)
    if cfg.confine_to_hull:
        state.bounds[:] = mask
    if cfg.init_density <= 0:
        raise ValueError("empty initialization")
    ys, xs = np.nonzero(mask)
    keep = rng.random(len(xs)) < cfg.init_density
    xs, ys = xs[keep], ys[keep]
    n = len(xs)
    if n == 0:
        raise ValueError("empty initialization")
    state.px[:n] = xs
    state.py[:n] = ys
    state.fx[:n] = xs
    state.fy[:n] = ys
    state.heading[:n] = rng.random(n) * 360.0
    state.occ.cells[ys, xs] = np.arange(n, dtype=np.int32)
    state.n = n
    state.initial_population = n
    check_halting(state, cfg)
    return state


def _read(values, x, y, dx, dy) -> float:
    sx = _rint(x + dx)
    sy = _rint(y + dy)
    h, w = values.shape
    if 0 <= sx < w and 0 <= sy < h:
        return float(values[sy, sx])
    return 0.0


def _directions(heading: float, cfg: SwarmConfig):
    """Unit vectors ahead, at -sensor_angle and at +sensor_angle."""
    rad = math.radians(heading)
    ux, uy = math.cos(rad), math.sin(rad)
    b = math.radians(cfg.sensor_angle)
    csa, ssa = math.cos(b), math.sin(b)
    return ((ux, uy), (ux * csa + uy * ssa, uy * csa - ux * ssa),
            (ux * csa - uy * ssa, uy * csa + ux * ssa))


def sensor_readings(state: SimState, i: int, cfg: SwarmConfig) -> tuple[float, float, float]:
    """Field values (F, FL, FR) at ``sensor_offset`` ahead and at -/+ ``sensor_angle``."""
    x, y = float(state.fx[i]), float(state.fy[i])
    so = cfg.sensor_offset
    v = state.field.values
    return tuple(_read(v, x, y, so * dx, so * dy)
                 for dx, dy in _directions(float(state.heading[i]), cfg))


def turn(f: float, fl: float, fr: float, heading: float, cfg: SwarmConfig, rng) -> float:
    """Sensory branch table on explicit readings; returns the new heading."""
    return _turn(f, fl, fr, heading, cfg, rng)[0]


def _turn(f, fl, fr, heading, cfg, rng):
    code = _turn_code(f, fl, fr)
    if code == EITHER:
        code = RIGHT if rng.random() < 0.5 else LEFT
    return _normalize(heading + code * cfg.rotation_angle), code


def _sense_dir(state: SimState, i: int, cfg: SwarmConfig):
    """Sensory stage; returns the new heading and its unit vector (as the kernel does)."""
    h0 = float(state.heading[i])
    dirs = _directions(h0, cfg)
    h, code = _turn(*sensor_readings(state, i, cfg), h0, cfg, state.rng)
    state.heading[i] = h
    if code == KEEP:
        return h, dirs[0]
    if cfg.rotation_angle == cfg.sensor_angle:
        return h, dirs[2] if code == RIGHT else dirs[1]
    rad = math.radians(h)
    return h, (math.cos(rad), math.sin(rad))


def sense(state: SimState, i: int, cfg: SwarmConfig) -> float:
    """Sensory stage for particle ``i``; stores and returns the new heading."""
    return _sense_dir(state, i, cfg)[0]


def _move_raw(state: SimState, i: int, cfg: SwarmConfig, direction=None) -> int:
    x, y = int(state.px[i]), int(state.py[i])
    if direction is None:
        rad = math.radians(state.heading[i])
        direction = (math.cos(rad), math.sin(rad))
    nx = float(state.fx[i]) + cfg.step_length * direction[0]
    ny = float(state.fy[i]) + cfg.step_length * direction[1]
    tx, ty = _rint(nx), _rint(ny)
    if not cfg.continuous_positions:
        nx, ny = tx, ty
    occ = state.occ.cells
    if (tx, ty) == (x, y):
        if cfg.continuous_positions:
            state.fx[i], state.fy[i] = nx, ny
        state.field.values[ty, tx] += cfg.deposit_amount
        state.moved[i] = 1
        return 1
    if not (0 <= tx < state.width and 0 <= ty < state.height) or occ[ty, tx] != lattice.EMPTY:
        state.heading[i] = state.rng.random() * 360.0
        return 0
    if not state.bounds[ty, tx]:
        occ[y, x] = lattice.EMPTY
        return -1
    occ[y, x] = lattice.EMPTY
    occ[ty, tx] = i
    state.px[i], state.py[i] = tx, ty
    state.fx[i], state.fy[i] = nx, ny
    state.field.values[ty, tx] += cfg.deposit_amount
    state.moved[i] = 1
    return 1


def _remove(state: SimState, dead: np.ndarray) -> None:
    state.n = _compact(state.n, state.px, state.py, state.fx, state.fy, state.heading, state.moved,
                       state.occ.cells, dead)


def attempt_move(state: SimState, i: int, cfg: SwarmConfig) -> bool:
    """Motor stage for particle ``i``.

    Blocked (occupied target or lattice edge): heading re-randomised, no
    deposit. A particle stepping out of ``state.bounds`` is deleted, ids above
    ``i`` shift down by one, and the call returns False.
    """
    r = _move_raw(state, i, cfg)
    if r < 0:
        dead = np.zeros(state.n, dtype=np.uint8)
        dead[i] = 1
        _remove(state, dead)
    return r > 0


def _shuffle(n: int, rng) -> np.ndarray:
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def division_test(state: SimState, i: int, cfg: SwarmConfig) -> Particle | None:
    """Spawn a child next to ``i`` if its 9x9 count is in range and it has moved."""
    x0, y0 = int(state.px[i]), int(state.py[i])
    c = lattice.count_window(state.occ.cells, x0, y0, cfg.shrink_window_half_width)
    child = None
    if cfg.division_window_min <= c <= cfg.division_window_max and state.moved[i]:
        cand = [(x0 + dx, y0 + dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                if (dx or dy) and 0 <= x0 + dx < state.width and 0 <= y0 + dy < state.height
                and state.occ.cells[y0 + dy, x0 + dx] == lattice.EMPTY
                and state.bounds[y0 + dy, x0 + dx]]
        if cand:
            x, y = cand[int(state.rng.random() * len(cand))]
            j = state.add_particle(x, y)
            state.heading[j] = state.rng.random() * 360.0
            child = state.particle(j)
    state.moved[i] = 0
    return child


def _saturated(state: SimState, i: int, cfg: SwarmConfig) -> bool:
    c = lattice.count_window(state.occ.cells, int(state.px[i]), int(state.py[i]),
                             cfg.shrink_window_half_width)
    return c > cfg.survival_max


def deletion_test(state: SimState, i: int, cfg: SwarmConfig) -> bool:
    """Delete ``i`` if its 9x9 count exceeds ``survival_max``. Returns survival."""
    if not _saturated(state, i, cfg):
        return True
    dead = np.zeros(state.n, dtype=np.uint8)
    dead[i] = 1
    state.occ.cells[state.py[i], state.px[i]] = lattice.EMPTY
    _remove(state, dead)
    return False


def division_sweep(state: SimState, cfg: SwarmConfig) -> None:
    state.n = _division_sweep(state.n, state.px, state.py, state.fx, state.fy,
                              state.heading, state.moved,
                              state.occ.cells, state.bounds, cfg.shrink_window_half_width,
                              cfg.division_window_min, cfg.division_window_max, state.rng)


def deletion_sweep(state: SimState, cfg: SwarmConfig) -> None:
    state.n = _deletion_sweep(state.n, state.px, state.py, state.fx, state.fy,
                              state.heading, state.moved,
                              state.occ.cells, cfg.shrink_window_half_width,
                              cfg.survival_max, state.rng)


def check_halting(state: SimState, cfg: SwarmConfig) -> bool:
    """Update every city's traffic light; True when all cities are uncovered."""
    done = _check_halting(state.occ.cells, state.cx, state.cy, state.status,
                          state.uncover_step, state.step, cfg.halting_window_half_width,
                          cfg.halting_threshold)
    state.sync_traffic_lights()
    return bool(done)


def reference_step(state: SimState, cfg: SwarmConfig) -> None:
    """One scheduler step built from the per-operation functions (slow)."""
    if state.halted:
        raise RuntimeError("simulation already halted")
    t = state.step + 1
    lattice.project_cities(state.field, state.cities, state.occ)
    order = _shuffle(state.n, state.rng)
    dead = np.zeros(state.n, dtype=np.uint8)
    for k in order:
        _, d = _sense_dir(state, k, cfg)
        if _move_raw(state, k, cfg, d) < 0:
            dead[k] = 1
    if dead.any():
        _remove(state, dead)
    state.field.diffuse()
    if t % cfg.division_period == 0:
        for k in _shuffle(state.n, state.rng):
            division_test(state, k, cfg)
    if t % cfg.deletion_period == 0:
        dead = np.zeros(state.n, dtype=np.uint8)
        for k in _shuffle(state.n, state.rng):
            if _saturated(state, k, cfg):
                dead[k] = 1
                state.occ.cells[state.py[k], state.px[k]] = lattice.EMPTY
        if dead.any():
            _remove(state, dead)
    state.step = t
    state.halted = check_halting(state, cfg)


def advance(state: SimState, cfg: SwarmConfig, n_steps: int) -> bool:
    """Run up to ``n_steps`` compiled steps (fewer if the blob halts)."""
    if state.halted or n_steps <= 0:
        return state.halted
    f = state.field
    n, step, halted, swapped = _run(
        state.n, state.px, state.py, state.fx, state.fy, state.heading, state.moved,
        state.occ.cells,
        f.values, f._back, state.bounds, state.cx, state.cy, state.status, state.uncover_step,
        state.step, n_steps, cfg._fparams(), cfg._iparams(), state.rng)
    if swapped:
        f.values, f._back = f._back, f.values
    state.n, state.step, state.halted = n, step, bool(halted)
    state.sync_traffic_lights()
    return state.halted


def step(state: SimState, cfg: SwarmConfig) -> None:
    if state.halted:
        raise RuntimeError("simulation already halted")
    advance(state, cfg, 1)


def run_until_halt(state: SimState, cfg: SwarmConfig, max_steps: int = 50000,
                   frame_every: int = 0,
                   on_frame: Callable[[SimState], None] | None = None,
                   check_every: int = 0) -> SimState:
    """Step until every city is uncovered.

    ``on_frame`` fires whenever ``state.step`` is a multiple of
    ``frame_every`` and once more at the final step. ``check_every``
    enables periodic bijection checks.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    limit = state.step + max_steps
    periods = [c for c in (frame_every, check_every) if c > 0]
    while not state.halted and state.step < limit:
        todo = limit - state.step
        for c in periods:
            todo = min(todo, c - state.step % c)
        advance(state, cfg, todo)
        if check_every and state.step % check_every == 0:
            state.check_bijection()
        if on_frame is not None and frame_every and state.step % frame_every == 0 \
                and not state.halted:
            on_frame(state)
    if on_frame is not None and frame_every:
        on_frame(state)
    if not state.halted:
        raise NoConvergenceError(f"no convergence after {max_steps} steps", state)
    state.check_bijection()
    return state
