"""Experiment orchestration: datasets on disk, single runs, campaigns, square stimuli.

Per-run seeds are ``base_seed XOR blake2b("d,r")`` (64 bit), so any run of a
campaign can be replayed on its own with :func:`run_seed`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import geometry, lattice, oracle, swarm, tracer
from .geometry import CityDataset, Tour
from .swarm import NoConvergenceError, SimState, SwarmConfig

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
N_BENCH = 20
FIFTY_SEED = 50
FIFTY_MIN_SEP = 20  # 25 cells cannot pack 50 cities into the radius-90 arena
MASK64 = (1 << 64) - 1
LATTICE = (200, 200)


# ------------------------------------------------------------ datasets

def write_dataset(path, ds: CityDataset) -> None:
    lines = [str(len(ds))] + [f"{lab} {x} {y}" for lab, (x, y) in zip(ds.labels, ds.xy)]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset(path) -> CityDataset:
    path = Path(path)
    try:
        rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    n = int(rows[0][0])
    if len(rows) - 1 != n:
        raise ValueError(f"{path}: header says {n} cities, found {len(rows) - 1}")
    labels = [r[0] for r in rows[1:]]
    xy = np.array([[int(r[1]), int(r[2])] for r in rows[1:]], dtype=np.int64)
    return CityDataset(labels, xy, name=path.stem)


def benchmark_datasets(n: int = N_BENCH, seed0: int = 0) -> list[CityDataset]:
    """The benchmark protocol: 20 cities, 25-cell separation, radius-90 disc."""
    out = []
    for i in range(n):
        ds = geometry.generate_dataset(20, seed=seed0 + i)
        ds.name = f"bench_{i:02d}"
        out.append(ds)
    return out


def fifty_dataset() -> CityDataset:
    ds = geometry.generate_dataset(50, min_sep=FIFTY_MIN_SEP, seed=FIFTY_SEED)
    ds.name = "cities50"
    return ds


def write_shipped(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ds in benchmark_datasets() + [fifty_dataset()]:
        p = out_dir / f"{ds.name}.txt"
        write_dataset(p, ds)
        paths.append(p)
    return paths


def shipped_datasets(fifty: bool = False) -> list[CityDataset]:
    if fifty:
        return [read_dataset(DATA_DIR / "cities50.txt")]
    return [read_dataset(p) for p in sorted(DATA_DIR.glob("bench_*.txt"))]


# ------------------------------------------------------------ config files

def _parse_value(kind, text: str):
    t = text.strip()
    if kind is bool or kind == "bool":
        if t.lower() in ("1", "true", "yes", "on"):
            return True
        if t.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int or kind == "int":
        return int(t)
    return float(t)


def config_types() -> dict:
    return {f.name: f.type for f in fields(SwarmConfig)}


def parse_config(text: str, base: SwarmConfig | None = None) -> SwarmConfig:
    """``key = value`` lines, ``#`` comments; unknown keys are an error."""
    types = config_types()
    changes = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {num}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in types:
            raise ValueError(f"line {num}: unknown config key {k!r}")
        changes[k] = _parse_value(types[k], v)
    return (base or SwarmConfig()).replace(**changes)


def read_config(path, base: SwarmConfig | None = None) -> SwarmConfig:
    try:
        return parse_config(Path(path).read_text(), base)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc


def format_config(cfg: SwarmConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(out) + "\n"


def write_trace(path, trace, dataset: CityDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "city_label"])
        for step, k in trace:
            w.writerow([step, dataset.labels[k]])


# ------------------------------------------------------------ frames

def render_frame(state: SimState, path) -> None:
    """Field snapshot as PGM with each city burned in as a 3x3 white square."""
    img = lattice.to_gray8(state.field.values)
    h, w = img.shape
    for c in state.cities:
        img[max(c.y - 1, 0):min(c.y + 2, h), max(c.x - 1, 0):min(c.x + 2, w)] = 255
    lattice.write_pgm(path, img)


def mask_image(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 255, 0).astype(np.uint8)


# ------------------------------------------------------------ single runs

def run_seed(base_seed: int, dataset_index: int, run_index: int) -> int:
    h = hashlib.blake2b(f"{dataset_index},{run_index}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(h, "little")) & MASK64


def reference_tour(ds: CityDataset, seed: int = 0) -> tuple[Tour, str]:
    """Exact optimum when the DP fits, otherwise the 2-opt baseline (flagged)."""
    d = ds.distance_matrix()
    if len(ds) <= oracle.HK_MAX:
        return oracle.held_karp(d), "held_karp"
    return oracle.two_opt(d, seed=seed, restarts=20), "two_opt"


@dataclass
class RunResult:
    dataset: str
    dataset_index: int
    run: int
    seed: int
    status: str  # ok | no_convergence | off_perimeter | empty_blob
    halt_step: int
    init_population: int
    final_population: int
    component_share: float
    halting_sound: bool
    tour_length: float = math.nan
    oracle: str = ""
    oracle_length: float = math.nan
    ratio: float = math.nan
    tour: str = ""
    message: str = ""
    trace: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def connected(self) -> bool:
        return self.component_share >= 0.99


CSV_FIELDS = [f.name for f in fields(RunResult) if f.name != "trace"]


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _row_from_csv(row: dict) -> RunResult:
    kw = {}
    for f in fields(RunResult):
        if f.name == "trace":
            continue
        v = row[f.name]
        if f.type in ("int",):
            kw[f.name] = int(v)
        elif f.type in ("float",):
            kw[f.name] = float(v)
        elif f.type in ("bool",):
            kw[f.name] = v == "1"
        else:
            kw[f.name] = v
    return RunResult(**kw)


def run_single(ds: CityDataset, cfg: SwarmConfig, seed: int, *, dataset_index: int = 0,
               run_index: int = 0, max_steps: int = 50000,
               detect_radius: int = tracer.DETECT_RADIUS,
               ref: tuple[Tour, str] | None = None, frames_every: int = 0,
               frame_dir=None, size=LATTICE) -> tuple[RunResult, SimState, Tour | None]:
    """Initialise on the hull, shrink to halt, read and score the tour."""
    cfg = cfg.replace(rng_seed=seed)
    rng = np.random.default_rng(seed)
    w, h = size
    state = swarm.init_blob(geometry.convex_hull(ds.xy), cfg, w, h, cities=ds.xy, rng=rng)
    init_pop = state.n

    on_frame = None
    if frames_every and frame_dir is not None:
        frame_dir = Path(frame_dir)
        frame_dir.mkdir(parents=True, exist_ok=True)

        def on_frame(st):
            render_frame(st, frame_dir / lattice.frame_name(st.step))

    status, message, tour = "ok", "", None
    try:
        swarm.run_until_halt(state, cfg, max_steps=max_steps, frame_every=frames_every,
                             on_frame=on_frame)
    except NoConvergenceError as exc:
        status, message = "no_convergence", str(exc)

    occupied = state.occ.occupied()
    share = tracer.component_share(occupied)
    counts = state.city_counts(cfg.halting_window_half_width)
    sound = bool(np.all(counts < cfg.halting_threshold))
    if state.halted and not sound:
        raise AssertionError(f"halted with covered cities: {counts.tolist()}")

    res = RunResult(ds.name, dataset_index, run_index, seed, status, state.step, init_pop,
                    state.n, share, sound, trace=state.insertion_trace)
    if status == "ok":
        try:
            mask = tracer.extract_mask(occupied)
            path = tracer.trace_boundary(mask)
            tour = tracer.read_tour(path, ds, detect_radius)
        except tracer.CityOffPerimeterError as exc:
            res.status, res.message = "off_perimeter", str(exc)
        except tracer.EmptyBlobError as exc:
            res.status, res.message = "empty_blob", str(exc)
    else:
        res.message = message

    if ref is None:
        ref = reference_tour(ds, seed=0)
    res.oracle, res.oracle_length = ref[1], float(ref[0].length)
    if tour is not None:
        res.tour_length = float(tour.length)
        res.ratio = res.tour_length / res.oracle_length
        res.tour = tour.label_line()
    return res, state, tour


# ------------------------------------------------------------ campaigns

@dataclass
class CampaignSpec:
    datasets: list
    runs_per_dataset: int = 6
    config: SwarmConfig = field(default_factory=SwarmConfig)
    base_seed: int = 0
    out_dir: Path | None = None
    frames_every: int = 0
    max_steps: int = 50000
    detect_radius: int = tracer.DETECT_RADIUS
    workers: int | None = None

    def __post_init__(self):
        if self.runs_per_dataset < 1:
            raise ValueError("runs_per_dataset must be >= 1")


@dataclass
class CampaignReport:
    rows: list

    @property
    def completed(self) -> list:
        return [r for r in self.rows if r.ok]

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    @property
    def completion_rate(self) -> float:
        return len(self.completed) / len(self.rows) if self.rows else math.nan

    @property
    def connectivity_rate(self) -> float:
        halted = [r for r in self.rows if r.status != "no_convergence"]
        return sum(r.connected for r in halted) / len(halted) if halted else math.nan

    @property
    def halting_sound(self) -> bool:
        return all(r.halting_sound for r in self.rows if r.status != "no_convergence")

    @property
    def baseline_flagged(self) -> bool:
        return any(r.oracle != "held_karp" for r in self.rows)

    def per_dataset(self) -> dict:
        """dataset -> (best, mean, worst) ratio over completed runs."""
        by = {}
        for r in self.completed:
            by.setdefault((r.dataset_index, r.dataset), []).append(r.ratio)
        return {name: (min(v), sum(v) / len(v), max(v)) for (_, name), v in sorted(by.items())}

    def aggregates(self) -> tuple[float, float, float]:
        per = list(self.per_dataset().values())
        if not per:
            return (math.nan,) * 3
        return tuple(sum(p[i] for p in per) / len(per) for i in range(3))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "CampaignReport":
        with open(path, newline="") as fh:
            return cls([_row_from_csv(row) for row in csv.DictReader(fh)])

    def summary(self) -> str:
        best, mean, worst = self.aggregates()
        lines = [f"runs: {len(self.rows)}  completed: {len(self.completed)} "
                 f"({self.completion_rate:.1%})  failed: {len(self.failures)}"]
        fails = {}
        for r in self.failures:
            fails[r.status] = fails.get(r.status, 0) + 1
        if fails:
            lines.append("failures: " + ", ".join(f"{k}={v}" for k, v in sorted(fails.items())))
        ref = "2-opt baseline (NOT exact)" if self.baseline_flagged else "Held-Karp optimum"
        lines.append(f"ratios against: {ref}")
        lines.append(f"mean-of-best {best:.4f}  mean-of-mean {mean:.4f}  mean-of-worst {worst:.4f}")
        lines.append(f"connectivity (largest component >= 99%): {self.connectivity_rate:.1%}")
        lines.append(f"halting sound: {self.halting_sound}")
        lines.append("")
        lines.append(f"{'dataset':<12} {'best':>7} {'mean':>7} {'worst':>7}")
        for name, (b, m, w) in self.per_dataset().items():
            lines.append(f"{name:<12} {b:7.4f} {m:7.4f} {w:7.4f}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path, txt_path = out_dir / "runs.csv", out_dir / "summary.txt"
        try:
            csv_path.write_text(self.to_csv())
            txt_path.write_text(self.summary())
        except OSError as exc:
            raise OSError(f"cannot write report to {out_dir}: {exc}") from exc
        return csv_path, txt_path


def _campaign_task(args):
    ds, d, r, spec, ref = args
    seed = run_seed(spec.base_seed, d, r)
    frame_dir = None
    if spec.out_dir is not None and spec.frames_every:
        frame_dir = Path(spec.out_dir) / "frames" / f"{ds.name}_r{r}"
    res, state, _ = run_single(ds, spec.config, seed, dataset_index=d, run_index=r,
                               max_steps=spec.max_steps, detect_radius=spec.detect_radius,
                               ref=ref, frames_every=spec.frames_every, frame_dir=frame_dir)
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
        write_trace(out / "traces" / f"{ds.name}_r{r}.csv", res.trace, ds)
        lattice.write_pgm(out / "masks" / f"{ds.name}_r{r}.pgm",
                          mask_image(state.occ.occupied()))
    return res


def _reference_task(ds):
    return reference_tour(ds, seed=0)


def _pool(workers):
    n = workers or os.cpu_count() or 1
    return ProcessPoolExecutor(max_workers=n) if n > 1 else None


def run_campaign(spec: CampaignSpec, progress=None) -> CampaignReport:
    """Every dataset x run, in parallel; rows come back in (dataset, run) order."""
    datasets = list(spec.datasets)
    pool = _pool(spec.workers)
    try:
        mapper = pool.map if pool else map
        refs = list(mapper(_reference_task, datasets))
        jobs = [(ds, d, r, spec, refs[d]) for d, ds in enumerate(datasets)
                for r in range(spec.runs_per_dataset)]
        rows = []
        for res in mapper(_campaign_task, jobs):
            rows.append(res)
            if progress is not None:
                progress(res)
    finally:
        if pool:
            pool.shutdown()
    report = CampaignReport(rows)
    if spec.out_dir is not None:
        report.write(spec.out_dir)
        (Path(spec.out_dir) / "config.txt").write_text(format_config(spec.config))
    return report


# ------------------------------------------------------------ square stimuli

SQUARE_SIDE = 120
SQUARE_SAMPLES = (100, 500, 1000, 2000, 3000, 3500, 4000, 5000)
EDGES = ("top", "right", "bottom", "left")
SQUARE_CASES = {
    "uniform20": (20, 20, 20, 20),
    "right30": (20, 30, 20, 20),
    "right60": (20, 60, 20, 20),
    "left40_right60": (20, 60, 20, 40),
}


def square_box(side: int = SQUARE_SIDE, center=(100, 100)) -> tuple[int, int, int, int]:
    x0 = int(center[0]) - side // 2
    y0 = int(center[1]) - side // 2
    return x0, y0, x0 + side, y0 + side


def square_stimuli(side: int, gaps, center=(100, 100)) -> list[tuple[int, int]]:
    """Stimuli every ``gap`` cells along each edge (top, right, bottom, left), corners shared."""
    if len(gaps) != 4:
        raise ValueError("need one gap per edge: top, right, bottom, left")
    x0, y0, x1, y1 = square_box(side, center)
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    pts: list[tuple[int, int]] = []
    for e, g in enumerate(gaps):
        if g <= 0 or side % g:
            raise ValueError(f"gap {g} does not divide side {side}")
        (ax, ay), (bx, by) = corners[e], corners[(e + 1) % 4]
        sx, sy = (bx - ax) // side, (by - ay) // side
        for k in range(side // g + 1):
            p = (ax + sx * g * k, ay + sy * g * k)
            if p not in pts:
                pts.append(p)
    return pts


def concavity_depths(occupied: np.ndarray, box, margin: int = 10) -> dict:
    """Per edge, the deepest inward distance from the edge to the first occupied cell.

    Scanlines within ``margin`` cells of a corner are skipped (corner rounding
    is not a concavity); a scanline with no occupied cell scores the side length.
    """
    x0, y0, x1, y1 = box
    m = occupied[y0:y1 + 1, x0:x1 + 1]
    side = m.shape[0] - 1
    inner = slice(margin, side + 1 - margin)

    def depth(a):
        # a: (scanlines, inward distance)
        hit = a.any(axis=1)
        first = np.where(hit, a.argmax(axis=1), side)
        return int(first.max()) if len(first) else 0

    return {
        "top": depth(m[:, inner].T),
        "right": depth(m[inner, ::-1]),
        "bottom": depth(m[::-1, inner].T),
        "left": depth(m[inner, :]),
    }


def dominant_edge(depths: dict, ratio: float = 1.5, min_depth: int = 8) -> str | None:
    """Edge whose concavity is at least ``ratio`` times any other, or None."""
    ranked = sorted(depths.items(), key=lambda kv: -kv[1])
    (e1, d1), (_, d2) = ranked[0], ranked[1]
    if d1 >= min_depth and d1 >= ratio * max(d2, 1):
        return e1
    return None


@dataclass
class SquareResult:
    gaps: tuple
    seed: int
    samples: list  # (step, {edge: depth})
    frames: list = field(default_factory=list)

    def depths_at(self, step: int) -> dict:
        for s, d in self.samples:
            if s == step:
                return d
        raise KeyError(step)


def square_scenario(side: int = SQUARE_SIDE, gaps=(20, 20, 20, 20),
                    cfg: SwarmConfig | None = None, seed: int = 0, steps: int = 5000,
                    sample_times=SQUARE_SAMPLES, out_dir=None, margin: int = 10,
                    size=LATTICE) -> SquareResult:
    """Blob seeded on a square ringed by stimuli, run for a fixed budget (no halting)."""
    cfg = (cfg or SwarmConfig()).replace(rng_seed=seed, halting_threshold=0)
    w, h = size
    box = square_box(side, (w // 2, h // 2))
    x0, y0, x1, y1 = box
    hull = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    pts = square_stimuli(side, gaps, (w // 2, h // 2))
    rng = np.random.default_rng(seed)
    state = swarm.init_blob(hull, cfg, w, h, cities=pts, rng=rng)
    times = sorted({t for t in sample_times if t <= steps} | {steps})
    res = SquareResult(tuple(gaps), seed, [])
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for t in times:
        swarm.advance(state, cfg, t - state.step)
        occ = tracer.largest_component(state.occ.occupied())[0]
        res.samples.append((t, concavity_depths(occ, box, margin)))
        if out_dir is not None:
            p = out_dir / lattice.frame_name(t)
            render_frame(state, p)
            res.frames.append(p)
    return res


def _square_task(args):
    side, gaps, cfg, seed, steps, out_dir = args
    return square_scenario(side, gaps, cfg, seed, steps, out_dir=out_dir)


def square_runs(gaps, seeds=range(5), side: int = SQUARE_SIDE, cfg: SwarmConfig | None = None,
                steps: int = 5000, out_dir=None, workers: int | None = None) -> list:
    jobs = [(side, tuple(gaps), cfg, s, steps,
             None if out_dir is None else Path(out_dir) / f"seed{s}") for s in seeds]
    pool = _pool(workers)
    try:
        return list((pool.map if pool else map)(_square_task, jobs))
    finally:
        if pool:
            pool.shutdown()


def write_square_log(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "step"] + list(EDGES) + ["dominant"])
        for r in results:
            for t, d in r.samples:
                w.writerow([r.seed, t] + [d[e] for e in EDGES] + [dominant_edge(d) or ""])
