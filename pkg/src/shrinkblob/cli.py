"""Command line entry point: ``shrinkblob <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import geometry, harness, lattice, oracle, tracer
from .swarm import SwarmConfig

log = logging.getLogger("shrinkblob")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model config (mirrors the config file keys)")
    g.add_argument("--config", type=Path, help="key = value config file")
    types = harness.config_types()
    for f in fields(SwarmConfig):
        if f.name == "rng_seed":
            continue  # --seed
        kind = types[f.name]
        if kind == "bool":
            g.add_argument(_flag(f.name), dest=f.name, default=None,
                           type=lambda s: harness._parse_value("bool", s), metavar="BOOL")
        else:
            g.add_argument(_flag(f.name), dest=f.name, default=None,
                           type=int if kind == "int" else float)


def config_from_args(args) -> SwarmConfig:
    cfg = harness.read_config(args.config) if args.config else SwarmConfig()
    changes = {f.name: getattr(args, f.name) for f in fields(SwarmConfig)
               if getattr(args, f.name, None) is not None}
    return cfg.replace(**changes)


def load_dataset(spec: str) -> geometry.CityDataset:
    """A dataset file path, or the name of a shipped dataset (``bench_03``, ``cities50``)."""
    p = Path(spec)
    if p.exists():
        return harness.read_dataset(p)
    shipped = harness.DATA_DIR / f"{spec}.txt"
    if shipped.exists():
        return harness.read_dataset(shipped)
    raise SystemExit(f"no such dataset: {spec}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------ subcommands

def cmd_gen_datasets(args) -> int:
    for p in harness.write_shipped(args.out):
        print(p)
    return 0


def cmd_run(args) -> int:
    from . import plots

    ds = load_dataset(args.dataset)
    cfg = config_from_args(args)
    out = _out_dir(args)
    ref = harness.reference_tour(ds)
    res, state, tour = harness.run_single(
        ds, cfg, args.seed, max_steps=args.max_steps, detect_radius=args.detect_radius,
        ref=ref, frames_every=args.frames_every, frame_dir=out / "frames")
    (out / "config.txt").write_text(harness.format_config(cfg.replace(rng_seed=args.seed)))
    harness.write_trace(out / "trace.csv", res.trace, ds)
    occupied = state.occ.occupied()
    lattice.write_pgm(out / "mask.pgm", harness.mask_image(occupied))
    report = harness.CampaignReport([res])
    (out / "run.csv").write_text(report.to_csv())
    plots.plot_run(ds, occupied, tour, ref[0], out / "run.png",
                   title=f"{ds.name} seed {args.seed} step {res.halt_step}")
    plots.plot_insertion(ds, res.trace, out / "insertion.png")
    print(report.to_csv(), end="")
    if tour is not None:
        print(f"tour: {tour.label_line()}")
        print(f"length: {tour.length:.3f}  {ref[1]}: {ref[0].length:.3f}  ratio: {res.ratio:.4f}")
    else:
        print(f"failed: {res.status}: {res.message}")
    return 0 if res.ok or not args.strict else 1


def cmd_campaign(args) -> int:
    from . import plots

    if args.data_dir:
        datasets = [harness.read_dataset(p) for p in sorted(Path(args.data_dir).glob("*.txt"))]
    else:
        datasets = harness.shipped_datasets(fifty=args.fifty)
    if args.limit:
        datasets = datasets[:args.limit]
    out = _out_dir(args)
    spec = harness.CampaignSpec(datasets, args.runs, config_from_args(args), args.seed, out,
                                args.frames_every, args.max_steps, args.detect_radius,
                                args.workers)
    t0 = time.time()

    def progress(r):
        log.info("%s r%d %s step %d ratio %.4f", r.dataset, r.run, r.status, r.halt_step,
                 r.ratio)

    report = harness.run_campaign(spec, progress=progress)
    plots.plot_campaign(report, out / "ratios.png")
    print(report.to_csv(), end="")
    print("---")
    print(report.summary(), end="")
    print(f"elapsed: {time.time() - t0:.1f} s")
    return 1 if args.strict and report.failures else 0


def cmd_square(args) -> int:
    from . import plots

    gaps = harness.SQUARE_CASES[args.case] if args.case else \
        tuple(int(g) for g in args.gaps.split(","))
    out = _out_dir(args)
    seeds = range(args.seed, args.seed + args.seeds)
    t0 = time.time()
    results = harness.square_runs(gaps, seeds, args.side, config_from_args(args), args.steps,
                                  out_dir=out / "frames", workers=args.workers)
    harness.write_square_log(out / "concavity.csv", results)
    plots.plot_square(results, out / "concavity.png", title=f"gaps {gaps}")
    print((out / "concavity.csv").read_text(), end="")
    print(f"elapsed: {time.time() - t0:.1f} s")
    return 0


def cmd_solve(args) -> int:
    ds = load_dataset(args.dataset)
    d = ds.distance_matrix()
    method = args.method
    if method == "auto":
        method = "held_karp" if len(ds) <= oracle.HK_MAX else "two_opt"
    if method == "held_karp":
        t = oracle.held_karp(d)
    elif method == "brute":
        t = oracle.brute_force(d)
    elif method == "two_opt":
        t = oracle.two_opt(d, seed=args.seed, restarts=args.restarts)
    else:
        t = oracle.nearest_neighbour(d)
    print("method,length,tour")
    print(f"{method},{t.length!r},{' '.join(ds.labels[k] for k in t.order)}")
    return 0


def cmd_trace(args) -> int:
    ds = load_dataset(args.dataset)
    img = lattice.read_pgm(args.mask)
    mask = tracer.extract_mask(img > 127)
    path = tracer.trace_boundary(mask)
    try:
        tour = tracer.read_tour(path, ds, args.detect_radius)
    except tracer.CityOffPerimeterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ref = harness.reference_tour(ds)
    print("length,oracle,oracle_length,ratio,tour")
    print(f"{tour.length!r},{ref[1]},{ref[0].length!r},{tour.length / ref[0].length!r},"
          f"{tour.label_line()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shrinkblob", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-datasets", help="write the 20 benchmark sets and the 50-city set")
    g.add_argument("--out", default="datasets")
    g.set_defaults(func=cmd_gen_datasets)

    def common(q, out):
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", default=out)
        q.add_argument("--frames-every", type=int, default=0, metavar="N")
        q.add_argument("--max-steps", type=int, default=50000)
        q.add_argument("--detect-radius", type=int, default=tracer.DETECT_RADIUS)
        q.add_argument("--strict", action="store_true",
                       help="exit nonzero if any run fails")
        add_config_flags(q)

    r = sub.add_parser("run", help="one simulation on one dataset")
    r.add_argument("--dataset", default="bench_00", help="file or shipped name")
    common(r, "out/run")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="datasets x runs benchmark")
    c.add_argument("--data-dir", help="directory of dataset files (default: shipped)")
    c.add_argument("--fifty", action="store_true", help="use the shipped 50-city set")
    c.add_argument("--runs", type=int, default=6)
    c.add_argument("--limit", type=int, default=0, help="first N datasets only")
    c.add_argument("--workers", type=int, default=None)
    common(c, "out/campaign")
    c.set_defaults(func=cmd_campaign)

    s = sub.add_parser("square", help="square-stimuli concavity scenario")
    s.add_argument("--case", choices=sorted(harness.SQUARE_CASES))
    s.add_argument("--gaps", default="20,20,20,20", help="top,right,bottom,left spacing")
    s.add_argument("--side", type=int, default=harness.SQUARE_SIDE)
    s.add_argument("--steps", type=int, default=5000)
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--out", default="out/square")
    s.add_argument("--workers", type=int, default=None)
    add_config_flags(s)
    s.set_defaults(func=cmd_square)

    o = sub.add_parser("solve", help="oracle only")
    o.add_argument("--dataset", required=True)
    o.add_argument("--method", default="auto",
                   choices=["auto", "held_karp", "brute", "two_opt", "nearest"])
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--restarts", type=int, default=20)
    o.set_defaults(func=cmd_solve)

    t = sub.add_parser("trace", help="re-read a tour from a saved mask PGM")
    t.add_argument("--mask", required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--detect-radius", type=int, default=tracer.DETECT_RADIUS)
    t.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
