"""Operator command line: dataset generation, exploration runs, batch
evaluation, threshold sweeps and the protocol server.

Every artifact-producing command writes a ``run_manifest.json`` into its
output directory with the fully resolved arguments; ``replay`` re-runs such a
manifest and reproduces the outputs byte for byte. Exit codes: 0 on success,
1 on usage or configuration errors, 2 on semantic failures (a failed episode,
a configuration without a single success).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .environment import EpisodeConfig
from .evaluation import (
    exposure_curves,
    records_to_csv,
    reduction_report,
    run_batch,
    run_episode,
    success_rate,
)
from .floorplan import (
    DatasetError,
    GenerationError,
    GeneratorConfig,
    MapFormatError,
    dataset_stats,
    export_raster,
    generate_floorplan,
    import_raster,
    load_manifest,
    write_manifest,
)
from .grid import CellClass, CellEncoding
from .predictor import ThresholdConfig, parse_predictor, predictor_label
from .seeding import derive_seed
from .server import DEFAULT_PORT, EnvironmentServer, serve_stdio

PATH_GRAY = 200  # reserved gray value marking traversed cells in trace images


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    """Binary PGM (P5) writer for trace rasters."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def _write_run_manifest(out_dir: Path, command: str, arguments: dict) -> None:
    manifest = {
        "command": command,
        "arguments": arguments,
        "package_version": __version__,
    }
    (out_dir / "run_manifest.json").write_bytes(
        json.dumps(manifest, sort_keys=True, indent=2).encode("utf-8") + b"\n"
    )


def _sanitize(label: str) -> str:
    return label.replace(":", "-").replace("/", "-")


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or out.name or "map"
    entries = []
    for i in range(args.count):
        cfg = GeneratorConfig(
            interior_width=args.interior_width,
            interior_height=args.interior_height,
            min_room_side=args.min_room_side,
            target_wall_fraction=args.wall_fraction,
            wall_fraction_tolerance=args.wall_tolerance,
            seed=derive_seed(args.seed, i),
        )
        gt = generate_floorplan(cfg)
        entry = f"{name}_{i:04d}.map"
        export_raster(gt, out / entry)
        entries.append(entry)
    write_manifest(out, entries)
    stats = dataset_stats(load_manifest(out))
    (out / "stats.json").write_bytes(
        json.dumps(
            {
                "count": stats.count,
                "area_mean": stats.area_mean,
                "area_std": stats.area_std,
                "wall_fraction_mean": stats.wall_fraction_mean,
                "wall_fraction_std": stats.wall_fraction_std,
                "contour": stats.contour,
            },
            sort_keys=True,
            indent=2,
        ).encode("utf-8")
        + b"\n"
    )
    _write_run_manifest(out, "gen", _manifest_args(args, "count", "seed", "out", "name",
                                                   "interior_width", "interior_height",
                                                   "min_room_side", "wall_fraction",
                                                   "wall_tolerance"))
    print(stats.summary())
    return 0


# ---------------------------------------------------------------------------
# explore


def _episode_config(args: argparse.Namespace, seed: int, predictor: str) -> EpisodeConfig:
    return EpisodeConfig(
        coverage_target=args.coverage_target,
        max_steps=args.max_steps,
        predictor=parse_predictor(predictor),
        thresholds=ThresholdConfig(args.delta_free, args.delta_obstacle),
        seed=seed,
    )


def _trace_image(gt, record) -> np.ndarray:
    enc = CellEncoding()
    lut = np.zeros(256, dtype=np.uint8)
    lut[CellClass.FREE] = enc.free
    lut[CellClass.OBSTACLE] = enc.obstacle
    lut[CellClass.EXTERIOR] = enc.obstacle
    image = lut[gt.cells]
    for x, y in record.path:
        image[y, x] = PATH_GRAY
    return image


def cmd_explore(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt = import_raster(args.map)
    cfg = _episode_config(args, args.seed, args.predictor)
    record = run_episode(gt, Path(args.map).stem, cfg, planner_name=args.planner)
    lines = ["step,action,reward,coverage", f"0,,,{record.coverages[0]!r}"]
    for i, (action, reward, coverage) in enumerate(
        zip(record.actions, record.rewards, record.coverages[1:]), start=1
    ):
        lines.append(f"{i},{action},{reward!r},{coverage!r}")
    (out / "trace.csv").write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    records_to_csv([record], out / "record.csv")
    write_pgm(_trace_image(gt, record), out / "path.pgm")
    _write_run_manifest(out, "explore", _manifest_args(args, "map", "planner", "predictor",
                                                       "coverage_target", "max_steps", "seed",
                                                       "delta_free", "delta_obstacle", "out"))
    print(
        f"{record.map_id}: {'success' if record.success else 'failure'} in "
        f"{record.steps} steps, coverage {record.final_coverage:.4f} "
        f"(observed {record.observed_coverage:.4f}), f1 {record.f1:.4f}"
    )
    return 0 if record.success else 2


# ---------------------------------------------------------------------------
# eval


def _parse_configs(text: str) -> list[tuple[str, str]]:
    configs = []
    for item in text.split(","):
        planner, sep, predictor = item.partition("+")
        if not sep or not planner or not predictor:
            raise ValueError(
                f"bad config {item!r}: expected '<planner>+<predictor>'"
            )
        configs.append((planner, predictor))
    return configs


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(args.dataset)
    configs = _parse_configs(args.configs)
    jobs = args.jobs if args.jobs > 0 else (os.cpu_count() or 1)
    results = []
    failed_config = False
    for planner, predictor in configs:
        cfg = _episode_config(args, args.seed, predictor)
        batch = run_batch(
            manifest, cfg, planner=planner, episodes=args.episodes, jobs=jobs
        )
        label = _sanitize(f"{planner}+{predictor_label(cfg.predictor)}")
        records_to_csv(batch.records, out / f"records_{label}.csv")
        if batch.records:
            exposure_curves(batch.records, horizon=args.max_steps).to_csv(
                out / f"curves_{label}.csv"
            )
        for map_id, error in batch.skipped:
            print(f"skipped {map_id}: {error}", file=sys.stderr)
        rate = success_rate(batch.records)
        print(f"{label}: {len(batch.records)} episodes, success rate {rate:.3f}")
        if not any(r.success for r in batch.records):
            failed_config = True
        results.append((label, batch.records))
    areas = {r.map_id: r.interior_area for _, records in results for r in records}
    baseline_label, baseline_records = results[0]
    for label, records in results[1:]:
        report = reduction_report(baseline_records, records, areas=areas)
        report.to_csv(out / f"report_{label}.csv")
        print(
            f"{label} vs {baseline_label}: reduction "
            f"{report.reduction_mean_pct:.2f}% ({report.reduction_std_pct:.2f}%) "
            f"over {report.common_successes} common successes"
        )
    _write_run_manifest(out, "eval", _manifest_args(args, "dataset", "configs", "episodes",
                                                    "coverage_target", "max_steps", "seed",
                                                    "delta_free", "delta_obstacle", "jobs", "out"))
    return 2 if failed_config else 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(args.dataset)
    jobs = args.jobs if args.jobs > 0 else (os.cpu_count() or 1)
    free_grid = [float(v) for v in args.delta_free.split(",")]
    obstacle_grid = [float(v) for v in args.delta_obstacle.split(",")]
    lines = ["delta_free,delta_obstacle,f1,mean_steps"]
    for df in free_grid:
        for do in obstacle_grid:
            cfg = EpisodeConfig(
                coverage_target=args.coverage_target,
                max_steps=args.max_steps,
                predictor=parse_predictor(args.predictor),
                thresholds=ThresholdConfig(df, do),
                seed=args.seed,
            )
            batch = run_batch(
                manifest, cfg, planner=args.planner, episodes=args.episodes, jobs=jobs
            )
            f1_mean = float(np.mean([r.f1 for r in batch.records]))
            steps = [r.steps for r in batch.records if r.success]
            steps_mean = float(np.mean(steps)) if steps else float("nan")
            lines.append(f"{df!r},{do!r},{f1_mean!r},{steps_mean!r}")
    (out / "sweep.csv").write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    _write_run_manifest(out, "sweep", _manifest_args(args, "dataset", "predictor", "planner",
                                                     "delta_free", "delta_obstacle", "episodes",
                                                     "coverage_target", "max_steps", "seed",
                                                     "jobs", "out"))
    print(f"sweep over {len(free_grid)}x{len(obstacle_grid)} grid written to {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# serve / replay


def cmd_serve(args: argparse.Namespace) -> int:
    if args.stdio:
        serve_stdio(args.dataset)
        return 0
    server = EnvironmentServer(args.dataset, host=args.host, port=args.port)
    host, port = server.address
    print(f"serving {args.dataset} on {host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = manifest["command"]
    arguments = dict(manifest["arguments"])
    if args.out is not None:
        arguments["out"] = args.out
    replay_args = argparse.Namespace(**arguments)
    return _COMMANDS[command](replay_args)


def _manifest_args(args: argparse.Namespace, *names: str) -> dict:
    return {name: getattr(args, name) for name in names}


_COMMANDS = {
    "gen": cmd_gen,
    "explore": cmd_explore,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmapper",
        description="Deterministic occupancy-grid indoor exploration engine",
    )
    parser.add_argument("--version", action="version", version=f"gridmapper {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a floorplan dataset")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--name", default=None)
    gen.add_argument("--interior-width", type=int, default=62)
    gen.add_argument("--interior-height", type=int, default=60)
    gen.add_argument("--min-room-side", type=int, default=8)
    gen.add_argument("--wall-fraction", type=float, default=0.073)
    gen.add_argument("--wall-tolerance", type=float, default=0.004)

    def add_episode_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--coverage-target", type=float, default=0.98)
        p.add_argument("--max-steps", type=int, default=400)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--delta-free", type=float, default=0.93)
        p.add_argument("--delta-obstacle", type=float, default=0.95)

    explore = sub.add_parser("explore", help="run one episode with trace export")
    explore.add_argument("--map", required=True)
    explore.add_argument("--planner", default="frontier", choices=("frontier", "nearest", "random"))
    explore.add_argument("--predictor", default="none")
    explore.add_argument("--out", required=True)
    add_episode_flags(explore)

    ev = sub.add_parser("eval", help="batch evaluation and comparison reports")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--configs", required=True,
                    help="comma list of <planner>+<predictor>; first is the baseline")
    ev.add_argument("--episodes", type=int, default=None)
    ev.add_argument("--jobs", type=int, default=0, help="0 = one per processor")
    ev.add_argument("--out", required=True)
    add_episode_flags(ev)

    sweep = sub.add_parser("sweep", help="confidence-threshold grid sweep")
    sweep.add_argument("--dataset", required=True)
    sweep.add_argument("--predictor", required=True)
    sweep.add_argument("--planner", default="frontier")
    sweep.add_argument("--episodes", type=int, default=None)
    sweep.add_argument("--jobs", type=int, default=0)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--delta-free", default="0.8,0.9,0.93",
                       help="comma list of free confidence levels")
    sweep.add_argument("--delta-obstacle", default="0.9,0.95,0.99",
                       help="comma list of obstacle confidence levels")
    sweep.add_argument("--coverage-target", type=float, default=0.98)
    sweep.add_argument("--max-steps", type=int, default=400)
    sweep.add_argument("--seed", type=int, default=0)

    serve = sub.add_parser("serve", help="run the environment protocol server")
    serve.add_argument("--dataset", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--stdio", action="store_true", help="serve one session over stdio")

    rep = sub.add_parser("replay", help="re-run a recorded run manifest")
    rep.add_argument("--manifest", required=True)
    rep.add_argument("--out", default=None, help="override the output directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, GenerationError, MapFormatError, DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
