"""Command line entry point: ``binverify {run,theory,overlay,validate-maze,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import theory
from .errors import BinVerifyError
from .harness import RunConfig, RunReport, aggregate, load_manifest, run
from .quantize import GridSpec, ShortlistConfig
from .raster import OverlayStyle, RasterImage, draw_grid, highlight_box, highlight_cell, load_png, save_png
from .resolution import ResolutionConfig
from .tasks.maze import MazeModel, MazePath, bfs_path, validate_maze_path
from .verifiers import HttpVerifier, ScriptedVerifier, SimulatedVerifier, SimulatorParams


def _pair(text: str, sep: str = "x") -> tuple[int, int]:
    a, b = text.lower().split(sep)
    return int(a), int(b)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def build_verifier(args):
    if args.backend == "simulator":
        return SimulatedVerifier(SimulatorParams(args.q1, args.q2, args.p, args.seed))
    if args.backend == "mock":
        if not args.fixtures:
            raise BinVerifyError("--fixtures is required for the mock backend")
        fx = json.loads(Path(args.fixtures).read_text(encoding="utf-8"))
        return ScriptedVerifier(fx.get("claims"), fx.get("mcq"), fx.get("completions"))
    if not args.endpoint or not args.model:
        raise BinVerifyError("--endpoint and --model are required for the http backend")
    return HttpVerifier(args.endpoint, args.model, api_key_env=args.api_key_env, cache_dir=args.cache_dir,
                        log_path=Path(args.out) / "http.jsonl", parallelism=args.parallelism)


def cmd_run(args) -> int:
    instances = load_manifest(args.manifest, fail_fast=not args.skip_bad_lines)
    if args.grid:
        rows, cols = _pair(args.grid)
        for inst in instances:
            if inst.kind == "spatial-grid":
                inst.source["grid"] = (rows, cols)
    config = RunConfig(
        mode=args.mode, votes=args.votes,
        resolution=ResolutionConfig(max_retries=args.retries, certainty_policy=args.certainty),
        shortlist=ShortlistConfig(tau=args.tau, max_candidates=args.max_candidates),
        temperature=args.temperature, vote_temperature=args.vote_temperature,
        repeats=args.repeats, parallelism=args.parallelism, seed=args.seed, render=not args.no_render,
    )
    verifier = build_verifier(args)
    paired = RunReport.load(args.paired).records if args.paired else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run(config, instances, verifier, log_path=out / "interactions.jsonl", paired=paired)
    report.save(out / "report.json")
    (out / "summary.csv").write_text(report.breakdown_csv(), encoding="utf-8")
    print(report.summary())
    return 0


def cmd_theory(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    q1_grid = np.round(np.linspace(0.05, 0.95, args.steps), 10)
    with open(out / "accuracy.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["q1", "q2", "p", "binary_accuracy", "mcq_accuracy", "p_star", "binary_wins"])
        for q2 in args.q2:
            for q1 in q1_grid:
                p_star = theory.mcq_threshold(q1, q2)
                for p in args.p:
                    a = theory.binary_accuracy(theory.TwoHypParams(q1, q2, p))
                    w.writerow([f"{q1:g}", f"{q2:g}", f"{p:g}", f"{a:.6f}", f"{p:.6f}", f"{p_star:.6f}",
                                int(a > p)])
    with open(out / "crossover.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["q2", "q1", "p_star"])
        for q2 in args.q2:
            for q1, ps in theory.crossover_curve(q2, q1_grid):
                w.writerow([f"{q2:g}", f"{q1:g}", f"{ps:.6f}"])
    with open(out / "fano.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["information_nats", "cardinality", "error_lower_bound"])
        for k in args.cardinalities:
            for info in np.linspace(0.0, np.log(k), 11):
                w.writerow([f"{info:.6f}", k, f"{theory.fano_bound(theory.FanoInput(float(info), k)):.6f}"])
    print(f"wrote accuracy.csv, crossover.csv, fano.csv to {out}")
    return 0


def cmd_overlay(args) -> int:
    if args.image:
        img = load_png(args.image)
    else:
        w, h = _pair(args.blank)
        img = RasterImage.blank(w, h)
    style = OverlayStyle(line_thickness=args.thickness, highlight_thickness=args.highlight_thickness,
                         index_labels=not args.no_labels)
    if args.grid:
        rows, cols = _pair(args.grid)
        spec = GridSpec(rows, cols, img.width, img.height)
        img = highlight_cell(img, spec, *_ints(args.cell), style) if args.cell else draw_grid(img, spec, style)
    if args.box:
        img = highlight_box(img, _ints(args.box), style)
    save_png(img, args.out)
    print(f"wrote {args.out} ({img.width}x{img.height})")
    return 0


def _read_path(args) -> MazePath:
    if args.path_file:
        data = json.loads(Path(args.path_file).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            if "critical_points" in data:
                return MazePath(critical_points=data["critical_points"])
            data = data["path"]
        cells = data
    else:
        cells = [_ints(tok) for tok in args.path.split()]
    return MazePath(critical_points=cells) if args.critical else MazePath(cells=cells)


def cmd_validate_maze(args) -> int:
    maze = MazeModel.load(args.maze)
    if args.solve:
        path = bfs_path(maze)
        if path is None:
            print("no path from S to E")
            return 1
        print(" ".join(f"{r},{c}" for r, c in path))
        return 0
    if not args.path and not args.path_file:
        raise BinVerifyError("give --path, --path-file or --solve")
    check = validate_maze_path(maze, _read_path(args))
    if check.valid:
        print("valid")
        return 0
    print(f"invalid at step {check.step}: {check.reason}")
    return 1


def cmd_report(args) -> int:
    report = RunReport.load(args.report)
    if args.paired:
        report.aggregates = aggregate(report.records, paired=RunReport.load(args.paired).records)
    print(report.summary())
    if args.csv:
        Path(args.csv).write_text(report.breakdown_csv(), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binverify", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a manifest in one inference mode")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", default="binary", help="open | mcq | mcq-mv | mcq-mv(N) | binary")
    p.add_argument("--votes", type=int, default=3)
    p.add_argument("--backend", choices=("simulator", "mock", "http"), default="simulator")
    p.add_argument("--q1", type=float, default=0.9)
    p.add_argument("--q2", type=float, default=0.1)
    p.add_argument("--p", type=float, default=0.8)
    p.add_argument("--fixtures", help="JSON with claims/mcq/completions tables for the mock backend")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--api-key-env", default="OPENAI_API_KEY")
    p.add_argument("--cache-dir")
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--grid", help="RxC grid for spatial-grid items, e.g. 5x5")
    p.add_argument("--retries", type=int, default=0)
    p.add_argument("--certainty", action="store_true", help="append the uncertain-means-False rule to claims")
    p.add_argument("--temperature", type=float, default=0.2)
    p.add_argument("--vote-temperature", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--paired", help="report.json of another mode on the same items")
    p.add_argument("--no-render", action="store_true", help="send no images (simulator sweeps)")
    p.add_argument("--skip-bad-lines", action="store_true")
    p.add_argument("--out", default="runs/latest")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("theory", help="accuracy, crossover and Fano tables as CSV")
    p.add_argument("--q2", type=_floats, default=[0.1, 0.2, 0.3, 0.4])
    p.add_argument("--p", type=_floats, default=[0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--steps", type=int, default=19)
    p.add_argument("--cardinalities", type=lambda s: [int(v) for v in s.split(",")], default=[2, 3, 4, 5])
    p.add_argument("--out", default="theory")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("overlay", help="draw a grid / highlighted cell / box onto a PNG")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--blank", help="WxH white canvas")
    p.add_argument("--grid", help="RxC")
    p.add_argument("--cell", help="r,c (1-based), requires --grid")
    p.add_argument("--box", help="x0,y0,x1,y1")
    p.add_argument("--thickness", type=int, default=2)
    p.add_argument("--highlight-thickness", type=int, default=4)
    p.add_argument("--no-labels", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("validate-maze", help="check a path against a text maze")
    p.add_argument("--maze", required=True)
    p.add_argument("--path", help="space separated r,c cells (1-based)")
    p.add_argument("--path-file", help="JSON list of cells or {critical_points: [...]}")
    p.add_argument("--critical", action="store_true", help="--path lists critical points")
    p.add_argument("--solve", action="store_true", help="print a BFS path instead")
    p.set_defaults(func=cmd_validate_maze)

    p = sub.add_parser("report", help="re-aggregate a saved report")
    p.add_argument("report")
    p.add_argument("--paired")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (BinVerifyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
