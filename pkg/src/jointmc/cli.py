"""Command line entry point: ``jointmc <subcommand> ...``.

Exit status is 0 on success, 1 when an input is missing, malformed or
violates a guard (such as the exact solver's node limit), and 2 on usage
errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import graph as mc
from . import pipeline as pl
from .metrics import evaluate_outputs, format_metrics_json, format_metrics_tsv
from .scene import crossing_benchmark, parse_detections, parse_trajectories, parse_truth, write_bundle


class CliError(Exception):
    pass


def _text(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {p}")
    return p.read_text()


def _parsed(path, parser):
    try:
        return parser(_text(path))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _config(args) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig()
    if getattr(args, "config", None):
        cfg = _parsed(args.config, pl.parse_config)
    if getattr(args, "ablation", None):
        cfg = dataclasses.replace(cfg, ablation=args.ablation)
    if getattr(args, "max_rounds", None) is not None:
        cfg = dataclasses.replace(cfg, max_rounds=args.max_rounds)
    return cfg


def _inputs(args):
    try:
        return pl.load_inputs(args.trajectories, args.detections, args.templates)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None


def cmd_simulate(args) -> None:
    bundle = crossing_benchmark(args.seed, args.miss_rate)
    paths = write_bundle(bundle, args.out)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def cmd_build_graph(args) -> None:
    cfg = _config(args)
    trajs, dets, templates, size = _inputs(args)
    asm, _ = pl.prepare(trajs, dets, templates, size, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph.txt").write_text(mc.dump_graph(asm.graph))
    (out / "nodes.txt").write_text(pl.format_nodes(asm))
    g = asm.graph
    print(
        f"nodes={g.n_nodes} high={g.n_high} low={g.n_low} edges={g.n_edges} "
        f"hh={g.count(mc.EdgeClass.HH)} ll={g.count(mc.EdgeClass.LL)} hl={g.count(mc.EdgeClass.HL)}"
    )


def cmd_solve(args) -> None:
    g = _parsed(args.graph, mc.load_graph)
    cfg = _config(args)
    asm = pl.Assembly(g, [], [], [])
    d, rep = pl.solve_assembly(asm, cfg, args.exact)
    Path(args.out).write_text(mc.dump_solution(d))
    print(rep.line())


def _tracks_from_files(args):
    g = _parsed(args.graph, mc.load_graph)
    nodes = _parsed(args.nodes, pl.parse_nodes)
    d = _parsed(args.solution, mc.load_solution)
    if len(d) != g.n_nodes:
        raise CliError(f"{args.solution}: labels {len(d)} nodes, graph has {g.n_nodes}")
    trajs, dets, _, _ = _inputs(args)
    asm = pl.rebuild_assembly(g, nodes, trajs, dets)
    return asm, d, pl.extract_tracks(asm, d), dets


def cmd_track(args) -> None:
    asm, d, out, dets = _tracks_from_files(args)
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    (target / "tracks.txt").write_text(pl.format_tracks(out))
    (target / "segmentation.txt").write_text(pl.format_segmentation(out))
    (target / "overlay.txt").write_text(pl.format_overlay(asm, d, out, dets))
    print(f"components={d.n_components} tracks={len(out.tracks)}")


def cmd_evaluate(args) -> None:
    # the scene parsers put the path into their own messages
    truth = parse_truth(_text(args.truth), args.truth)
    trajs, _ = parse_trajectories(_text(args.trajectories), args.trajectories)
    dets, _ = parse_detections(_text(args.detections), args.detections)
    seg = _parsed(args.segmentation, pl.parse_segmentation)
    tracks = _parsed(args.tracks, pl.parse_tracks)
    boxes = pl.track_boxes(pl.TrackOutput(tracks, seg), dets)
    metrics = evaluate_outputs(truth, seg, boxes, trajs)
    fmt = format_metrics_json if args.format == "json" else format_metrics_tsv
    sys.stdout.write(fmt(metrics))


def cmd_run(args) -> None:
    cfg = _config(args)
    out = Path(args.out)
    if args.seed is not None:
        if args.trajectories or args.detections:
            raise CliError("--seed simulates its own inputs; drop --trajectories/--detections")
        paths = write_bundle(crossing_benchmark(args.seed), out / "scene")
        traj, det, tmpl, truth = paths["trajectories"], paths["detections"], paths["templates"], paths["truth"]
    else:
        if not (args.trajectories and args.detections):
            raise CliError("run needs --trajectories and --detections, or --seed")
        traj, det, tmpl, truth = args.trajectories, args.detections, args.templates, args.truth
    try:
        rep = pl.run(cfg, traj, det, out, tmpl, truth, args.exact)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    print(rep.solve.line())
    print(f"nodes={rep.n_nodes} edges={rep.n_edges} components={rep.n_components} tracks={rep.n_tracks}")
    if rep.metrics is not None:
        sys.stdout.write(format_metrics_tsv(rep.metrics))


def _add_inputs(p, required=True):
    p.add_argument("--trajectories", required=required, help="trajectory file")
    p.add_argument("--detections", required=required, help="detection file")
    p.add_argument("--templates", help="directory of template files")


def _add_config(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--ablation", choices=pl.ABLATIONS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointmc", description="Joint multicut over trajectories and detections.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write the crossing scene to a directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--miss-rate", type=float, default=0.15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-graph", help="assemble the joint graph")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--out", required=True, help="output directory for graph.txt and nodes.txt")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("solve", help="solve a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="solution file")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--exact", action="store_true", help="exhaustive search (small graphs only)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("track", help="extract tracks and segmentation from a solution")
    p.add_argument("--graph", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--solution", required=True)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="score tracks and segmentation against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--segmentation", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="assemble, solve, extract and (with truth) evaluate")
    _add_inputs(p, required=False)
    p.add_argument("--truth")
    p.add_argument("--seed", type=int, help="simulate the crossing scene with this seed as input")
    _add_config(p)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
