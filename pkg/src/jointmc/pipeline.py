"""Assemble the joint graph from trajectories and detections, solve, extract tracks."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import graph as mc
from .graph import EdgeClass, JointGraph, Layer
from .potentials import (
    CLAMP_EPS,
    Detection,
    Direction,
    TemplateGrid,
    Tracklet,
    Trajectory,
    TrajectoryAffinityParams,
    cut_cost,
    detection_pair_probability,
    hl_probability,
    iou,
    match_feature,
    match_probability,
    pedestrian_template,
    trajectory_distance_matrices,
    trajectory_pair_probability,
)
from .solver import SolveParams, SolveReport, solve, solve_exact

MODES = ("detections", "tracklets")
HH_RULES = ("overlap", "match")
TEMPLATE_SOURCES = ("detection", "pedestrian", "pedestrian-undirected")
ABLATIONS = ("none", "no-high", "no-low", "no-hl")


@dataclass(frozen=True)
class PipelineConfig:
    score_threshold: float = 0.5
    min_mask_coverage: float = 0.20
    max_image_fraction: float = 0.60
    sigma_hl: float = 2.0
    hl_weight: float = 1.0
    ll_radius: float = 50.0
    theta: TrajectoryAffinityParams = TrajectoryAffinityParams()
    mode: str = "detections"
    hh_rule: str = "overlap"
    match_weights: tuple[float, ...] = (2.0, -6.0, 0.0, 0.0, 0.0, 0.0)
    template: str = "detection"
    clamp_eps: float = CLAMP_EPS
    ablation: str = "none"
    max_rounds: int = 100

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")
        if not 0.0 <= self.min_mask_coverage <= 1.0 or not 0.0 <= self.max_image_fraction <= 1.0:
            raise ValueError("mask filter fractions must lie in [0, 1]")
        if self.hl_weight <= 0:
            raise ValueError("hl_weight must be positive")
        if self.sigma_hl <= 0:
            raise ValueError("sigma_hl must be positive")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")
        for name, allowed in (
            ("mode", MODES),
            ("hh_rule", HH_RULES),
            ("template", TEMPLATE_SOURCES),
            ("ablation", ABLATIONS),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        if len(self.match_weights) != 6:
            raise ValueError("match_weights needs 6 values")


_THETA_KEYS = {f.name for f in dataclasses.fields(TrajectoryAffinityParams)}


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read flat ``key = value`` lines; ``#`` starts a comment."""
    base = base or PipelineConfig()
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    updates: dict = {}
    theta = dataclasses.asdict(base.theta)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        try:
            if key in _THETA_KEYS:
                theta[key] = float(value)
            elif key == "match_weights":
                updates[key] = tuple(float(v) for v in value.replace(",", " ").split())
            elif key in ("mode", "hh_rule", "template", "ablation"):
                updates[key] = value
            elif key == "max_rounds":
                updates[key] = int(value)
            elif key in fields and key != "theta":
                updates[key] = float(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return dataclasses.replace(base, theta=TrajectoryAffinityParams(**theta), **updates)


# -- detections -------------------------------------------------------------

def _template_of(d: Detection, templates: dict[str, TemplateGrid]) -> TemplateGrid | None:
    if d.template is None:
        return None
    try:
        return templates[d.template]
    except KeyError:
        raise ValueError(f"detection {d.id}: dangling template reference {d.template!r}") from None


def filter_detections(
    dets: Sequence[Detection],
    templates: dict[str, TemplateGrid],
    cfg: PipelineConfig,
    image_area: float,
) -> list[Detection]:
    """Drop low-score detections and those whose mask is too thin or too large."""
    kept = []
    for d in dets:
        if d.score < cfg.score_threshold:
            continue
        tmpl = _template_of(d, templates)
        if tmpl is not None:
            box_area = d.w * d.h
            covered = tmpl.mass() * box_area
            if covered < cfg.min_mask_coverage * box_area or covered > cfg.max_image_fraction * image_area:
                continue
        kept.append(d)
    return kept


def build_tracklets(dets: Sequence[Detection], min_iou: float = 0.3) -> list[Tracklet]:
    """Greedy 5-frame chains by maximal IoU, one attempt starting at every detection."""
    by_frame: dict[int, list[Detection]] = {}
    for d in dets:
        by_frame.setdefault(d.frame, []).append(d)
    out = []
    for start in dets:
        chain = [start]
        for _ in range(Tracklet.LENGTH - 1):
            cur = chain[-1]
            best = None
            best_iou = min_iou
            for cand in by_frame.get(cur.frame + 1, []):
                v = iou(cur.box, cand.box)
                if v > best_iou or (best is not None and v == best_iou and cand.id < best.id):
                    best, best_iou = cand, v
            if best is None:
                break
            chain.append(best)
        if len(chain) == Tracklet.LENGTH:
            dx = chain[-1].cx - chain[0].cx
            direction = Direction.RIGHT if dx > 1 else Direction.LEFT if dx < -1 else Direction.UNKNOWN
            out.append(Tracklet(tuple(chain), direction))
    return out


# -- assembly -----------------------------------------------------------------

@dataclass
class Assembly:
    graph: JointGraph
    # node i < len(high) holds the detections of high node i
    high: list[tuple[Detection, ...]]
    low: list[Trajectory]
    directions: list[Direction] = field(default_factory=list)

    def low_node(self, k: int) -> int:
        return len(self.high) + k


def _hh_edges(high, directions, cfg, low, eps):
    edges = []
    n = len(high)
    if cfg.mode == "tracklets":
        for i in range(n):
            fi = {d.frame: d for d in high[i]}
            for j in range(i + 1, n):
                fj = {d.frame: d for d in high[j]}
                common = sorted(set(fi) & set(fj))
                if common:
                    pairs = [(fi[t], fj[t]) for t in common]
                elif high[i][-1].frame + 1 == high[j][0].frame:
                    pairs = [(high[i][-1], high[j][0])]
                elif high[j][-1].frame + 1 == high[i][0].frame:
                    pairs = [(high[j][-1], high[i][0])]
                else:
                    continue
                ps = [detection_pair_probability(a, b) for a, b in pairs]
                if all(p == 0.5 for p in ps):
                    continue
                edges.append((i, j, EdgeClass.HH, sum(cut_cost(p, eps) for p in ps)))
        return edges

    dets = [h[0] for h in high]
    if cfg.hh_rule == "overlap":
        for i in range(n):
            for j in range(i + 1, n):
                if abs(dets[i].frame - dets[j].frame) > 1:
                    continue
                p = detection_pair_probability(dets[i], dets[j])
                if p != 0.5:
                    edges.append((i, j, EdgeClass.HH, cut_cost(p, eps)))
        return edges

    keys = [_keypoints(d, low) for d in dets]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(dets[i].frame - dets[j].frame) > 3:
                continue
            f = match_feature(dets[i], dets[j], keys[i], keys[j])
            edges.append((i, j, EdgeClass.HH, cut_cost(match_probability(f, cfg.match_weights), eps)))
    return edges


def _keypoints(d: Detection, trajectories: Sequence[Trajectory]) -> set[int]:
    """Trajectories through the box stand in for matched keypoints."""
    out = set()
    for tr in trajectories:
        if tr.alive(d.frame):
            x, y = tr.at(d.frame)
            if abs(x - d.cx) <= d.w / 2 and abs(y - d.cy) <= d.h / 2:
                out.add(tr.id)
    return out


def _template_for_box(d, direction, templates, cfg):
    if cfg.template == "detection":
        tmpl = _template_of(d, templates)
    elif cfg.template == "pedestrian":
        tmpl = pedestrian_template()
    else:
        tmpl = pedestrian_template().symmetrized()
    if tmpl is not None and direction is Direction.LEFT:
        tmpl = tmpl.flipped()
    return tmpl


def assemble_joint_graph(
    trajectories: Sequence[Trajectory],
    detections: Sequence[Detection],
    templates: dict[str, TemplateGrid],
    cfg: PipelineConfig,
    diagonal: float,
) -> Assembly:
    """Nodes: high entities first (input order), then trajectories (input order).

    Edges are emitted HH, then LL, then HL, each block in input order.
    """
    eps = cfg.clamp_eps
    trajectories = list(trajectories)
    if cfg.ablation == "no-high":
        high: list[tuple[Detection, ...]] = []
        directions: list[Direction] = []
    elif cfg.mode == "tracklets":
        tracklets = build_tracklets(detections)
        high = [tk.detections for tk in tracklets]
        directions = [tk.direction for tk in tracklets]
    else:
        high = [(d,) for d in detections]
        directions = [Direction.UNKNOWN] * len(high)
    for h in high:
        for d in h:
            _template_of(d, templates)

    nh = len(high)
    layers = [Layer.HIGH] * nh + [Layer.LOW] * len(trajectories)
    edges = _hh_edges(high, directions, cfg, trajectories, eps)

    if cfg.ablation != "no-low" and len(trajectories) > 1:
        d_m, d_c, d_sp = trajectory_distance_matrices(trajectories, diagonal)
        radius = cfg.ll_radius / diagonal
        n = len(trajectories)
        for i in range(n):
            for j in range(i + 1, n):
                if d_sp[i, j] > radius:
                    continue
                p = trajectory_pair_probability(
                    float(d_m[i, j]), float(d_c[i, j]), float(d_sp[i, j]), cfg.theta
                )
                edges.append((nh + i, nh + j, EdgeClass.LL, cut_cost(p, eps)))

    if cfg.ablation != "no-hl":
        for i, h in enumerate(high):
            frames = {d.frame: d for d in h}
            tmpls = {d.frame: _template_for_box(d, directions[i], templates, cfg) for d in h}
            for k, tr in enumerate(trajectories):
                ps = [
                    hl_probability(frames[t].box, tr.at(t), tmpls[t], cfg.sigma_hl)
                    for t in sorted(frames)
                    if tr.alive(t)
                ]
                if not ps or all(p == 0.5 for p in ps):
                    continue
                cost = cfg.hl_weight * sum(cut_cost(p, eps) for p in ps)
                edges.append((i, nh + k, EdgeClass.HL, cost))

    return Assembly(mc.build_graph(layers, edges), high, trajectories, directions)


# -- results ------------------------------------------------------------------

@dataclass
class TrackOutput:
    # component -> [(frame, detection id)] sorted by frame
    tracks: dict[int, list[tuple[int, int]]]
    # trajectory id -> component
    segmentation: dict[int, int]


def extract_tracks(asm: Assembly, d: mc.Decomposition) -> TrackOutput:
    """Per component and frame keep the member detection with the highest score."""
    d = mc.canonicalize(d)
    best: dict[int, dict[int, Detection]] = {}
    for i, h in enumerate(asm.high):
        comp = d.labels[i]
        slot = best.setdefault(comp, {})
        for det in h:
            cur = slot.get(det.frame)
            if cur is None or det.score > cur.score or (det.score == cur.score and det.id < cur.id):
                slot[det.frame] = det
    tracks = {
        comp: [(t, slot[t].id) for t in sorted(slot)] for comp, slot in sorted(best.items())
    }
    seg = {tr.id: d.labels[asm.low_node(k)] for k, tr in enumerate(asm.low)}
    return TrackOutput(tracks, seg)


def track_boxes(out: TrackOutput, detections: Sequence[Detection]) -> dict[int, dict[int, tuple]]:
    by_id = {d.id: d for d in detections}
    return {c: {t: by_id[i].box for t, i in seq} for c, seq in out.tracks.items()}


NODES_HEADER = "jtms-nodes 1"
TRACKS_HEADER = "jtms-tracks 1"
SEG_HEADER = "jtms-seg 1"


def format_nodes(asm: Assembly) -> str:
    lines = [NODES_HEADER]
    for i, h in enumerate(asm.high):
        lines.append(f"h {i} " + ",".join(str(d.id) for d in h))
    for k, tr in enumerate(asm.low):
        lines.append(f"l {asm.low_node(k)} {tr.id}")
    return "\n".join(lines) + "\n"


def parse_nodes(text: str) -> tuple[list[list[int]], list[int]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != NODES_HEADER:
        raise ValueError(f"line 1: expected header {NODES_HEADER!r}")
    high: list[list[int]] = []
    low: list[int] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "h" and len(parts) == 3:
            high.append([int(x) for x in parts[2].split(",")])
        elif parts[0] == "l" and len(parts) == 3:
            low.append(int(parts[2]))
        else:
            raise ValueError(f"line {lineno}: unexpected record {raw!r}")
    return high, low


def rebuild_assembly(
    g: JointGraph, nodes: tuple[list[list[int]], list[int]], trajectories, detections
) -> Assembly:
    """Reattach node records from a nodes file to their trajectories and detections."""
    high_ids, low_ids = nodes
    if len(high_ids) != g.n_high or len(low_ids) != g.n_low:
        raise ValueError(
            f"nodes file lists {len(high_ids)} high and {len(low_ids)} low nodes, "
            f"graph has {g.n_high} and {g.n_low}"
        )
    dets = {d.id: d for d in detections}
    trajs = {t.id: t for t in trajectories}
    try:
        high = [tuple(dets[i] for i in ids) for ids in high_ids]
    except KeyError as exc:
        raise ValueError(f"nodes file names unknown detection {exc.args[0]}") from None
    try:
        low = [trajs[i] for i in low_ids]
    except KeyError as exc:
        raise ValueError(f"nodes file names unknown trajectory {exc.args[0]}") from None
    return Assembly(g, high, low, [Direction.UNKNOWN] * len(high))


def format_tracks(out: TrackOutput) -> str:
    lines = [TRACKS_HEADER]
    for comp, seq in out.tracks.items():
        lines.extend(f"k {comp} {t} {det}" for t, det in seq)
    return "\n".join(lines) + "\n"


def parse_tracks(text: str) -> dict[int, list[tuple[int, int]]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACKS_HEADER:
        raise ValueError(f"line 1: expected header {TRACKS_HEADER!r}")
    tracks: dict[int, list[tuple[int, int]]] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] != "k" or len(parts) != 4:
            raise ValueError(f"line {lineno}: unexpected record {raw!r}")
        tracks.setdefault(int(parts[1]), []).append((int(parts[2]), int(parts[3])))
    return tracks


def format_segmentation(out: TrackOutput) -> str:
    lines = [SEG_HEADER]
    lines.extend(f"s {tid} {comp}" for tid, comp in sorted(out.segmentation.items()))
    return "\n".join(lines) + "\n"


def parse_segmentation(text: str) -> dict[int, int]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SEG_HEADER:
        raise ValueError(f"line 1: expected header {SEG_HEADER!r}")
    seg = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] != "s" or len(parts) != 3:
            raise ValueError(f"line {lineno}: unexpected record {raw!r}")
        seg[int(parts[1])] = int(parts[2])
    return seg


def format_overlay(asm: Assembly, d: mc.Decomposition, out: TrackOutput, detections) -> str:
    """Per frame: chosen boxes and trajectory points tagged with their component."""
    by_id = {det.id: det for det in detections}
    rows = []
    for comp, seq in out.tracks.items():
        for t, det_id in seq:
            b = by_id[det_id]
            rows.append((t, 0, comp, f"{t} box({comp}) {b.cx!r} {b.cy!r} {b.w!r} {b.h!r}"))
    for tr in asm.low:
        comp = out.segmentation[tr.id]
        for k, (x, y) in enumerate(tr.points):
            t = tr.start_frame + k
            rows.append((t, 1, tr.id, f"{t} point({comp}) {x!r} {y!r}"))
    rows.sort(key=lambda r: r[:3])
    return "".join(r[3] + "\n" for r in rows)


# -- end to end ---------------------------------------------------------------

@dataclass
class RunReport:
    objective: float
    n_nodes: int
    n_edges: int
    n_components: int
    n_tracks: int
    solve: SolveReport | None
    outputs: dict[str, Path]
    metrics: dict | None = None


def _read(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    return p.read_text()


def load_inputs(traj_path, det_path, template_dir=None):
    from .scene import parse_detections, parse_trajectories, read_templates

    trajs, meta = parse_trajectories(_read(traj_path), traj_path)
    dets, dmeta = parse_detections(_read(det_path), det_path)
    templates = {}
    if template_dir is not None:
        tdir = Path(template_dir)
        if not tdir.is_dir():
            raise FileNotFoundError(f"template directory not found: {tdir}")
        templates = read_templates(tdir)
    width = meta.get("width") or dmeta.get("width")
    height = meta.get("height") or dmeta.get("height")
    if not width or not height:
        raise ValueError(f"{traj_path}: header lacks image width/height")
    return trajs, dets, templates, (width, height)


def prepare(trajs, dets, templates, size, cfg: PipelineConfig):
    width, height = size
    kept = filter_detections(dets, templates, cfg, width * height)
    return assemble_joint_graph(trajs, kept, templates, cfg, math.hypot(width, height)), kept


def solve_assembly(asm: Assembly, cfg: PipelineConfig, exact: bool = False):
    if exact:
        d, value = solve_exact(asm.graph)
        return d, SolveReport(value, 0, 0, value)
    return solve(asm.graph, SolveParams(max_outer_rounds=cfg.max_rounds))


def run(
    cfg: PipelineConfig,
    traj_path,
    det_path,
    out_dir,
    template_dir=None,
    truth_path=None,
    exact: bool = False,
) -> RunReport:
    from .metrics import evaluate_outputs, format_metrics_tsv
    from .scene import parse_truth

    trajs, dets, templates, size = load_inputs(traj_path, det_path, template_dir)
    truth = parse_truth(_read(truth_path), truth_path) if truth_path is not None else None
    asm, kept = prepare(trajs, dets, templates, size, cfg)
    d, rep = solve_assembly(asm, cfg, exact)
    out = extract_tracks(asm, d)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "graph": (out_dir / "graph.txt", mc.dump_graph(asm.graph)),
        "nodes": (out_dir / "nodes.txt", format_nodes(asm)),
        "solution": (out_dir / "solution.txt", mc.dump_solution(d)),
        "tracks": (out_dir / "tracks.txt", format_tracks(out)),
        "segmentation": (out_dir / "segmentation.txt", format_segmentation(out)),
        "overlay": (out_dir / "overlay.txt", format_overlay(asm, d, out, kept)),
        "report": (out_dir / "report.txt", rep.line() + "\n"),
    }
    metrics = None
    if truth is not None:
        metrics = evaluate_outputs(truth, out.segmentation, track_boxes(out, kept), trajs)
        files["metrics"] = (out_dir / "metrics.tsv", format_metrics_tsv(metrics))
    for path, text in files.values():
        path.write_text(text)
    return RunReport(
        mc.objective(asm.graph, d),
        asm.graph.n_nodes,
        asm.graph.n_edges,
        d.n_components,
        len(out.tracks),
        rep,
        {k: v[0] for k, v in files.items()},
        metrics,
    )
