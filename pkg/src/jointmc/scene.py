"""Synthetic scenes of moving rectangles with occlusion.

Point trajectories are sampled on a regular grid, follow their owner
object's motion and end when their point is covered by an object in front
or leaves the image; empty grid cells are re-seeded every frame.  Detections
are jittered ground-truth boxes with misses and false positives.

Random stream order (``numpy.random.PCG64`` seeded through
``SeedSequence(seed).spawn(2)``):

* stream 0, trajectory colors: one normal triple per trajectory, in
  creation order (only drawn when ``color_noise > 0``);
* stream 1, detections, per frame: for every object in spec order
  ``random()`` (miss), four ``normal()`` (cx, cy, w, h jitter) and one
  ``uniform()`` (score), drawn whether or not the detection is emitted;
  then ``random()`` for a false positive, followed by five ``uniform()``
  (cx, cy, w, h, score) only when one is emitted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .potentials import Detection, TemplateGrid, Trajectory, format_template, parse_template

BACKGROUND = 0
BOX_TEMPLATE_ID = "box"

TRAJ_HEADER = "jtms-traj 1"
DET_HEADER = "jtms-det 1"
GT_HEADER = "jtms-gt 1"


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    size: tuple[float, float]
    path: tuple[tuple[int, float, float], ...]  # (frame, cx, cy) keyframes
    depth: int = 1
    color: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        path = tuple((int(f), float(x), float(y)) for f, x, y in self.path)
        if self.id == BACKGROUND:
            raise ValueError("object id 0 is reserved for the background")
        if not path:
            raise ValueError(f"object {self.id}: empty path")
        if any(b[0] <= a[0] for a, b in zip(path, path[1:])):
            raise ValueError(f"object {self.id}: path frames must strictly increase")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"object {self.id}: size must be positive")
        if self.depth < 1:
            raise ValueError(f"object {self.id}: depth must be >= 1 (0 is the background)")
        object.__setattr__(self, "path", path)

    @property
    def first_frame(self) -> int:
        return self.path[0][0]

    @property
    def last_frame(self) -> int:
        return self.path[-1][0]

    def center(self, t: int) -> tuple[float, float] | None:
        if not self.first_frame <= t <= self.last_frame:
            return None
        for (f0, x0, y0), (f1, x1, y1) in zip(self.path, self.path[1:]):
            if f0 <= t <= f1:
                a = (t - f0) / (f1 - f0)
                return (x0 + a * (x1 - x0), y0 + a * (y1 - y0))
        _, x, y = self.path[0]
        return (x, y)

    def box(self, t: int) -> tuple[float, float, float, float] | None:
        c = self.center(t)
        return None if c is None else (c[0], c[1], self.size[0], self.size[1])


@dataclass(frozen=True)
class DetectionNoise:
    center_std: float = 0.0
    size_std: float = 0.0
    score_range: tuple[float, float] = (1.0, 1.0)
    miss_rate: float = 0.0
    fp_rate: float = 0.0

    def __post_init__(self):
        for name in ("miss_rate", "fp_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("score_range must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    n_frames: int
    objects: tuple[ObjectSpec, ...]
    step: int = 8
    noise: DetectionNoise = DetectionNoise()
    seed: int = 0
    background_color: tuple[float, float, float] = (0.5, 0.5, 0.5)
    color_noise: float = 0.0
    # "box": all-ones support; "visible": true visible mask; "none": no template
    template_mode: str = "box"
    template_size: tuple[int, int] = (16, 16)

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("sampling step must be >= 1")
        if self.width < 1 or self.height < 1 or self.n_frames < 1:
            raise ValueError("image size and frame count must be positive")
        if self.template_mode not in ("box", "visible", "none"):
            raise ValueError(f"unknown template mode {self.template_mode!r}")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        object.__setattr__(self, "objects", tuple(self.objects))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass
class SceneGroundTruth:
    trajectory_object: dict[int, int] = field(default_factory=dict)
    detection_object: dict[int, int] = field(default_factory=dict)
    # object id -> frame -> (cx, cy, w, h)
    boxes: dict[int, dict[int, tuple[float, float, float, float]]] = field(default_factory=dict)


@dataclass
class SceneBundle:
    width: int
    height: int
    n_frames: int
    trajectories: list[Trajectory]
    detections: list[Detection]
    templates: dict[str, TemplateGrid]
    truth: SceneGroundTruth


class _Scene:
    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.by_id = {o.id: o for o in spec.objects}
        # front-most first
        self.order = sorted(spec.objects, key=lambda o: (-o.depth, -o.id))

    def owner_at(self, x: float, y: float, t: int) -> int:
        for o in self.order:
            b = o.box(t)
            if b is None:
                continue
            cx, cy, w, h = b
            if cx - w / 2 <= x < cx + w / 2 and cy - h / 2 <= y < cy + h / 2:
                return o.id
        return BACKGROUND

    def center(self, owner: int, t: int):
        if owner == BACKGROUND:
            return (0.0, 0.0)
        return self.by_id[owner].center(t)

    def inside(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.spec.width and 0.0 <= y < self.spec.height


def _box_in_image(box, width, height) -> bool:
    cx, cy, w, h = box
    return cx + w / 2 > 0 and cx - w / 2 < width and cy + h / 2 > 0 and cy - h / 2 < height


def simulate(spec: SceneSpec) -> SceneBundle:
    scene = _Scene(spec)
    color_rng, det_rng = (np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(spec.seed).spawn(2))
    step = spec.step
    cols = spec.width // step
    rows = spec.height // step

    # live: [owner, offset_x, offset_y, start_frame, points]
    live: list[list] = []
    finished: list[list] = []
    created: list[list] = []
    for t in range(spec.n_frames):
        if t > 0:
            still = []
            for tr in live:
                owner, ox, oy = tr[0], tr[1], tr[2]
                c = scene.center(owner, t)
                if c is None:
                    finished.append(tr)
                    continue
                x, y = c[0] + ox, c[1] + oy
                if not scene.inside(x, y) or scene.owner_at(x, y, t) != owner:
                    finished.append(tr)
                    continue
                tr[4].append((x, y))
                still.append(tr)
            live = still
        occupied = {(int(p[4][-1][0] // step), int(p[4][-1][1] // step)) for p in live}
        for r in range(rows):
            for c_ in range(cols):
                if (c_, r) in occupied:
                    continue
                x, y = step / 2 + c_ * step, step / 2 + r * step
                owner = scene.owner_at(x, y, t)
                oc = scene.center(owner, t)
                tr = [owner, x - oc[0], y - oc[1], t, [(x, y)]]
                live.append(tr)
                created.append(tr)
    finished.extend(live)

    truth = SceneGroundTruth()
    trajectories = []
    colors = {o.id: o.color for o in spec.objects}
    colors[BACKGROUND] = spec.background_color
    for tr in created:
        # draw for every created trajectory so the stream does not depend on survival
        base = np.array(colors[tr[0]], dtype=float)
        if spec.color_noise > 0:
            base = np.clip(base + color_rng.normal(0.0, spec.color_noise, 3), 0.0, 1.0)
        if len(tr[4]) < 2:
            continue
        tid = len(trajectories)
        trajectories.append(Trajectory(tid, tr[3], tuple(tr[4]), tuple(float(v) for v in base)))
        truth.trajectory_object[tid] = tr[0]

    noise = spec.noise
    detections: list[Detection] = []
    templates: dict[str, TemplateGrid] = {}
    if spec.template_mode != "none":
        templates[BOX_TEMPLATE_ID] = TemplateGrid.box()
    lo, hi = noise.score_range
    for t in range(spec.n_frames):
        for o in spec.objects:
            miss = det_rng.random()
            jx, jy, jw, jh = det_rng.normal(0.0, 1.0, 4)
            score = det_rng.uniform(lo, hi)
            box = o.box(t)
            if box is None or not _box_in_image(box, spec.width, spec.height):
                continue
            truth.boxes.setdefault(o.id, {})[t] = box
            if miss < noise.miss_rate:
                continue
            cx, cy, w, h = box
            det_box = (
                cx + noise.center_std * jx,
                cy + noise.center_std * jy,
                max(1.0, w + noise.size_std * jw),
                max(1.0, h + noise.size_std * jh),
            )
            did = len(detections)
            tmpl_id = _template_for(spec, scene, o, box, t, did, templates)
            detections.append(Detection(did, t, *det_box, float(score), tmpl_id))
            truth.detection_object[did] = o.id
        if det_rng.random() < noise.fp_rate:
            fw = det_rng.uniform(0.1, 0.3) * spec.width
            fh = det_rng.uniform(0.1, 0.3) * spec.height
            fx = det_rng.uniform(fw / 2, spec.width - fw / 2)
            fy = det_rng.uniform(fh / 2, spec.height - fh / 2)
            fs = det_rng.uniform(lo, hi)
            did = len(detections)
            tmpl_id = None if spec.template_mode == "none" else BOX_TEMPLATE_ID
            detections.append(Detection(did, t, fx, fy, fw, fh, float(fs), tmpl_id))
    return SceneBundle(spec.width, spec.height, spec.n_frames, trajectories, detections, templates, truth)


def _template_for(spec, scene, obj, box, t, did, templates):
    if spec.template_mode == "none":
        return None
    if spec.template_mode == "box":
        return BOX_TEMPLATE_ID
    # visible mask of the object measured in its true box, to be laid over the detected box
    th, tw = spec.template_size
    cx, cy, w, h = box
    grid = np.zeros((th, tw))
    for r in range(th):
        y = cy - h / 2 + (r + 0.5) / th * h
        for c in range(tw):
            x = cx - w / 2 + (c + 0.5) / tw * w
            grid[r, c] = 1.0 if scene.owner_at(x, y, t) == obj.id else 0.0
    tid = f"m{did}"
    templates[tid] = TemplateGrid(grid)
    return tid


def crossing_benchmark(seed: int = 1, miss_rate: float = 0.15) -> SceneBundle:
    """Two rectangles crossing with partial occlusion; the rear one comes to rest.

    The seed perturbs vertical placement, speeds and timing, and drives the
    detection noise.
    """
    return simulate(crossing_spec(seed, miss_rate))


def crossing_spec(seed: int = 1, miss_rate: float = 0.15) -> SceneSpec:
    rng = np.random.default_rng([seed, 2016])
    dy_a, dy_b = rng.uniform(-3.0, 3.0, 2)
    pause = int(rng.integers(27, 34))
    stop_x = 64.0 + rng.uniform(-4.0, 4.0)
    enter = int(rng.integers(8, 13))
    front = ObjectSpec(
        1,
        (36.0, 28.0),
        ((enter, 14.0, 48.0 + dy_a), (59, 124.0 + rng.uniform(-4.0, 4.0), 48.0 + dy_a)),
        depth=2,
        color=(0.85, 0.2, 0.2),
    )
    rear = ObjectSpec(
        2,
        (32.0, 36.0),
        ((0, 140.0, 72.0 + dy_b), (pause, stop_x, 72.0 + dy_b), (59, stop_x, 72.0 + dy_b)),
        depth=1,
        color=(0.25, 0.35, 0.8),
    )
    noise = DetectionNoise(
        center_std=1.0, size_std=1.0, score_range=(0.6, 1.0), miss_rate=miss_rate, fp_rate=0.05
    )
    return SceneSpec(160, 120, 60, (front, rear), step=8, noise=noise, seed=seed, template_mode="visible")


# -- files --------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _header(tag: str, width: int, height: int, n_frames: int) -> str:
    return f"{tag} width={width} height={height} frames={n_frames}"


def _parse_header(line: str, tag: str, path) -> dict[str, int]:
    if not line.startswith(tag):
        raise ValueError(f"{path}: line 1: expected header {tag!r}")
    meta = {}
    for tok in line[len(tag):].split():
        key, _, val = tok.partition("=")
        meta[key] = int(val)
    return meta


def format_trajectories(trajs, width: int, height: int, n_frames: int) -> str:
    lines = [_header(TRAJ_HEADER, width, height, n_frames)]
    for tr in trajs:
        pts = " ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in tr.points)
        col = " ".join(_fmt(c) for c in tr.color)
        lines.append(f"{tr.id} {tr.start_frame} {pts} | {col}")
    return "\n".join(lines) + "\n"


def parse_trajectories(text: str, path="<trajectories>"):
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    meta = _parse_header(lines[0], TRAJ_HEADER, path)
    trajs = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            left, _, right = raw.partition("|")
            head = left.split()
            tid, t0 = int(head[0]), int(head[1])
            coords = [float(v) for v in head[2:]]
            if len(coords) % 2:
                raise ValueError("odd number of coordinates")
            color = tuple(float(v) for v in right.split())
            if len(color) != 3:
                raise ValueError("expected three color components")
            pts = tuple(zip(coords[::2], coords[1::2]))
            trajs.append(Trajectory(tid, t0, pts, color))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return trajs, meta


def format_detections(dets, width: int, height: int, n_frames: int) -> str:
    lines = [_header(DET_HEADER, width, height, n_frames)]
    for d in dets:
        tmpl = d.template if d.template is not None else "-"
        lines.append(
            f"{d.id} {d.frame} {_fmt(d.cx)} {_fmt(d.cy)} {_fmt(d.w)} {_fmt(d.h)} {_fmt(d.score)} {tmpl}"
        )
    return "\n".join(lines) + "\n"


def parse_detections(text: str, path="<detections>"):
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    meta = _parse_header(lines[0], DET_HEADER, path)
    dets = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        try:
            if len(parts) != 8:
                raise ValueError(f"expected 8 fields, found {len(parts)}")
            tmpl = None if parts[7] == "-" else parts[7]
            dets.append(
                Detection(int(parts[0]), int(parts[1]), *(float(v) for v in parts[2:7]), tmpl)
            )
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return dets, meta


def format_truth(truth: SceneGroundTruth) -> str:
    lines = [GT_HEADER]
    lines.extend(f"t {k} {v}" for k, v in sorted(truth.trajectory_object.items()))
    lines.extend(f"d {k} {v}" for k, v in sorted(truth.detection_object.items()))
    for obj in sorted(truth.boxes):
        for t, b in sorted(truth.boxes[obj].items()):
            lines.append(f"b {t} {obj} " + " ".join(_fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def parse_truth(text: str, path="<truth>") -> SceneGroundTruth:
    lines = text.splitlines()
    if not lines or lines[0].strip() != GT_HEADER:
        raise ValueError(f"{path}: line 1: expected header {GT_HEADER!r}")
    truth = SceneGroundTruth()
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "t":
                truth.trajectory_object[int(parts[1])] = int(parts[2])
            elif parts[0] == "d":
                truth.detection_object[int(parts[1])] = int(parts[2])
            elif parts[0] == "b" and len(parts) == 7:
                box = tuple(float(v) for v in parts[3:7])
                truth.boxes.setdefault(int(parts[2]), {})[int(parts[1])] = box
            else:
                raise ValueError(f"unexpected record {raw!r}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return truth


def write_bundle(bundle: SceneBundle, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    tdir = out / "templates"
    tdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": out / "trajectories.txt",
        "detections": out / "detections.txt",
        "truth": out / "truth.txt",
        "templates": tdir,
    }
    dims = (bundle.width, bundle.height, bundle.n_frames)
    paths["trajectories"].write_text(format_trajectories(bundle.trajectories, *dims))
    paths["detections"].write_text(format_detections(bundle.detections, *dims))
    paths["truth"].write_text(format_truth(bundle.truth))
    for tid, tmpl in sorted(bundle.templates.items()):
        (tdir / f"{tid}.txt").write_text(format_template(tmpl))
    return paths


def read_templates(directory: str | Path) -> dict[str, TemplateGrid]:
    directory = Path(directory)
    out = {}
    for p in sorted(directory.glob("*.txt")):
        try:
            out[p.stem] = parse_template(p.read_text())
        except ValueError as exc:
            raise ValueError(f"{p}: {exc}") from exc
    return out
