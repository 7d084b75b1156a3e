"""Pairwise cut probabilities and their mapping to multicut costs.

All probabilities here are probabilities that an edge is *cut*.  Costs
follow the minimization convention of :mod:`jointmc.graph`: a positive cost
penalizes cutting (attraction), a negative cost rewards it (repulsion).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

CLAMP_EPS = 1e-6

Box = tuple[float, float, float, float]  # (cx, cy, w, h)


class Direction(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TemplateGrid:
    """Object support on the unit bounding box, row-major, top row first."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("template must be a non-empty 2-D grid")
        if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
            raise ValueError("template values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def box(cls, height: int = 1, width: int = 1) -> "TemplateGrid":
        return cls(np.ones((height, width)))

    def flipped(self) -> "TemplateGrid":
        return TemplateGrid(self.values[:, ::-1])

    def symmetrized(self) -> "TemplateGrid":
        return TemplateGrid(0.5 * (self.values + self.values[:, ::-1]))

    def mass(self) -> float:
        """Mean support; multiply by box area for covered pixels."""
        return float(self.values.mean())

    def sample(self, u: float, v: float) -> float:
        """Nearest cell at normalized box coordinates; 0 outside the box."""
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            return 0.0
        h, w = self.values.shape
        col = min(int(u * w), w - 1)
        row = min(int(v * h), h - 1)
        return float(self.values[row, col])

    def __eq__(self, other):
        return isinstance(other, TemplateGrid) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class Trajectory:
    id: int
    start_frame: int
    points: tuple[tuple[float, float], ...]
    color: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 2:
            raise ValueError(f"trajectory {self.id}: needs at least 2 points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))

    @property
    def end_frame(self) -> int:
        """Last frame (inclusive)."""
        return self.start_frame + len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def alive(self, t: int) -> bool:
        return self.start_frame <= t <= self.end_frame

    def at(self, t: int) -> tuple[float, float]:
        if not self.alive(t):
            raise KeyError(f"trajectory {self.id} not alive at frame {t}")
        return self.points[t - self.start_frame]


@dataclass(frozen=True)
class Detection:
    id: int
    frame: int
    cx: float
    cy: float
    w: float
    h: float
    score: float = 1.0
    template: str | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"detection {self.id}: size must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection {self.id}: score outside [0, 1]")

    @property
    def box(self) -> Box:
        return (self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class Tracklet:
    detections: tuple[Detection, ...]
    direction: Direction = Direction.UNKNOWN

    LENGTH = 5

    def __post_init__(self):
        dets = tuple(self.detections)
        if len(dets) != self.LENGTH:
            raise ValueError(f"tracklet must hold exactly {self.LENGTH} detections")
        for a, b in zip(dets, dets[1:]):
            if b.frame != a.frame + 1:
                raise ValueError("tracklet frames must be consecutive")
        object.__setattr__(self, "detections", dets)

    @property
    def frames(self) -> range:
        return range(self.detections[0].frame, self.detections[-1].frame + 1)


@dataclass(frozen=True)
class TrajectoryAffinityParams:
    theta_bar0: float = -8.0
    theta0: float = -6.0
    theta1: float = 8.0
    theta2: float = 4.0
    theta3: float = 2.0


# -- scalar maps --------------------------------------------------------------

def logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def cut_cost(p: float, eps: float = CLAMP_EPS) -> float:
    """Cost ``log((1-p)/p)`` of cutting an edge with cut probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    p = min(max(p, eps), 1.0 - eps)
    return math.log1p(-p) - math.log(p)


# -- trajectory pairs ---------------------------------------------------------

def motion_scales(trajectories: Sequence[Trajectory]) -> dict[int, float]:
    """Median frame-to-frame displacement of trajectories alive at t and t+1."""
    per_frame: dict[int, list[float]] = {}
    for tr in trajectories:
        for k in range(len(tr.points) - 1):
            (x0, y0), (x1, y1) = tr.points[k], tr.points[k + 1]
            per_frame.setdefault(tr.start_frame + k, []).append(math.hypot(x1 - x0, y1 - y0))
    return {t: float(np.median(v)) for t, v in per_frame.items()}


def trajectory_distances(
    a: Trajectory,
    b: Trajectory,
    scales: Mapping[int, float] | None = None,
    diagonal: float = 1.0,
) -> tuple[float, float, float]:
    """Motion, color and spatial distance between two trajectories.

    Args:
        scales: median displacement per frame (see :func:`motion_scales`);
            missing frames count as 0.
        diagonal: image diagonal in pixels, normalizes spatial distance.

    Returns:
        ``(d_m, d_c, d_sp)``.
    """
    scales = scales or {}
    d_c = math.dist(a.color, b.color) / math.sqrt(3.0)
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    if lo > hi:
        # no common frame: distance between the temporally closest endpoints
        if a.end_frame < b.start_frame:
            pa, pb = a.points[-1], b.points[0]
        else:
            pa, pb = a.points[0], b.points[-1]
        return 0.0, d_c, math.dist(pa, pb) / diagonal
    d_m = 0.0
    for t in range(lo, hi):
        ax0, ay0 = a.at(t)
        ax1, ay1 = a.at(t + 1)
        bx0, by0 = b.at(t)
        bx1, by1 = b.at(t + 1)
        diff = math.hypot((ax1 - ax0) - (bx1 - bx0), (ay1 - ay0) - (by1 - by0))
        d_m = max(d_m, diff / (scales.get(t, 0.0) + 1.0))
    spatial = sum(math.dist(a.at(t), b.at(t)) for t in range(lo, hi + 1))
    return d_m, d_c, spatial / (hi - lo + 1) / diagonal


def trajectory_distance_matrices(
    trajectories: Sequence[Trajectory], diagonal: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All-pairs version of :func:`trajectory_distances` with scales from the same set."""
    n = len(trajectories)
    if n == 0:
        empty = np.zeros((0, 0))
        return empty, empty, empty
    t0 = min(tr.start_frame for tr in trajectories)
    t1 = max(tr.end_frame for tr in trajectories)
    span = t1 - t0 + 1
    pos = np.full((n, span, 2), np.nan)
    for i, tr in enumerate(trajectories):
        pos[i, tr.start_frame - t0 : tr.end_frame - t0 + 1] = tr.points
    alive = ~np.isnan(pos[:, :, 0])
    disp = pos[:, 1:] - pos[:, :-1]
    moving = ~np.isnan(disp[:, :, 0])
    scales = motion_scales(trajectories)
    denom = np.array([scales.get(t0 + k, 0.0) + 1.0 for k in range(span - 1)])
    colors = np.array([tr.color for tr in trajectories])
    starts = np.array([tr.start_frame for tr in trajectories])
    ends = np.array([tr.end_frame for tr in trajectories])
    first = np.array([tr.points[0] for tr in trajectories])
    last = np.array([tr.points[-1] for tr in trajectories])

    d_m = np.zeros((n, n))
    d_sp = np.zeros((n, n))
    d_c = np.linalg.norm(colors[:, None, :] - colors[None, :, :], axis=2) / math.sqrt(3.0)
    for i in range(n):
        both = moving[i][None, :] & moving
        diff = np.linalg.norm(disp[i][None] - disp, axis=2) / denom[None, :]
        d_m[i] = np.where(both, diff, 0.0).max(axis=1, initial=0.0)
        common = alive[i][None, :] & alive
        dist = np.where(common, np.linalg.norm(pos[i][None] - pos, axis=2), 0.0)
        count = common.sum(axis=1)
        overlap = dist.sum(axis=1) / np.maximum(count, 1)
        before = ends[i] < starts
        gap = np.where(
            before,
            np.linalg.norm(last[i][None] - first, axis=1),
            np.linalg.norm(first[i][None] - last, axis=1),
        )
        d_sp[i] = np.where(count > 0, overlap, gap) / diagonal
    return d_m, d_c, d_sp


def trajectory_pair_probability(
    d_m: float, d_c: float, d_sp: float, theta: TrajectoryAffinityParams = TrajectoryAffinityParams()
) -> float:
    z = max(
        theta.theta_bar0 + theta.theta1 * d_m + theta.theta2 * d_c + theta.theta3 * d_sp,
        theta.theta0 + theta.theta1 * d_m,
    )
    return logistic(z)


# -- detection pairs ----------------------------------------------------------

def iou(a: Box, b: Box) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw / 2, bx + bw / 2) - max(ax - aw / 2, bx - bw / 2)
    iy = min(ay + ah / 2, by + bh / 2) - max(ay - ah / 2, by - bh / 2)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    # rounding can push identical boxes a hair above 1
    return min(1.0, inter / (aw * ah + bw * bh - inter))


def detection_spatial_distance(a: Detection, b: Detection) -> float:
    return 2.0 * math.hypot((a.cx - b.cx) / (a.w + b.w), (a.cy - b.cy) / (a.h + b.h))


def overlap_probability(iou_value: float, d_sp: float) -> float:
    """Piecewise cut probability from box overlap and normalized distance."""
    if iou_value > 0.7:
        return 1.0 - 1.0 / (1.0 + math.exp(20.0 * (0.7 - iou_value)))
    if d_sp > 1.2:
        return 1.0 / (1.0 + math.exp(5.0 * (1.2 - d_sp)))
    return 0.5


def detection_pair_probability(a: Detection, b: Detection) -> float:
    if abs(a.frame - b.frame) > 1:
        raise ValueError(
            f"detections {a.id} and {b.id} are {abs(a.frame - b.frame)} frames apart (max 1)"
        )
    return overlap_probability(iou(a.box, b.box), detection_spatial_distance(a, b))


# -- detection / trajectory ---------------------------------------------------

def hl_probability(box: Box, point: tuple[float, float], template: TemplateGrid | None, sigma: float) -> float:
    """Cut probability between a box (with template) and an image point."""
    cx, cy, w, h = box
    x, y = point
    d_sp = 2.0 * math.hypot((cx - x) / w, (cy - y) / h)
    t_val = 0.0
    if template is not None:
        t_val = template.sample((x - (cx - w / 2)) / w, (y - (cy - h / 2)) / h)
    if t_val > 0.5:
        return 1.0 - t_val
    if d_sp > sigma:
        return 1.0
    return 0.5


def detection_trajectory_probability(
    d: Detection, tr: Trajectory, sigma: float, template: TemplateGrid | None = None
) -> float:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not tr.alive(d.frame):
        raise ValueError(f"trajectory {tr.id} not alive at frame {d.frame} of detection {d.id}")
    return hl_probability(d.box, tr.at(d.frame), template, sigma)


def tracklet_trajectory_cost(
    tk: Tracklet,
    tr: Trajectory,
    sigma: float,
    template: TemplateGrid | Mapping[int, TemplateGrid | None] | None = None,
    eps: float = CLAMP_EPS,
) -> float:
    """Summed cut cost over the tracklet boxes in frames the trajectory covers.

    ``template`` is either one template used for every box or a mapping from
    detection id to template.  Templates are mirrored for left-walking
    tracklets.
    """
    covered = [d for d in tk.detections if tr.alive(d.frame)]
    if not covered:
        raise ValueError(f"trajectory {tr.id} shares no frame with the tracklet")
    total = 0.0
    for d in covered:
        tmpl = template.get(d.id) if isinstance(template, Mapping) else template
        if tmpl is not None and tk.direction is Direction.LEFT:
            tmpl = tmpl.flipped()
        total += cut_cost(detection_trajectory_probability(d, tr, sigma, tmpl), eps)
    return total


# -- keypoint matching features ---------------------------------------------

MATCH_MAX_GAP = 3


@dataclass(frozen=True)
class MatchFeature:
    f1: float
    min_conf: float

    def vector(self) -> tuple[float, float, float, float, float]:
        return (self.f1, self.min_conf, self.f1 * self.min_conf, self.f1**2, self.min_conf**2)


def match_feature(a: Detection, b: Detection, keys_a: set, keys_b: set) -> MatchFeature:
    if abs(a.frame - b.frame) > MATCH_MAX_GAP:
        raise ValueError(
            f"detections {a.id} and {b.id} are more than {MATCH_MAX_GAP} frames apart"
        )
    union = len(keys_a | keys_b)
    f1 = len(keys_a & keys_b) / union if union else 0.0
    return MatchFeature(f1, min(a.score, b.score))


def match_probability(f: MatchFeature, weights: Sequence[float]) -> float:
    """``logistic(w0 + w . f)`` for a bias plus five feature weights."""
    if len(weights) != 6:
        raise ValueError("match weights need a bias and five coefficients")
    z = weights[0] + sum(w * x for w, x in zip(weights[1:], f.vector()))
    return logistic(z)


# -- templates ----------------------------------------------------------------

def pedestrian_template(height: int = 32, width: int = 16) -> TemplateGrid:
    """Soft upright-walker silhouette facing right (head, torso, striding legs)."""
    v, u = np.mgrid[0:height, 0:width]
    y = (v + 0.5) / height
    x = (u + 0.5) / width

    def blob(x0, y0, rx, ry):
        r = ((x - x0) / rx) ** 2 + ((y - y0) / ry) ** 2
        return np.clip(1.2 - r, 0.0, 1.0)

    head = blob(0.55, 0.10, 0.16, 0.08)
    torso = blob(0.52, 0.38, 0.30, 0.22)
    front_leg = blob(0.68, 0.76, 0.14, 0.24)
    back_leg = blob(0.36, 0.78, 0.12, 0.22)
    return TemplateGrid(np.maximum.reduce([head, torso, front_leg, back_leg]))


def format_template(t: TemplateGrid) -> str:
    h, w = t.shape
    rows = [" ".join(repr(float(x)) for x in row) for row in t.values]
    return f"{h} {w}\n" + "\n".join(rows) + "\n"


def parse_template(text: str) -> TemplateGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("line 1: empty template file")
    try:
        h, w = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise ValueError("line 1: expected 'H W'") from exc
    if len(lines) != h + 1:
        raise ValueError(f"template declares {h} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        vals = [float(x) for x in ln.split()]
        if len(vals) != w:
            raise ValueError(f"line {i}: expected {w} values, found {len(vals)}")
        rows.append(vals)
    return TemplateGrid(np.array(rows))
