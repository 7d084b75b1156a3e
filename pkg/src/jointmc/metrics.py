"""Segmentation and tracking scores against simulator ground truth."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from .potentials import iou

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class SegScore:
    precision: float
    recall: float
    f_measure: float
    extracted: int
    total: int

    @property
    def objects(self) -> str:
        return f"{self.extracted}/{self.total}"


def _f(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def seg_score(
    pred: Mapping[int, int],
    gt: Mapping[int, int],
    lengths: Mapping[int, int] | None = None,
    threshold: float = 0.75,
) -> SegScore:
    """Length-weighted P/R/F under a one-to-one cluster-to-object assignment.

    The assignment maximizes the summed per-object F-measure.  P and R are
    averaged over ground-truth objects (unmatched objects contribute 0) and
    F is the harmonic mean of the averages.
    """
    unknown = set(pred) ^ set(gt)
    if unknown:
        raise ValueError(f"trajectory ids not shared by prediction and truth: {sorted(unknown)[:5]}")
    if lengths is not None:
        missing = set(gt) - set(lengths)
        if missing:
            raise ValueError(f"no length for trajectory ids {sorted(missing)[:5]}")
    if not gt:
        return SegScore(0.0, 0.0, 0.0, 0, 0)
    objects = sorted(set(gt.values()))
    clusters = sorted(set(pred.values()))
    oi = {o: i for i, o in enumerate(objects)}
    ci = {c: i for i, c in enumerate(clusters)}
    inter = np.zeros((len(objects), len(clusters)))
    for tid, obj in gt.items():
        inter[oi[obj], ci[pred[tid]]] += 1 if lengths is None else lengths[tid]
    size_o = inter.sum(axis=1)
    size_c = inter.sum(axis=0)
    prec = inter / size_c[None, :]
    rec = inter / size_o[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        fm = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    rows, cols = linear_sum_assignment(-fm)
    p_obj = np.zeros(len(objects))
    r_obj = np.zeros(len(objects))
    f_obj = np.zeros(len(objects))
    for r, c in zip(rows, cols):
        p_obj[r], r_obj[r], f_obj[r] = prec[r, c], rec[r, c], fm[r, c]
    p, r = float(p_obj.mean()), float(r_obj.mean())
    return SegScore(p, r, _f(p, r), int((f_obj >= threshold).sum()), len(objects))


@dataclass(frozen=True)
class MotScore:
    recall: float
    precision: float
    far: float
    gt: int
    mt: int
    pt: int
    ml: int
    fp: int
    fn: int
    ids: int
    fm: int
    mota: float
    motp: float


MOT_FIELDS = ("Rcll", "Prcsn", "FAR", "GT", "MT", "PT", "ML", "FP", "FN", "IDs", "FM", "MOTA", "MOTP")
SEG_FIELDS = ("P", "R", "F", "O")


def clear_mot(
    gt_tracks: Mapping[int, Mapping[int, Box]],
    hyp_tracks: Mapping[int, Mapping[int, Box]],
    threshold: float = 0.5,
    n_frames: int | None = None,
) -> MotScore:
    """CLEAR MOT with IoU matching.

    Correspondences persist from the last frame they were made as long as
    the pair still overlaps by ``threshold``; remaining pairs are assigned by
    maximal total IoU.  A ground-truth object matched to a different
    hypothesis than its previous one counts as an identity switch.
    """
    frames = sorted({t for tr in gt_tracks.values() for t in tr} | {t for tr in hyp_tracks.values() for t in tr})
    last_match: dict[int, int] = {}
    tracked = {g: 0 for g in gt_tracks}
    was_tracked = {g: False for g in gt_tracks}
    prev_status = {g: False for g in gt_tracks}
    fp = fn = ids = fm = matches = 0
    iou_sum = 0.0
    total_gt = 0
    for t in frames:
        gts = sorted(g for g, tr in gt_tracks.items() if t in tr)
        hyps = sorted(h for h, tr in hyp_tracks.items() if t in tr)
        total_gt += len(gts)
        pairs: dict[int, int] = {}
        used: set[int] = set()
        for g in gts:
            h = last_match.get(g)
            if h is not None and h in hyp_tracks and t in hyp_tracks[h] and h not in used:
                v = iou(gt_tracks[g][t], hyp_tracks[h][t])
                if v >= threshold:
                    pairs[g] = h
                    used.add(h)
        free_g = [g for g in gts if g not in pairs]
        free_h = [h for h in hyps if h not in used]
        if free_g and free_h:
            sim = np.array([[iou(gt_tracks[g][t], hyp_tracks[h][t]) for h in free_h] for g in free_g])
            cost = np.where(sim >= threshold, 1.0 - sim, 1e6)
            for r, c in zip(*linear_sum_assignment(cost)):
                if sim[r, c] >= threshold:
                    pairs[free_g[r]] = free_h[c]
        for g in gts:
            h = pairs.get(g)
            status = h is not None
            if status:
                if g in last_match and last_match[g] != h:
                    ids += 1
                last_match[g] = h
                tracked[g] += 1
                matches += 1
                iou_sum += iou(gt_tracks[g][t], hyp_tracks[h][t])
                if was_tracked[g] and not prev_status[g]:
                    fm += 1
                was_tracked[g] = True
            else:
                fn += 1
            prev_status[g] = status
        fp += len(hyps) - len(pairs)

    mt = pt = ml = 0
    for g, tr in gt_tracks.items():
        ratio = tracked[g] / len(tr) if tr else 0.0
        if ratio >= 0.8:
            mt += 1
        elif ratio < 0.2:
            ml += 1
        else:
            pt += 1
    n_frames = n_frames if n_frames is not None else len(frames)
    return MotScore(
        recall=matches / total_gt if total_gt else 0.0,
        precision=matches / (matches + fp) if matches + fp else 0.0,
        far=fp / n_frames if n_frames else 0.0,
        gt=len(gt_tracks),
        mt=mt,
        pt=pt,
        ml=ml,
        fp=fp,
        fn=fn,
        ids=ids,
        fm=fm,
        mota=1.0 - (fp + fn + ids) / total_gt if total_gt else 0.0,
        motp=iou_sum / matches if matches else 0.0,
    )


def evaluate_outputs(truth, segmentation, hyp_boxes, trajectories) -> dict:
    lengths = {tr.id: len(tr) for tr in trajectories}
    seg = seg_score(segmentation, truth.trajectory_object, lengths)
    mot = clear_mot(truth.boxes, hyp_boxes)
    return {"seg": seg, "mot": mot}


def metric_row(metrics: dict) -> dict[str, object]:
    seg: SegScore = metrics["seg"]
    mot: MotScore = metrics["mot"]
    row: dict[str, object] = {"P": seg.precision, "R": seg.recall, "F": seg.f_measure, "O": seg.objects}
    row.update(zip(MOT_FIELDS, asdict(mot).values()))
    return row


def format_metrics_tsv(metrics: dict) -> str:
    row = metric_row(metrics)
    return "\t".join(row) + "\n" + "\t".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()) + "\n"


def format_metrics_json(metrics: dict) -> str:
    return json.dumps(metric_row(metrics), indent=2) + "\n"
