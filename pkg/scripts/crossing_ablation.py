"""Compare the joint graph against its ablations on seeded crossing scenes.

    python3 scripts/crossing_ablation.py --seeds 1 2 3 4 5 --miss-rate 0.15
"""
import argparse
import dataclasses
import time

import numpy as np

from jointmc.metrics import evaluate_outputs
from jointmc.pipeline import ABLATIONS, PipelineConfig, extract_tracks, prepare, solve_assembly, track_boxes
from jointmc.scene import crossing_benchmark


def evaluate(bundle, cfg):
    t0 = time.perf_counter()
    asm, kept = prepare(bundle.trajectories, bundle.detections, bundle.templates, (bundle.width, bundle.height), cfg)
    d, rep = solve_assembly(asm, cfg)
    out = extract_tracks(asm, d)
    m = evaluate_outputs(bundle.truth, out.segmentation, track_boxes(out, kept), bundle.trajectories)
    return {
        "F": m["seg"].f_measure,
        "O": m["seg"].objects,
        "MOTA": m["mot"].mota,
        "IDs": m["mot"].ids,
        "FM": m["mot"].fm,
        "k": d.n_components,
        "edges": asm.graph.n_edges,
        "objective": rep.objective,
        "seconds": time.perf_counter() - t0,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--miss-rate", type=float, default=0.15)
    ap.add_argument("--arms", nargs="+", default=list(ABLATIONS), choices=ABLATIONS)
    ap.add_argument("--hl-weight", type=float, default=1.0)
    args = ap.parse_args()

    base = PipelineConfig(hl_weight=args.hl_weight)
    cols = ("F", "O", "MOTA", "IDs", "FM", "k", "edges", "seconds")
    print("seed\tarm\t" + "\t".join(cols))
    summary = {arm: [] for arm in args.arms}
    for seed in args.seeds:
        bundle = crossing_benchmark(seed, args.miss_rate)
        for arm in args.arms:
            row = evaluate(bundle, dataclasses.replace(base, ablation=arm))
            summary[arm].append(row)
            cells = [f"{row[c]:.3f}" if isinstance(row[c], float) else str(row[c]) for c in cols]
            print(f"{seed}\t{arm}\t" + "\t".join(cells))
    print()
    print("arm\tmean F\tmean MOTA\ttotal IDs")
    for arm, rows in summary.items():
        print(
            f"{arm}\t{np.mean([r['F'] for r in rows]):.3f}\t"
            f"{np.mean([r['MOTA'] for r in rows]):.3f}\t{sum(r['IDs'] for r in rows)}"
        )


if __name__ == "__main__":
    main()
