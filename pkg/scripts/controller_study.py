#!/usr/bin/env python3
"""Compare the three speed strategies on jittered oracle sessions.

Feeds ground-truth phase streams of synthetic takes through the full
controller + playback loop and reports, per strategy: the standard
deviation of the speed factor after the last fermata, the beat-to-bar
distance, and the distance as a percentage of the mean conducted bar,
in plot-ready CSV.
"""

import argparse
import csv
import os

import numpy as np

from maestro.controller import ControllerConfig, Strategy
from maestro.metrics import beat_bar_distance, pct_of_bar, speed_stability
from maestro.playback import run_session
from maestro.score import CONTROL_20HZ, demo_score
from maestro.synth import ConductorStyle, generate_take


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/controller_study")
    ap.add_argument("--sessions", type=int, default=20)
    ap.add_argument("--tempo", type=float, default=0.8)
    ap.add_argument("--jitter", type=float, default=0.03)
    ap.add_argument("--seed", type=int, default=500)
    args = ap.parse_args()

    score = demo_score()
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i in range(args.sessions):
        style = ConductorStyle(noise_std=0.0, tempo_jitter=args.jitter, seed=args.seed + i)
        take = generate_take(score, style, args.tempo, CONTROL_20HZ)
        for strategy in Strategy:
            log = run_session(take.label_phases, score, ControllerConfig(strategy=strategy))
            mean_d, std_d = beat_bar_distance(log)
            rows.append({
                "session": i,
                "strategy": strategy.value,
                "speed_std": speed_stability(log, score),
                "beat_bar_mean_s": mean_d,
                "beat_bar_std_s": std_d,
                "pct_of_bar": pct_of_bar(log),
                "finished": log.finished_step is not None,
            })
    table = os.path.join(args.out, "sessions.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"per-session table -> {table}")
    print(f"{'strategy':9s} {'std(s)':>8s} {'beat-bar':>9s} {'% of bar':>9s}")
    for strategy in Strategy:
        sel = [r for r in rows if r["strategy"] == strategy.value]
        print(f"{strategy.value:9s} "
              f"{np.mean([r['speed_std'] for r in sel]):8.4f} "
              f"{np.mean([r['beat_bar_mean_s'] for r in sel]):8.3f}s "
              f"{np.mean([r['pct_of_bar'] for r in sel]):8.1f}%")


if __name__ == "__main__":
    main()
