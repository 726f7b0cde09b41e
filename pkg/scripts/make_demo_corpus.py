#!/usr/bin/env python3
"""Build the reference synthetic corpus: 12 subjects, 130 takes on the
122-bar demo score, shaped like the recording-distribution table
(including the off-tempo takes and the three first-25-bars takes).

Roughly 100 MB; pass --bars to truncate the score for a quick corpus.
"""

import argparse

from maestro.score import demo_score
from maestro.synth import generate_corpus, table5_plan, truncate_score


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/corpus-demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bars", type=int, default=None,
                    help="truncate the score to its first N music bars")
    ap.add_argument("--noise-std", type=float, default=0.004)
    args = ap.parse_args()

    score = demo_score()
    if args.bars:
        score = truncate_score(score, args.bars)
    manifest = generate_corpus(score, args.out, table5_plan(), seed=args.seed,
                               noise_std=args.noise_std)
    takes = manifest["takes"]
    print(f"{len(takes)} takes -> {args.out}")
    print(f"  truncated: {sum(t['truncated'] for t in takes)}")
    by_tempo = {}
    for t in takes:
        by_tempo[t["tempo_factor"]] = by_tempo.get(t["tempo_factor"], 0) + 1
    for tempo in sorted(by_tempo):
        print(f"  tempo {tempo}: {by_tempo[tempo]}")


if __name__ == "__main__":
    main()
