#!/usr/bin/env python3
"""Train the deployment model: every subject except one goes into
training, the withheld subject drives validation and early stopping.
Writes the checkpoint the live server loads.
"""

import argparse
import subprocess
import sys


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--val-subject", default="s08",
                    help="the single withheld subject")
    ap.add_argument("--out", default="runs/deploy.ckpt")
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--window", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cmd = [
        sys.executable, "-m", "maestro.cli", "train",
        "--corpus", args.corpus, "--out", args.out,
        "--val-subject", args.val_subject,
        "--hidden", str(args.hidden), "--window", str(args.window),
        "--seed", str(args.seed),
    ]
    raise SystemExit(subprocess.call(cmd))


if __name__ == "__main__":
    main()
