"""Command-line entry point.

    maestro gen-corpus   synthesize a labelled take corpus
    maestro train        fit the LSTM phase estimator (or Kalman baseline)
    maestro eval-loso    leave-one-subject-out cross-validation
    maestro simulate     run a stored take through the full control loop
    maestro metrics      recompute session metrics from a log
    maestro serve        start the live TCP session server
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import checkpoint
from .controller import ControllerConfig
from .errors import MaestroError
from .evaluate import run_loso, split_by_subject
from .kalman import fit as kalman_fit
from .lstm import LstmSpec
from .metrics import beat_bar_distance, pct_of_bar, speed_stability
from .playback import SessionLog, run_session
from .score import Score, Timebase, demo_score
from .service import DEFAULT_SPEED_LIMITS, ServerConfig, SessionServer, replay_file
from .synth import generate_corpus, load_corpus, read_take, table5_plan
from .training import TrainConfig, train


def _load_score(path: str | None) -> Score:
    if path is None or path == "demo":
        return demo_score()
    return Score.load(path)


def _controller_config(args) -> ControllerConfig:
    if getattr(args, "controller_config", None):
        cfg = ControllerConfig.load(args.controller_config)
        if args.strategy:
            cfg = ControllerConfig.from_dict(cfg.to_dict() | {"strategy": args.strategy})
        return cfg
    return ControllerConfig(strategy=args.strategy or "median")


def cmd_gen_corpus(args) -> int:
    score = _load_score(args.score)
    if args.table5:
        plan = table5_plan()
    else:
        tempos = [float(t) for t in args.tempos.split(",")]
        plan = [
            {"subject": f"s{i + 1:02d}",
             "hand_bias": "left" if (i + 1) % 3 == 0 else "right",
             "tempos": tempos}
            for i in range(args.subjects)
        ]
    manifest = generate_corpus(
        score, args.out, plan, seed=args.seed,
        rate=Timebase(args.rate_hz, "k" if args.rate_hz <= 30 else "t"),
        noise_std=args.noise_std, tempo_jitter=args.tempo_jitter,
    )
    print(f"wrote {len(manifest['takes'])} takes to {args.out}")
    return 0


def cmd_train(args) -> int:
    manifest, takes = load_corpus(args.corpus)
    groups = split_by_subject(takes)
    if args.val_subject not in groups:
        print(f"unknown validation subject {args.val_subject!r}; corpus has {sorted(groups)}",
              file=sys.stderr)
        return 2
    holdout = {args.val_subject} | set(args.exclude_subject or [])
    train_takes = [t for t in takes if t.subject_id not in holdout]
    val_takes = groups[args.val_subject]
    if args.estimator == "kalman":
        model = kalman_fit(train_takes)
        checkpoint.save_kalman(args.out, model, extra={"corpus": os.path.abspath(args.corpus)})
        print(f"kalman baseline fitted (omega={model.omega:.4f}) -> {args.out}")
        return 0
    spec = LstmSpec(
        input_dim=takes[0].keypoints.feature_dim,
        hidden=args.hidden, layers=args.layers,
        head_hidden=args.hidden, dropout=args.dropout,
    )
    cfg = TrainConfig(
        window=args.window, batch_size=args.batch_size, beta=args.beta,
        ramp_epochs=args.ramp_epochs, max_epochs=args.epochs,
        patience=args.patience, max_lr=args.max_lr, seed=args.seed,
    )
    result = train(train_takes, val_takes, spec, cfg)
    checkpoint.save_lstm(args.out, result.model, extra={
        "best_epoch": result.best_epoch, "max_lr": result.max_lr,
        "val_subject": args.val_subject,
    })
    log_path = args.log or (os.path.splitext(args.out)[0] + "_train_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,beta_effective,train_loss,val_mse,val_mono\n")
        for row in result.log_rows():
            fh.write("{epoch},{lr!r},{beta_effective!r},{train_loss!r},{val_mse!r},{val_mono!r}\n".format(**row))
    best = min(r.val_mse for r in result.log)
    print(f"trained {len(result.log)} epochs (best {result.best_epoch}, val MSE {best:.4f}, "
          f"max_lr {result.max_lr:.2e}) -> {args.out}; log -> {log_path}")
    return 0


def cmd_eval_loso(args) -> int:
    manifest, takes = load_corpus(args.corpus)
    score = Score.from_dict(manifest["score"])
    pairs = []
    for chunk in args.pairs.split(","):
        test, _, val = chunk.partition(":")
        pairs.append((test.strip(), (val or test).strip()))
    spec = LstmSpec(
        input_dim=takes[0].keypoints.feature_dim,
        hidden=args.hidden, layers=args.layers, head_hidden=args.hidden,
        dropout=args.dropout,
    )
    cfg = TrainConfig(window=args.window, batch_size=args.batch_size,
                      max_epochs=args.epochs, patience=args.patience,
                      max_lr=args.max_lr, seed=args.seed)
    report, _ = run_loso(takes, pairs, score, spec, cfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "loso_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    table = report.format_table()
    with open(os.path.join(args.out, "loso_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def cmd_simulate(args) -> int:
    score = _load_score(args.score)
    cfg = _controller_config(args)
    take = read_take(args.take)
    if args.estimator == "oracle":
        phases = take.label_phases
        if take.rate.rate_hz != cfg.rate_hz:
            stride = int(round(take.rate.rate_hz / cfg.rate_hz))
            phases = phases[::stride]
        log = run_session(phases, score, cfg, speed_limits=DEFAULT_SPEED_LIMITS)
    else:
        model = checkpoint.load_estimator(args.checkpoint)
        log = replay_file(args.take, model, score, cfg)
    log.to_csv(args.out, score)
    summary = log.summary(score)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"log -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    log = SessionLog.from_csv(args.log)
    score = _load_score(args.score)
    out = {}
    try:
        mean, std = beat_bar_distance(log)
        out["beat_bar_distance_mean_s"] = mean
        out["beat_bar_distance_std_s"] = std
        out["pct_of_bar"] = pct_of_bar(log)
    except MaestroError as exc:
        out["beat_metrics_error"] = str(exc)
    try:
        out["speed_std_after_fermatas"] = speed_stability(log, score, args.after_bar)
    except MaestroError as exc:
        out["speed_metrics_error"] = str(exc)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    score = _load_score(args.score)
    cfg = _controller_config(args)
    model = checkpoint.load_estimator(args.checkpoint)
    if hasattr(model, "spec"):
        kind = f"lstm (hidden {model.spec.hidden})"
    else:
        kind = f"kalman (omega {model.omega:.3f})"
    limits = None if args.no_speed_clamp else DEFAULT_SPEED_LIMITS
    server = SessionServer(
        ServerConfig(host=args.bind, port=args.port, speed_limits=limits),
        lambda: model, score, cfg,
    )
    print(f"serving {kind} on {args.bind}:{server.bound_port} "
          f"(score {score.label}, strategy {cfg.strategy.value})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maestro", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="synthesize a labelled take corpus")
    p.add_argument("--score", default="demo", help="score JSON path or 'demo'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=6)
    p.add_argument("--tempos", default="1.0,0.8,1.2")
    p.add_argument("--table5", action="store_true",
                   help="12-subject / 130-take reference layout")
    p.add_argument("--rate-hz", type=float, default=20.0)
    p.add_argument("--noise-std", type=float, default=0.004)
    p.add_argument("--tempo-jitter", type=float, default=0.03)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="fit a phase estimator on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--estimator", choices=["lstm", "kalman"], default="lstm")
    p.add_argument("--val-subject", required=True)
    p.add_argument("--exclude-subject", action="append",
                   help="held-out test subject(s), excluded from training")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--window", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--ramp-epochs", type=int, default=40)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="training log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-loso", help="leave-one-subject-out evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True,
                   help="comma list of test:val subject pairs, e.g. s01:s02,s02:s03")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--window", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_loso)

    p = sub.add_parser("simulate", help="drive the control loop from a stored take")
    p.add_argument("--take", required=True)
    p.add_argument("--score", default="demo")
    p.add_argument("--estimator", choices=["oracle", "checkpoint"], default="oracle")
    p.add_argument("--checkpoint", help="estimator checkpoint (lstm or kalman)")
    p.add_argument("--strategy", choices=["raw", "median", "average"])
    p.add_argument("--controller-config", help="controller config JSON")
    p.add_argument("--out", required=True, help="session log CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="recompute metrics from a session log")
    p.add_argument("--log", required=True)
    p.add_argument("--score", default="demo")
    p.add_argument("--after-bar", type=int, default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="start the live session server")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7752)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--score", default="demo")
    p.add_argument("--strategy", choices=["raw", "median", "average"])
    p.add_argument("--controller-config")
    p.add_argument("--no-speed-clamp", action="store_true")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MaestroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
