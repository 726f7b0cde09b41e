"""Acceptance gate: every shipped guarantee at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to get one printed
pass/fail line per criterion. The expensive fixtures (synthetic corpus,
two LSTM trainings, Kalman fits) are session-scoped and shared.
"""

import math
import time

import numpy as np
import pytest

from maestro import kalman
from maestro.controller import ControllerConfig, Strategy
from maestro.evaluate import estimate_phases
from maestro.features import take_features
from maestro.losses import (
    MONO_EPSILON,
    loss_mono,
    loss_mse,
    targets_from_phases,
    total_loss,
)
from maestro.lstm import LstmPhaseModel, LstmSpec
from maestro.metrics import mspe, mspe_by_region, pct_of_bar, speed_stability
from maestro.phase import TWO_PI, phase_diff
from maestro.playback import PlaybackState, SessionLog, advance, apply_command, run_session
from maestro.score import CONTROL_20HZ, Score
from maestro.service import Session, replay_file
from maestro.synth import (
    ConductorStyle,
    generate_corpus,
    generate_take,
    load_corpus,
    write_take,
)
from maestro.training import TrainConfig, grad_check, train
import maestro.controller as ctl

RATE = 20.0
QUANT = 1.0 / (RATE * 0.7)  # one-control-step speed quantization at 0.7 s bars


def _line(name: str, passed: bool, detail: str):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def desk_score() -> Score:
    durations = [2.0] + [0.7] * 15
    for b in (2, 4):
        durations[b] = 2.725
    return Score(bar_count=16, bar_durations=tuple(durations),
                 fermata_bars=frozenset({2, 4}), label="desk-16")


def wide_score() -> Score:
    durations = [2.0] + [0.7] * 29
    for b in (2, 4):
        durations[b] = 2.725
    return Score(bar_count=30, bar_durations=tuple(durations),
                 fermata_bars=frozenset({2, 4}), label="wide-30")


@pytest.fixture(scope="session")
def demo122() -> Score:
    from maestro.score import demo_score

    return demo_score()


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """6 subjects x 3 tempos, 20 Hz tracker-noise regime."""
    out = tmp_path_factory.mktemp("corpus")
    score = desk_score()
    plan = [
        {"subject": f"s{i:02d}", "hand_bias": "right", "tempos": [1.0, 0.8, 1.2]}
        for i in range(1, 7)
    ]
    generate_corpus(score, out, plan, seed=11, noise_std=0.012, tempo_jitter=0.03)
    manifest, takes = load_corpus(out)
    return score, out, takes


def desk_split(takes):
    train_takes = [t for t in takes if t.subject_id not in ("s05", "s06")]
    val_takes = [t for t in takes if t.subject_id == "s05"]
    test_takes = [t for t in takes if t.subject_id == "s06"]
    return train_takes, val_takes, test_takes


DESK_SPEC = LstmSpec(input_dim=54, hidden=48, layers=3, head_hidden=48, dropout=0.35)


def desk_train_cfg(beta: float) -> TrainConfig:
    return TrainConfig(window=200, stride=100, batch_size=16, max_epochs=150,
                       patience=50, beta=beta, ramp_epochs=40, seed=7)


@pytest.fixture(scope="session")
def desk_model(desk_corpus):
    score, _, takes = desk_corpus
    train_takes, val_takes, _ = desk_split(takes)
    t0 = time.time()
    result = train(train_takes, val_takes, DESK_SPEC, desk_train_cfg(beta=0.3))
    return result.model, time.time() - t0


@pytest.fixture(scope="session")
def desk_model_high_beta(desk_corpus):
    score, _, takes = desk_corpus
    train_takes, val_takes, _ = desk_split(takes)
    t0 = time.time()
    result = train(train_takes, val_takes, DESK_SPEC, desk_train_cfg(beta=1.0))
    return result.model, time.time() - t0


@pytest.fixture(scope="session")
def desk_kalman(desk_corpus):
    _, _, takes = desk_corpus
    train_takes, _, _ = desk_split(takes)
    return kalman.fit(train_takes)


def steady_take(score, tempo, seed=0, jitter=0.0, noise=0.0):
    return generate_take(
        score,
        ConductorStyle(noise_std=noise, tempo_jitter=jitter, seed=seed),
        tempo, CONTROL_20HZ,
    )


# --------------------------------------------------------------------------
# criterion 1: gradient correctness
# --------------------------------------------------------------------------

def test_c01_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(12)
    spec = LstmSpec(input_dim=6, hidden=7, layers=3, head_hidden=5, dropout=0.0)
    model = LstmPhaseModel.init(spec, seed=2)
    x = rng.normal(size=(2, 9, 6))
    phases = rng.uniform(0, TWO_PI, size=(2, 9))
    errs = {
        "mse": grad_check(model, x, phases, beta=0.0),
        "mono": grad_check(model, x, phases, beta=1e6),
        "combined": grad_check(model, x, phases, beta=0.3),
    }
    elapsed = time.time() - t0
    worst = max(errs.values())
    _line(
        "gradient-correctness",
        worst < 1e-3 and elapsed < 60,
        f"max rel err {worst:.2e} (mse {errs['mse']:.1e}, mono {errs['mono']:.1e}, "
        f"combined {errs['combined']:.1e}) in {elapsed:.1f}s",
    )


# --------------------------------------------------------------------------
# criterion 2: loss unit values vs brute-force oracles
# --------------------------------------------------------------------------

def test_c02_loss_unit_values():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(2, 40))
        pred = rng.normal(size=(T, 2))
        phases = rng.uniform(0, TWO_PI, size=T)
        # brute-force oracles, plain python
        mse_oracle = sum(
            (pred[t][0] - math.sin(phases[t])) ** 2 + (pred[t][1] - math.cos(phases[t])) ** 2
            for t in range(T)
        ) / (2 * T)
        phis = [math.atan2(p[0], p[1]) % TWO_PI for p in pred]
        mono_oracle = sum(
            -d for d in (
                (phis[t] - phis[t - 1] + math.pi) % TWO_PI - math.pi for t in range(1, T)
            ) if d < MONO_EPSILON
        ) / T
        worst = max(worst, abs(loss_mse(pred, phases) - mse_oracle))
        worst = max(worst, abs(loss_mono(pred) - mono_oracle))
    worked = abs(loss_mono(targets_from_phases(np.array([0.1, 0.3, 0.2]))) - 0.1 / 3.0)
    worked = max(worked, abs(loss_mse(np.array([[0.0, 0.0]]), np.array([0.0])) - 0.5))
    _line(
        "loss-unit-values",
        worst < 1e-12 and worked < 1e-12,
        f"100 random cases max |err| {worst:.1e}; worked values off by {worked:.1e}",
    )


# --------------------------------------------------------------------------
# criterion 3: batch/stream equivalence
# --------------------------------------------------------------------------

def test_c03_batch_stream_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(50):
        spec = LstmSpec(
            input_dim=int(rng.integers(2, 12)),
            hidden=int(rng.integers(3, 16)),
            layers=int(rng.integers(1, 4)),
            head_hidden=int(rng.integers(2, 10)),
            dropout=0.0,
        )
        model = LstmPhaseModel.init(spec, seed=trial)
        x = rng.normal(size=(int(rng.integers(2, 30)), spec.input_dim))
        batch = model.forward(x)
        state = model.begin_stream()
        streamed = np.stack([model.stream_step(state, xi) for xi in x])
        worst = max(worst, float(np.max(np.abs(streamed - batch))))
    _line("batch-stream-equivalence", worst < 1e-9,
          f"50 random model/sequence pairs, max |batch - stream| {worst:.2e}")


# --------------------------------------------------------------------------
# criterion 4: controller oracle convergence
# --------------------------------------------------------------------------

def test_c04_controller_oracle_convergence(demo122):
    t0 = time.time()
    g = 0.8
    take = steady_take(demo122, g, seed=1)
    last_fermata = max(demo122.fermata_bars)
    details = []
    ok = True
    for strategy, bound, skip in ((Strategy.RAW, QUANT + 1e-12, 1),
                                  (Strategy.MEDIAN, 0.05, 3),
                                  (Strategy.AVERAGE, 0.05, 3)):
        log = run_session(take.label_phases, demo122, ControllerConfig(strategy=strategy))
        cmds = [r.s_cmd for r in log.rows if r.s_cmd is not None and r.bar > last_fermata]
        tail = cmds[skip:]
        worst = max(abs(s - g) for s in tail)
        details.append(f"{strategy.value} worst |s-g|={worst:.4f} (bound {bound:.4f})")
        ok = ok and worst <= bound and len(tail) > 50
    elapsed = time.time() - t0
    ok = ok and elapsed < 5.0
    _line("controller-oracle-convergence", ok, "; ".join(details) + f"; {elapsed:.1f}s")


# --------------------------------------------------------------------------
# criteria 5+6: stability ordering and beat-bar alignment on jittered
# oracle sessions
# --------------------------------------------------------------------------

@pytest.fixture(scope="session")
def jittered_sessions(demo122):
    logs = {s: [] for s in Strategy}
    for i in range(20):
        take = steady_take(demo122, 0.8, seed=500 + i, jitter=0.03)
        for strategy in Strategy:
            logs[strategy].append(
                run_session(take.label_phases, demo122, ControllerConfig(strategy=strategy))
            )
    return logs


def test_c05_stability_ordering(demo122, jittered_sessions):
    means = {}
    for strategy, logs in jittered_sessions.items():
        means[strategy] = float(np.mean([speed_stability(log, demo122) for log in logs]))
    primary = means[Strategy.MEDIAN] < means[Strategy.RAW]
    secondary = means[Strategy.MEDIAN] <= means[Strategy.AVERAGE]
    _line(
        "stability-ordering",
        primary,
        f"mean std(s): median {means[Strategy.MEDIAN]:.4f} < raw {means[Strategy.RAW]:.4f}: "
        f"{primary}; median <= average ({means[Strategy.AVERAGE]:.4f}): {secondary}",
    )


def test_c06_beat_bar_alignment(jittered_sessions):
    ok = True
    details = []
    for strategy, logs in jittered_sessions.items():
        pcts = [pct_of_bar(log) for log in logs]
        mean_pct = float(np.mean(pcts))
        ok = ok and mean_pct < 25.0 and max(pcts) < 50.0
        details.append(f"{strategy.value} mean {mean_pct:.1f}% max {max(pcts):.1f}%")
    _line("beat-bar-alignment", ok, "; ".join(details))


# --------------------------------------------------------------------------
# criterion 7: fermata semantics, zero tolerance
# --------------------------------------------------------------------------

def test_c07_fermata_semantics(demo122):
    starts = demo122.bar_starts
    # scripted: run into the first fermata bar end without a command
    state = PlaybackState(playhead=float(starts[2]), bar=2, halted=False, speed=1.0)
    advance(state, demo122, 60.0)
    halt_exact = state.halted and state.playhead == starts[3]
    # resume jumps exactly onto the next bar line
    apply_command(state, demo122, ctl.SpeedCommand(speed=0.9, step=100, target_bar=3, resume=True))
    jump_exact = (not state.halted) and state.playhead == starts[3] and state.bar == 3
    # early resume from inside the hold bar
    state2 = PlaybackState(playhead=float(starts[4]) + 0.4, bar=4, halted=False, speed=1.0)
    apply_command(state2, demo122, ctl.SpeedCommand(speed=1.1, step=200, target_bar=5, resume=True))
    early_exact = state2.playhead == starts[5] and state2.bar == 5
    # full oracle session: every halt and every resume row sits exactly on a boundary
    take = steady_take(demo122, 1.0, seed=2)
    log = run_session(take.label_phases, demo122, ControllerConfig(strategy=Strategy.RAW))
    session_ok = True
    prev_halted = False
    for row in log.rows:
        if row.halted and not prev_halted:
            session_ok = session_ok and row.playhead in starts
        if row.resume:
            session_ok = session_ok and row.playhead in starts
        prev_halted = row.halted
    ok = halt_exact and jump_exact and early_exact and session_ok
    _line(
        "fermata-semantics", ok,
        f"halt exact: {halt_exact}, resume exact: {jump_exact}, "
        f"early jump exact: {early_exact}, session boundaries exact: {session_ok}",
    )


# --------------------------------------------------------------------------
# criterion 8: Kalman contrast on a noiseless corpus
# --------------------------------------------------------------------------

def test_c08_kalman_contrast():
    t0 = time.time()
    score = wide_score()
    base = dict(noise_std=0.0, tempo_jitter=0.0)
    fit_styles = [
        ConductorStyle(seed=1, amplitude=0.8, smoothness=0.2, upbeat_sharpness=0.8, **base),
        ConductorStyle(seed=2, amplitude=1.3, smoothness=0.9, upbeat_sharpness=1.6, **base),
        ConductorStyle(seed=3, amplitude=1.05, smoothness=0.5, upbeat_sharpness=1.2,
                       hold_scale=1.2, **base),
    ]
    model = kalman.fit([generate_take(score, st, 1.0, CONTROL_20HZ) for st in fit_styles])
    test_style = ConductorStyle(seed=9, amplitude=1.1, smoothness=0.6, upbeat_sharpness=1.0, **base)
    take = generate_take(score, test_style, 1.0, CONTROL_20HZ)
    est = kalman.filter_take(model, take)
    regular, fermata = mspe_by_region(take, est, score, wrapped=True)
    elapsed = time.time() - t0
    ok = regular < 0.1 and fermata > regular and elapsed < 30
    _line(
        "kalman-contrast", ok,
        f"regular {regular:.4f} rad^2 (< 0.1), fermata {fermata:.4f} (> regular), {elapsed:.1f}s",
    )


# --------------------------------------------------------------------------
# criterion 9: LSTM desk-scale learning
# --------------------------------------------------------------------------

def test_c09_lstm_desk_scale(desk_corpus, desk_model, desk_model_high_beta, desk_kalman):
    score, _, takes = desk_corpus
    _, _, test_takes = desk_split(takes)
    model, train_seconds = desk_model
    _, train_seconds_hb = desk_model_high_beta
    lstm_reg, lstm_fer, kal_fer = [], [], []
    for take in test_takes:
        est = estimate_phases(model, take)
        r, f = mspe_by_region(take, est, score, wrapped=True)
        lstm_reg.append(r)
        lstm_fer.append(f)
        kest = kalman.filter_take(desk_kalman, take)
        kal_fer.append(mspe_by_region(take, kest, score, wrapped=True)[1])
    reg = float(np.mean(lstm_reg))
    fer = float(np.mean(lstm_fer))
    kfer = float(np.mean(kal_fer))
    total_minutes = (train_seconds + train_seconds_hb) / 60.0
    ok = reg < 0.3 and fer < kfer and total_minutes < 30
    _line(
        "lstm-desk-scale", ok,
        f"held-out regular MSPE {reg:.4f} rad^2 (< 0.3); "
        f"LSTM fermata {fer:.4f} < Kalman fermata {kfer:.4f}; "
        f"training {total_minutes:.1f} min (< 30)",
    )


def test_c09b_streamed_phase_monotone(desk_corpus, desk_model):
    # 20 Hz stream of a steady take: within-bar monotone on >= 95% of
    # regular-bar steps
    score, _, takes = desk_corpus
    _, _, test_takes = desk_split(takes)
    model, _ = desk_model
    take = test_takes[0]
    est = estimate_phases(model, take)
    regular = ~np.isin(take.label_bars, list(score.hold_bars))
    diffs = phase_diff(est[1:], est[:-1])
    frac = float(np.mean((diffs >= -1e-7)[regular[1:]]))
    _line("streamed-phase-monotone", frac >= 0.95,
          f"{100 * frac:.1f}% of regular-bar steps monotone (>= 95%)")


# --------------------------------------------------------------------------
# criterion 10: high-beta upbeat response
# --------------------------------------------------------------------------

def _resume_delays(model, takes, cap=40):
    """Eq.-style upbeat detection delay at each fermata resume: steps
    from the silent-upbeat onset until the estimated phase first jumps
    by more than the upbeat threshold. Missed detections count as cap."""
    delays = []
    for take in takes:
        est = estimate_phases(model, take)
        diffs = np.diff(est)
        rate = take.rate.rate_hz
        holds = dict(zip(take.hold_bars.tolist(), zip(take.hold_begins, take.upbeat_times)))
        for bar, (hold_begin, onset) in holds.items():
            if bar == 0:
                continue  # the lead-in is not a fermata resume
            onset_step = int(np.floor(onset * rate))
            start = max(int(np.floor(hold_begin * rate)) + 2, 1)
            hit = None
            for k in range(start, min(onset_step + cap, len(diffs))):
                if diffs[k] > 0.5:
                    hit = k + 1
                    break
            delays.append((hit - 1 - onset_step) if hit is not None else cap)
    return delays


def test_c10_high_beta_upbeat_response(desk_corpus, desk_model, desk_model_high_beta):
    score, _, takes = desk_corpus
    _, _, test_takes = desk_split(takes)
    low, _ = desk_model
    high, _ = desk_model_high_beta
    d_low = _resume_delays(low, test_takes)
    d_high = _resume_delays(high, test_takes)
    mean_low = float(np.mean(d_low))
    mean_high = float(np.mean(d_high))
    _line(
        "high-beta-upbeat-response",
        mean_high < mean_low,
        f"mean resume delay: beta=1.0 {mean_high:.2f} steps < beta=0.3 {mean_low:.2f} steps "
        f"({d_high} vs {d_low})",
    )


# --------------------------------------------------------------------------
# criterion 11: determinism
# --------------------------------------------------------------------------

def test_c11_determinism(tmp_path, desk_kalman):
    score = desk_score()
    plan = [{"subject": "s01", "hand_bias": "right", "tempos": [1.0, 0.8]}]
    d1, d2 = tmp_path / "c1", tmp_path / "c2"
    generate_corpus(score, d1, plan, seed=9)
    generate_corpus(score, d2, plan, seed=9)
    names = sorted(p.name for p in d1.iterdir())
    corpus_ok = all((d1 / n).read_bytes() == (d2 / n).read_bytes() for n in names)

    _, takes = load_corpus(d1)
    spec = LstmSpec(input_dim=54, hidden=8, layers=2, head_hidden=8, dropout=0.2)
    cfg = TrainConfig(window=40, stride=20, batch_size=8, max_epochs=6,
                      patience=10, max_lr=1e-3, seed=4)
    a = train(takes[:1], takes[1:], spec, cfg)
    b = train(takes[:1], takes[1:], spec, cfg)
    train_ok = (
        [r.train_loss for r in a.log] == [r.train_loss for r in b.log]
        and np.array_equal(a.model.flat_params(), b.model.flat_params())
    )

    take_path = tmp_path / "take.take"
    write_take(takes[0], take_path)
    cfg_ctl = ControllerConfig(strategy=Strategy.MEDIAN)
    p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    replay_file(take_path, desk_kalman, score, cfg_ctl).to_csv(p1, score)
    replay_file(take_path, desk_kalman, score, cfg_ctl).to_csv(p2, score)
    replay_ok = p1.read_bytes() == p2.read_bytes()

    _line("determinism", corpus_ok and train_ok and replay_ok,
          f"corpus bytes: {corpus_ok}, training: {train_ok}, replay bytes: {replay_ok}")


# --------------------------------------------------------------------------
# criterion 12: service path equivalence and latency
# --------------------------------------------------------------------------

def test_c12_service_path_equivalence(tmp_path, desk_corpus, desk_model):
    score, _, takes = desk_corpus
    _, _, test_takes = desk_split(takes)
    model, _ = desk_model
    take = test_takes[0]
    take_path = tmp_path / "take.take"
    write_take(take, take_path)
    cfg = ControllerConfig(strategy=Strategy.MEDIAN)
    service_log = replay_file(take_path, model, score, cfg)
    phases = estimate_phases(model, take)
    oracle_log = run_session(phases, score, cfg, speed_limits=(0.25, 4.0))
    rows_equal = (len(service_log.rows) == len(oracle_log.rows)
                  and all(a == b for a, b in zip(service_log.rows, oracle_log.rows)))

    session = Session(model, score, cfg, keypoints=take.keypoints)
    times = []
    for frame in take.pos[:200]:
        t0 = time.perf_counter()
        session.process_pose(frame)
        times.append(time.perf_counter() - t0)
    worst_ms = 1e3 * float(np.percentile(times, 99))
    mean_ms = 1e3 * float(np.mean(times))
    ok = rows_equal and worst_ms <= 10.0
    _line(
        "service-path-equivalence", ok,
        f"replay == run_session record-for-record over {len(service_log.rows)} rows: {rows_equal}; "
        f"latency mean {mean_ms:.2f} ms, p99 {worst_ms:.2f} ms (<= 10 ms)",
    )
