"""Training loop for the LSTM phase estimator.

Sliding windows over takes, AdamW with a triangular cyclic learning
rate (base 1e-7 up to a tuned maximum), a ramped monotonicity weight,
early stopping on validation MSE, and best-checkpoint restore. With a
fixed seed a run is bit-reproducible; training twice yields identical
loss curves and parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .features import take_features
from .losses import MONO_EPSILON, beta_schedule, total_loss_grad, loss_mse_grad, loss_mono_grad
from .lstm import LstmPhaseModel, LstmSpec
from .synth import Take


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults follow the shipped recipe."""

    window: int = 500
    stride: int | None = None          # default window // 2
    beta: float = 0.3
    ramp_epochs: int = 40
    epsilon: float = MONO_EPSILON
    max_epochs: int = 200
    patience: int = 50
    base_lr: float = 1e-7
    max_lr: float | None = None        # None -> short range test picks it
    batch_size: int = 16
    weight_decay: float = 1e-4
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError("window must be at least 2 steps")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.ramp_epochs < 1:
            raise ConfigError("ramp_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    beta_effective: float
    train_loss: float
    val_mse: float
    val_mono: float


@dataclass
class TrainResult:
    model: LstmPhaseModel
    log: list[EpochRecord]
    best_epoch: int
    max_lr: float

    def log_rows(self) -> list[dict]:
        return [
            {
                "epoch": r.epoch,
                "lr": r.lr,
                "beta_effective": r.beta_effective,
                "train_loss": r.train_loss,
                "val_mse": r.val_mse,
                "val_mono": r.val_mono,
            }
            for r in self.log
        ]


class AdamW:
    """Adam with decoupled weight decay over a dict of parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in params.items():
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[key] / bc1
            vhat = self.v[key] / bc2
            p -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p)


def make_windows(takes: Sequence[Take], window: int, stride: int):
    """Sliding fixed-length windows (features, phases) over each take.

    Takes shorter than the window contribute one full-take window; the
    tail of longer takes is covered by one extra end-aligned window.
    """
    xs, ys = [], []
    for take in takes:
        feats = take_features(take)
        phases = take.label_phases
        L = len(feats)
        if L < window:
            continue
        offsets = list(range(0, L - window + 1, stride))
        if offsets[-1] != L - window:
            offsets.append(L - window)
        for off in offsets:
            xs.append(feats[off: off + window])
            ys.append(phases[off: off + window])
    if not xs:
        raise ConfigError("no window fits any take; shrink the window")
    return np.stack(xs), np.stack(ys)


def _batch_loss_grad(model, x, phases, beta_eff, epsilon):
    """Mean loss over a batch plus parameter gradients."""
    y, cache = model.forward_cache(x)
    B = len(x)
    dy = np.zeros_like(y)
    total = 0.0
    for b in range(B):
        value, g = total_loss_grad(y[b], phases[b], beta_eff, epsilon)
        total += value
        dy[b] = g
    grads = model.backward(cache, dy / B)
    return total / B, grads


def _batch_eval(model, x, phases, epsilon):
    """Validation MSE and monotonicity terms, dropout off."""
    y = model.forward(x)
    mse = mono = 0.0
    for b in range(len(x)):
        mse += loss_mse_grad(y[b], phases[b])[0]
        mono += loss_mono_grad(y[b], epsilon)[0]
    return mse / len(x), mono / len(x)


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def lr_range_test(
    model: LstmPhaseModel,
    x: np.ndarray,
    phases: np.ndarray,
    cfg: TrainConfig,
    *,
    start: float = 1e-5,
    growth: float = 1.3,
    max_steps: int = 60,
) -> float:
    """Short exponential learning-rate sweep on a throwaway model copy.

    Tracks the smoothed loss while the rate grows; stops once it clearly
    leaves its minimum (or turns non-finite) and returns a fifth of the
    rate where the smoothed loss was lowest.
    """
    probe = model.copy()
    opt = AdamW(probe.params, weight_decay=0.0)
    rng = np.random.default_rng(cfg.seed + 101)
    lr = start
    smoothed = None
    best = math.inf
    best_lr = start
    n = len(x)
    batch = min(cfg.batch_size, n)
    for _ in range(max_steps):
        pick = rng.choice(n, size=batch, replace=False)
        loss, grads = _batch_loss_grad(probe, x[pick], phases[pick], 0.0, cfg.epsilon)
        if not math.isfinite(loss):
            break
        smoothed = loss if smoothed is None else 0.7 * smoothed + 0.3 * loss
        if smoothed < best:
            best = smoothed
            best_lr = lr
        elif smoothed > 2.0 * best:
            break
        if cfg.clip_norm:
            _clip(grads, cfg.clip_norm)
        opt.step(probe.params, grads, lr)
        lr *= growth
    return max(best_lr / 5.0, start)


def _cyclic_lr(step: int, cycle_steps: int, base: float, peak: float) -> float:
    pos = (step % cycle_steps) / cycle_steps
    tri = 1.0 - abs(2.0 * pos - 1.0)  # 0 -> 1 -> 0 over one cycle
    return base + (peak - base) * tri


def train(
    train_takes: Sequence[Take],
    val_takes: Sequence[Take],
    spec: LstmSpec,
    cfg: TrainConfig,
) -> TrainResult:
    """Fit a phase estimator; returns the best-validation model and log."""
    if not train_takes or not val_takes:
        raise ConfigError("need non-empty train and validation splits")
    stride = cfg.stride or max(cfg.window // 2, 1)
    x_train, y_train = make_windows(train_takes, cfg.window, stride)
    x_val, y_val = make_windows(val_takes, cfg.window, stride)

    model = LstmPhaseModel.init(spec, seed=cfg.seed)
    max_lr = cfg.max_lr if cfg.max_lr is not None else lr_range_test(model, x_train, y_train, cfg)
    opt = AdamW(model.params, weight_decay=cfg.weight_decay)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)
    dropout_rng = np.random.default_rng(cfg.seed + 2)

    n = len(x_train)
    batch = min(cfg.batch_size, n)
    steps_per_epoch = max(n // batch, 1)
    cycle_steps = max(2 * steps_per_epoch, 8)

    log: list[EpochRecord] = []
    best_val = math.inf
    best_params = model.copy().params
    best_epoch = 0
    global_step = 0
    for epoch in range(cfg.max_epochs):
        beta_eff = beta_schedule(epoch, cfg.beta, cfg.ramp_epochs)
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        lr = cfg.base_lr
        for s in range(steps_per_epoch):
            pick = order[s * batch: (s + 1) * batch]
            lr = _cyclic_lr(global_step, cycle_steps, cfg.base_lr, max_lr)
            y, cache = model.forward_cache(x_train[pick], dropout_rng=dropout_rng)
            dy = np.zeros_like(y)
            loss = 0.0
            for b in range(len(pick)):
                value, g = total_loss_grad(y[b], y_train[pick[b]], beta_eff, cfg.epsilon)
                loss += value
                dy[b] = g
            loss /= len(pick)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, step {s} (lr={lr:.3g})"
                )
            grads = model.backward(cache, dy / len(pick))
            if cfg.clip_norm:
                _clip(grads, cfg.clip_norm)
            opt.step(model.params, grads, lr)
            epoch_loss += loss
            global_step += 1
        val_mse, val_mono = _batch_eval(model, x_val, y_val, cfg.epsilon)
        log.append(EpochRecord(
            epoch=epoch, lr=lr, beta_effective=beta_eff,
            train_loss=epoch_loss / steps_per_epoch,
            val_mse=val_mse, val_mono=val_mono,
        ))
        if val_mse < best_val:
            best_val = val_mse
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break
    model.params = best_params
    return TrainResult(model=model, log=log, best_epoch=best_epoch, max_lr=max_lr)


def grad_check(
    model: LstmPhaseModel,
    x: np.ndarray,
    phases: np.ndarray,
    *,
    beta: float = 0.3,
    epsilon: float = MONO_EPSILON,
    fd_step: float = 1e-5,
) -> float:
    """Max relative error of analytic gradients vs central differences.

    Runs the full hand-built backpropagation for the combined loss on a
    small batch and compares every parameter's gradient against
    (L(p+h) - L(p-h)) / 2h. Intended for small models in double
    precision; dropout is disabled.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
        phases = np.asarray(phases)[None]
    B = len(x)

    def loss_at(m: LstmPhaseModel) -> float:
        y = m.forward(x)
        return sum(
            total_loss_grad(y[b], phases[b], beta, epsilon)[0] for b in range(B)
        ) / B

    y, cache = model.forward_cache(x)
    dy = np.zeros_like(y)
    for b in range(B):
        _, g = total_loss_grad(y[b], phases[b], beta, epsilon)
        dy[b] = g
    grads = model.backward(cache, dy / B)
    analytic = np.concatenate([grads[n].ravel() for n in model.param_names()])

    flat = model.flat_params()
    numeric = np.zeros_like(flat)
    probe = model.copy()
    for i in range(len(flat)):
        plus = flat.copy()
        plus[i] += fd_step
        probe.set_flat_params(plus)
        up = loss_at(probe)
        minus = flat.copy()
        minus[i] -= fd_step
        probe.set_flat_params(minus)
        down = loss_at(probe)
        numeric[i] = (up - down) / (2.0 * fd_step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
