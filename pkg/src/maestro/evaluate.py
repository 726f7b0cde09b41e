"""Cross-validation experiment runner.

Leave-one-subject-out: each (test, validation) pair trains one model on
every other subject's takes, then scores the test subject's takes. The
deployment split is the degenerate pair (s, s): train on everyone else,
report on the withheld subject, and use its takes for validation too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .features import take_features
from .lstm import LstmSpec
from .metrics import EvalReport, TakeResult, mspe, mspe_by_region
from .score import Score
from .synth import Take
from .training import TrainConfig, TrainResult, train


def split_by_subject(takes: Sequence[Take]) -> dict[str, list[Take]]:
    groups: dict[str, list[Take]] = {}
    for take in takes:
        groups.setdefault(take.subject_id, []).append(take)
    return groups


def estimate_phases(model, take: Take) -> np.ndarray:
    """Streamed phase estimates of either estimator kind over a take."""
    from .phase import phase_from_sincos

    feats = take_features(take)
    state = model.begin_stream()
    if hasattr(model, "stream_phase"):
        return np.array([float(model.stream_phase(state, f)) for f in feats])
    out = np.empty(len(feats))
    for i, f in enumerate(feats):
        sc = model.stream_step(state, f)
        out[i] = phase_from_sincos(sc[0], sc[1])
    return out


def evaluate_takes(model, takes: Sequence[Take], score: Score) -> list[TakeResult]:
    rows = []
    for idx, take in enumerate(takes):
        est = estimate_phases(model, take)
        regular, fermata = mspe_by_region(take, est, score, wrapped=True)
        rows.append(TakeResult(
            subject=take.subject_id,
            take_index=idx,
            tempo_factor=take.tempo_factor,
            mspe_raw=mspe(take.label_phases, est, wrapped=False),
            mspe_wrapped=mspe(take.label_phases, est, wrapped=True),
            mspe_regular=regular,
            mspe_fermata=fermata,
        ))
    return rows


@dataclass
class LosoFold:
    test_subject: str
    val_subject: str
    result: TrainResult
    rows: list[TakeResult]


def run_loso(
    takes: Sequence[Take],
    pairs: Sequence[tuple[str, str]],
    score: Score,
    spec: LstmSpec,
    cfg: TrainConfig,
) -> tuple[EvalReport, list[LosoFold]]:
    """Train one model per (test, validation) pair and aggregate MSPE.

    A pair with test == validation is the deployment split: everything
    except that subject trains the model.
    """
    groups = split_by_subject(takes)
    for test_subject, val_subject in pairs:
        for subject in (test_subject, val_subject):
            if subject not in groups:
                raise ConfigError(f"unknown subject {subject!r}")
    report = EvalReport(config={
        "pairs": [list(p) for p in pairs],
        "train": cfg.__dict__ | {"stride": cfg.stride},
        "spec": spec.to_dict(),
    })
    folds = []
    for test_subject, val_subject in pairs:
        train_takes = [
            t for s, g in groups.items() if s not in (test_subject, val_subject)
            for t in g
        ]
        result = train(train_takes, groups[val_subject], spec, cfg)
        rows = evaluate_takes(result.model, groups[test_subject], score)
        folds.append(LosoFold(test_subject, val_subject, result, rows))
        report.rows.extend(rows)
    covered = {p[0] for p in pairs}
    report.config["full_coverage"] = sorted(covered) == sorted(groups)
    return report, folds
