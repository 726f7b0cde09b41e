"""Model checkpoints: one container format for both estimator kinds."""

from __future__ import annotations

import numpy as np

from .containers import read_container, write_container
from .errors import ContainerFormatError
from .kalman import KalmanPhaseModel
from .lstm import LstmPhaseModel, LstmSpec

CHECKPOINT_VERSION = 1


def save_lstm(path, model: LstmPhaseModel, extra: dict | None = None) -> None:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
    }
    if extra:
        meta["extra"] = extra
    write_container(path, "lstm-checkpoint", meta, {"params": model.flat_params()})


def load_lstm(path) -> LstmPhaseModel:
    _, meta, arrays = read_container(path, expected_kind="lstm-checkpoint")
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ContainerFormatError(f"unsupported checkpoint version {meta.get('format_version')}")
    spec = LstmSpec.from_dict(meta["spec"])
    model = LstmPhaseModel.init(spec, seed=0)
    model.set_flat_params(arrays["params"])
    return model


def save_kalman(path, model: KalmanPhaseModel, extra: dict | None = None) -> None:
    meta = {"format_version": CHECKPOINT_VERSION}
    if extra:
        meta["extra"] = extra
    write_container(path, "kalman-checkpoint", meta, {
        "omega": np.array([model.omega]),
        "obs_matrix": model.obs_matrix,
        "obs_offset": model.obs_offset,
        "obs_cov": model.obs_cov,
        "process_cov": model.process_cov,
        "init_cov": model.init_cov,
    })


def load_kalman(path) -> KalmanPhaseModel:
    _, meta, arrays = read_container(path, expected_kind="kalman-checkpoint")
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ContainerFormatError(f"unsupported checkpoint version {meta.get('format_version')}")
    return KalmanPhaseModel(
        omega=float(arrays["omega"][0]),
        obs_matrix=arrays["obs_matrix"],
        obs_offset=arrays["obs_offset"],
        obs_cov=arrays["obs_cov"],
        process_cov=arrays["process_cov"],
        init_cov=arrays["init_cov"],
    )


def load_estimator(path):
    """Load either estimator kind by inspecting the container."""
    kind, _, _ = read_container(path)
    if kind == "lstm-checkpoint":
        return load_lstm(path)
    if kind == "kalman-checkpoint":
        return load_kalman(path)
    raise ContainerFormatError(f"not an estimator checkpoint: {kind!r}")
