import json
import os

import numpy as np
import pytest

from maestro.checkpoint import load_estimator, load_lstm, save_kalman, save_lstm
from maestro.cli import main
from maestro.kalman import fit as kalman_fit
from maestro.lstm import LstmPhaseModel, LstmSpec
from maestro.score import CONTROL_20HZ, Score
from maestro.synth import ConductorStyle, generate_take, load_corpus, write_take


def small_score_file(tmp_path):
    durations = [1.5] + [0.7] * 5
    durations[2] = 2.725
    score = Score(bar_count=6, bar_durations=tuple(durations),
                  fermata_bars=frozenset({2}), label="cli")
    path = tmp_path / "score.json"
    score.save(path)
    return score, str(path)


class TestCheckpoints:
    def test_lstm_roundtrip(self, tmp_path):
        model = LstmPhaseModel.init(LstmSpec(input_dim=54, hidden=6, layers=2, head_hidden=4,
                                             dropout=0.0), seed=1)
        path = tmp_path / "model.ckpt"
        save_lstm(path, model, extra={"note": "test"})
        loaded = load_lstm(path)
        assert loaded.spec == model.spec
        assert np.array_equal(loaded.flat_params(), model.flat_params())

    def test_kalman_roundtrip(self, tmp_path):
        score, _ = small_score_file(tmp_path)
        take = generate_take(score, ConductorStyle(seed=1, noise_std=0.0), 1.0, CONTROL_20HZ)
        model = kalman_fit([take])
        path = tmp_path / "kalman.ckpt"
        save_kalman(path, model)
        loaded = load_estimator(path)
        assert loaded.omega == model.omega
        assert np.array_equal(loaded.obs_matrix, model.obs_matrix)

    def test_load_estimator_dispatches(self, tmp_path):
        model = LstmPhaseModel.init(LstmSpec(input_dim=54, hidden=6, layers=1, head_hidden=4,
                                             dropout=0.0), seed=0)
        path = tmp_path / "model.ckpt"
        save_lstm(path, model)
        assert isinstance(load_estimator(path), LstmPhaseModel)


class TestCliFlow:
    def test_gen_train_simulate_metrics(self, tmp_path, capsys):
        score, score_path = small_score_file(tmp_path)
        corpus = tmp_path / "corpus"
        rc = main(["gen-corpus", "--score", score_path, "--out", str(corpus),
                   "--subjects", "3", "--tempos", "1.0", "--seed", "5",
                   "--noise-std", "0.004"])
        assert rc == 0
        manifest, takes = load_corpus(corpus)
        assert len(takes) == 3

        ckpt = tmp_path / "model.ckpt"
        rc = main(["train", "--corpus", str(corpus), "--out", str(ckpt),
                   "--val-subject", "s03", "--hidden", "8", "--layers", "1",
                   "--window", "40", "--epochs", "3", "--max-lr", "1e-3",
                   "--seed", "1"])
        assert rc == 0
        assert ckpt.exists()
        assert (tmp_path / "model_train_log.csv").exists()

        take_path = str(corpus / manifest["takes"][0]["file"])
        log_path = tmp_path / "session.csv"
        rc = main(["simulate", "--take", take_path, "--score", score_path,
                   "--estimator", "oracle", "--strategy", "raw",
                   "--out", str(log_path)])
        assert rc == 0
        rc = main(["metrics", "--log", str(log_path), "--score", score_path])
        assert rc == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.rindex("{"):]) if False else None
        assert "pct_of_bar" in out

    def test_train_kalman(self, tmp_path):
        score, score_path = small_score_file(tmp_path)
        corpus = tmp_path / "corpus"
        main(["gen-corpus", "--score", score_path, "--out", str(corpus),
              "--subjects", "2", "--tempos", "1.0", "--seed", "3"])
        ckpt = tmp_path / "kalman.ckpt"
        rc = main(["train", "--corpus", str(corpus), "--out", str(ckpt),
                   "--estimator", "kalman", "--val-subject", "s02"])
        assert rc == 0
        model = load_estimator(ckpt)
        assert hasattr(model, "omega")

    def test_unknown_val_subject_fails_cleanly(self, tmp_path):
        score, score_path = small_score_file(tmp_path)
        corpus = tmp_path / "corpus"
        main(["gen-corpus", "--score", score_path, "--out", str(corpus),
              "--subjects", "2", "--tempos", "1.0"])
        rc = main(["train", "--corpus", str(corpus), "--out", str(tmp_path / "x.ckpt"),
                   "--val-subject", "nope"])
        assert rc == 2

    def test_simulate_with_checkpoint(self, tmp_path):
        score, score_path = small_score_file(tmp_path)
        take = generate_take(score, ConductorStyle(seed=2, noise_std=0.0), 1.0, CONTROL_20HZ)
        take_path = tmp_path / "take.take"
        write_take(take, take_path)
        model = kalman_fit([take])
        ckpt = tmp_path / "kalman.ckpt"
        save_kalman(ckpt, model)
        log_path = tmp_path / "session.csv"
        rc = main(["simulate", "--take", str(take_path), "--score", score_path,
                   "--estimator", "checkpoint", "--checkpoint", str(ckpt),
                   "--out", str(log_path)])
        assert rc == 0
        assert log_path.exists()
