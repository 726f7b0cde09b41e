"""Stacked-LSTM phase estimator with hand-built backpropagation.

Three stacked LSTM layers followed by a two-layer head that emits one
(sin, cos) pair per input frame. Everything is plain numpy in double
precision: forward, streaming single-step inference, and full
backpropagation through time. Gradients are verified against central
finite differences in the test suite, so every equation here is load
bearing; change with care.

Gate order inside the packed weight matrices is (i, f, g, o) with

    z = W @ [h_prev, x] + b,  c = f*c_prev + i*g,  h = o*tanh(c).

Dropout (inverted, per batch element and timestep) sits on the outputs
of all but the last LSTM layer and on the head's hidden activation; the
recurrent path always sees the undropped state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LstmSpec:
    """Architecture hyperparameters; serialized into checkpoints."""

    input_dim: int
    hidden: int = 64
    layers: int = 3
    head_hidden: int = 64
    dropout: float = 0.2

    def __post_init__(self):
        if self.input_dim <= 0 or self.hidden <= 0 or self.head_hidden <= 0:
            raise ValueError("dimensions must be positive")
        if self.layers < 1:
            raise ValueError("need at least one recurrent layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "layers": self.layers,
            "head_hidden": self.head_hidden,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LstmSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden=int(d["hidden"]),
            layers=int(d["layers"]),
            head_hidden=int(d["head_hidden"]),
            dropout=float(d["dropout"]),
        )


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmStreamState:
    """Recurrent carry for streaming inference: (h, c) per layer."""

    hs: list[np.ndarray]
    cs: list[np.ndarray]

    def reset(self):
        for h, c in zip(self.hs, self.cs):
            h[:] = 0.0
            c[:] = 0.0

    def copy(self) -> "LstmStreamState":
        return LstmStreamState([h.copy() for h in self.hs], [c.copy() for c in self.cs])


class LstmPhaseModel:
    """Parameter container plus forward/backward/streaming passes."""

    def __init__(self, spec: LstmSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params

    # -- construction -------------------------------------------------

    @classmethod
    def init(cls, spec: LstmSpec, seed: int = 0) -> "LstmPhaseModel":
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(spec.hidden)
        params: dict[str, np.ndarray] = {}
        in_dim = spec.input_dim
        for layer in range(spec.layers):
            params[f"lstm{layer}_W"] = rng.uniform(-k, k, size=(4 * spec.hidden, spec.hidden + in_dim))
            b = rng.uniform(-k, k, size=4 * spec.hidden)
            b[spec.hidden: 2 * spec.hidden] += 1.0  # open forget gates at start
            params[f"lstm{layer}_b"] = b
            in_dim = spec.hidden
        params["head_W1"] = rng.uniform(-k, k, size=(spec.head_hidden, spec.hidden))
        params["head_b1"] = rng.uniform(-k, k, size=spec.head_hidden)
        params["head_W2"] = rng.uniform(-k, k, size=(2, spec.head_hidden))
        params["head_b2"] = rng.uniform(-k, k, size=2)
        return cls(spec, params)

    def param_names(self) -> list[str]:
        names = []
        for layer in range(self.spec.layers):
            names += [f"lstm{layer}_W", f"lstm{layer}_b"]
        names += ["head_W1", "head_b1", "head_W2", "head_b2"]
        return names

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in self.param_names()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for name in self.param_names():
            size = self.params[name].size
            self.params[name] = flat[offset: offset + size].reshape(self.params[name].shape).copy()
            offset += size
        if offset != flat.size:
            raise ValueError(f"flat parameter vector has {flat.size} entries, expected {offset}")

    def copy(self) -> "LstmPhaseModel":
        return LstmPhaseModel(self.spec, {k: v.copy() for k, v in self.params.items()})

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward ------------------------------------------------------

    def forward(self, x: np.ndarray, dropout_rng=None) -> np.ndarray:
        """Outputs (..., T, 2) for inputs (..., T, input_dim).

        ``dropout_rng`` enables training-mode dropout; inference (the
        default) is deterministic.
        """
        y, _ = self._forward(np.asarray(x, dtype=float), dropout_rng, want_cache=False)
        return y

    def forward_cache(self, x: np.ndarray, dropout_rng=None):
        return self._forward(np.asarray(x, dtype=float), dropout_rng, want_cache=True)

    def _forward(self, x: np.ndarray, dropout_rng, want_cache: bool):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != self.spec.input_dim:
            raise ValueError(
                f"expected input shape (B, T, {self.spec.input_dim}), got {x.shape}"
            )
        B, T, _ = x.shape
        H = self.spec.hidden
        spec = self.spec
        keep = 1.0 - spec.dropout
        cache: dict = {"x": x, "layers": [], "masks": []}
        inp = x
        for layer in range(spec.layers):
            W = self.params[f"lstm{layer}_W"]
            b = self.params[f"lstm{layer}_b"]
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            gates_i = np.empty((B, T, H))
            gates_f = np.empty((B, T, H))
            gates_g = np.empty((B, T, H))
            gates_o = np.empty((B, T, H))
            cs = np.empty((B, T, H))
            tanh_cs = np.empty((B, T, H))
            hs = np.empty((B, T, H))
            for t in range(T):
                a = np.concatenate([h, inp[:, t]], axis=1)
                z = a @ W.T + b
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H: 2 * H])
                g = np.tanh(z[:, 2 * H: 3 * H])
                o = _sigmoid(z[:, 3 * H:])
                c = f * c + i * g
                tc = np.tanh(c)
                h = o * tc
                gates_i[:, t], gates_f[:, t] = i, f
                gates_g[:, t], gates_o[:, t] = g, o
                cs[:, t], tanh_cs[:, t], hs[:, t] = c, tc, h
            if want_cache:
                cache["layers"].append(
                    {"inp": inp, "i": gates_i, "f": gates_f, "g": gates_g,
                     "o": gates_o, "c": cs, "tanh_c": tanh_cs, "h": hs}
                )
            out = hs
            if layer < spec.layers - 1 and dropout_rng is not None and spec.dropout > 0:
                mask = (dropout_rng.random((B, T, H)) < keep) / keep
                out = out * mask
            else:
                mask = None
            cache["masks"].append(mask)
            inp = out
        # head: tanh hidden layer then linear pair output
        W1, b1 = self.params["head_W1"], self.params["head_b1"]
        W2, b2 = self.params["head_W2"], self.params["head_b2"]
        a1 = np.tanh(inp @ W1.T + b1)
        if dropout_rng is not None and spec.dropout > 0:
            head_mask = (dropout_rng.random(a1.shape) < keep) / keep
            a1d = a1 * head_mask
        else:
            head_mask = None
            a1d = a1
        y = a1d @ W2.T + b2
        if want_cache:
            cache["top"] = inp
            cache["a1"] = a1
            cache["head_mask"] = head_mask
            cache["a1d"] = a1d
        if squeeze:
            y = y[0]
        return y, (cache if want_cache else None)

    # -- backward -----------------------------------------------------

    def backward(self, cache: dict, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(outputs).

        ``dy`` has shape (B, T, 2) matching the cached forward pass.
        """
        spec = self.spec
        H = spec.hidden
        x = cache["x"]
        B, T, _ = x.shape
        dy = np.asarray(dy, dtype=float)
        if dy.ndim == 2:
            dy = dy[None]
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}

        a1, a1d, top = cache["a1"], cache["a1d"], cache["top"]
        W1, W2 = self.params["head_W1"], self.params["head_W2"]
        dy_flat = dy.reshape(B * T, 2)
        grads["head_W2"] += dy_flat.T @ a1d.reshape(B * T, -1)
        grads["head_b2"] += dy_flat.sum(axis=0)
        da1 = dy @ W2
        if cache["head_mask"] is not None:
            da1 = da1 * cache["head_mask"]
        dz1 = da1 * (1.0 - a1 * a1)
        dz1_flat = dz1.reshape(B * T, -1)
        grads["head_W1"] += dz1_flat.T @ top.reshape(B * T, -1)
        grads["head_b1"] += dz1_flat.sum(axis=0)
        dout = dz1 @ W1  # gradient wrt the top LSTM layer's (dropped) output

        for layer in range(spec.layers - 1, -1, -1):
            lc = cache["layers"][layer]
            mask = cache["masks"][layer]
            if mask is not None:
                dout = dout * mask
            W = self.params[f"lstm{layer}_W"]
            dW = grads[f"lstm{layer}_W"]
            db = grads[f"lstm{layer}_b"]
            inp = lc["inp"]
            dinp = np.zeros_like(inp)
            dh_rec = np.zeros((B, H))
            dc_rec = np.zeros((B, H))
            for t in range(T - 1, -1, -1):
                i, f = lc["i"][:, t], lc["f"][:, t]
                g, o = lc["g"][:, t], lc["o"][:, t]
                tc = lc["tanh_c"][:, t]
                c_prev = lc["c"][:, t - 1] if t > 0 else np.zeros((B, H))
                h_prev = lc["h"][:, t - 1] if t > 0 else np.zeros((B, H))
                dh = dout[:, t] + dh_rec
                do = dh * tc
                dc = dh * o * (1.0 - tc * tc) + dc_rec
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                dc_rec = dc * f
                dz = np.concatenate(
                    [di * i * (1.0 - i), df * f * (1.0 - f),
                     dg * (1.0 - g * g), do * o * (1.0 - o)],
                    axis=1,
                )
                a = np.concatenate([h_prev, inp[:, t]], axis=1)
                dW += dz.T @ a
                db += dz.sum(axis=0)
                da = dz @ W
                dh_rec = da[:, :H]
                dinp[:, t] = da[:, H:]
            dout = dinp
        return grads

    # -- streaming ----------------------------------------------------

    def begin_stream(self) -> LstmStreamState:
        H = self.spec.hidden
        return LstmStreamState(
            hs=[np.zeros(H) for _ in range(self.spec.layers)],
            cs=[np.zeros(H) for _ in range(self.spec.layers)],
        )

    def stream_step(self, state: LstmStreamState, x_k: np.ndarray) -> np.ndarray:
        """Single-step recurrent update; returns the (sin, cos) pair.

        Dropout is disabled; the state is updated in place.
        """
        x_k = np.asarray(x_k, dtype=float)
        if x_k.shape != (self.spec.input_dim,):
            raise ValueError(
                f"expected a frame of {self.spec.input_dim} features, got {x_k.shape}"
            )
        H = self.spec.hidden
        inp = x_k
        for layer in range(self.spec.layers):
            W = self.params[f"lstm{layer}_W"]
            b = self.params[f"lstm{layer}_b"]
            a = np.concatenate([state.hs[layer], inp])
            z = a @ W.T + b
            i = _sigmoid(z[:H])
            f = _sigmoid(z[H: 2 * H])
            g = np.tanh(z[2 * H: 3 * H])
            o = _sigmoid(z[3 * H:])
            c = f * state.cs[layer] + i * g
            h = o * np.tanh(c)
            state.cs[layer] = c
            state.hs[layer] = h
            inp = h
        a1 = np.tanh(inp @ self.params["head_W1"].T + self.params["head_b1"])
        return a1 @ self.params["head_W2"].T + self.params["head_b2"]
