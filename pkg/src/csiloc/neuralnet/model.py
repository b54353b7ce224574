"""Hybrid convolutional-recurrent location classifier.

Per timestep a small conv stack reads the warped window tensor, the
flattened features drive an LSTM whose hidden state threads across the
sequence, and an affine head plus softmax emits a belief over the
location classes (including the null class).  With an empty conv stack
the same machinery is the temporal-only baseline running on raw
fingerprint vectors.

The forget-gate recurrent weights carry a higher L2 factor than the
rest of the weights (default 2x), which in practice keeps the model
from latching onto long temporal patterns that pedestrian motion does
not provide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .layers import (
    conv2d_backward,
    conv2d_forward,
    lstm_step_backward,
    lstm_step_forward,
    relu,
    relu_backward,
    softmax,
)

__all__ = [
    "ConvSpec",
    "ModelConfig",
    "BeliefVector",
    "Model",
    "build_model",
    "lstm_only_config",
    "forward",
    "forward_batch",
    "loss_and_gradients",
    "save_model",
    "load_model",
]

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ConvSpec:
    """One conv layer: kernel (kh, kw), output channels, activation."""

    kernel: tuple[int, int] = (3, 3)
    out_channels: int = 16
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and regularization settings.

    ``input_shape`` is (U, V, C) for windowed input or (C,) for the
    temporal-only baseline (conv_layers must then be empty).
    ``n_classes`` counts the null class.  ``l2_forget_factor`` applies
    to the forget-gate recurrent weights only; every other weight tensor
    gets ``l2_base``.
    """

    input_shape: tuple[int, ...]
    n_classes: int
    conv_layers: tuple[ConvSpec, ...] = (ConvSpec((3, 3), 16), ConvSpec((3, 3), 8))
    lstm_hidden: int = 32
    lstm_layers: int = 1
    l2_base: float = 0.001
    l2_forget_factor: float = 0.002
    sequence_length: int = 4

    def __post_init__(self):
        shape = tuple(int(s) for s in self.input_shape)
        object.__setattr__(self, "input_shape", shape)
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        if len(shape) not in (1, 3):
            raise ValueError(f"input_shape must be (U, V, C) or (C,), got {shape}")
        if len(shape) == 1 and self.conv_layers:
            raise ValueError("vector input requires an empty conv stack")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.lstm_hidden < 1 or self.lstm_layers < 1:
            raise ValueError("lstm_hidden and lstm_layers must be >= 1")
        if self.l2_base < 0 or self.l2_forget_factor < 0:
            raise ValueError("L2 factors must be nonnegative")

    @property
    def lstm_input_dim(self) -> int:
        if len(self.input_shape) == 1:
            return self.input_shape[0]
        U, V, C = self.input_shape
        channels = self.conv_layers[-1].out_channels if self.conv_layers else C
        return U * V * channels


@dataclass(frozen=True)
class BeliefVector:
    """Per-timestep class probabilities; entries sum to 1."""

    probs: np.ndarray
    t: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("probs must be a vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a probability distribution")
        object.__setattr__(self, "probs", probs)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class Model:
    """Config plus named parameter tensors."""

    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})


def _init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    r = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-r, r, size=shape)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    """Initialize weights uniform in [-r, r], r = 1/sqrt(fan_in); biases zero.

    Parameter creation order is fixed so a given seed always yields the
    same tensors.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if len(config.input_shape) == 3:
        c_in = config.input_shape[2]
        for li, spec in enumerate(config.conv_layers):
            kh, kw = spec.kernel
            params[f"conv{li}_K"] = _init_uniform(
                rng, (kh, kw, c_in, spec.out_channels), kh * kw * c_in
            )
            params[f"conv{li}_b"] = np.zeros(spec.out_channels)
            c_in = spec.out_channels
    d = config.lstm_input_dim
    H = config.lstm_hidden
    for li in range(config.lstm_layers):
        params[f"lstm{li}_Wx"] = _init_uniform(rng, (4 * H, d), d)
        params[f"lstm{li}_Wh"] = _init_uniform(rng, (4 * H, H), H)
        params[f"lstm{li}_b"] = np.zeros(4 * H)
        d = H
    params["out_W"] = _init_uniform(rng, (config.n_classes, H), H)
    params["out_b"] = np.zeros(config.n_classes)
    return Model(config, params)


def lstm_only_config(
    n_channels: int,
    n_classes: int,
    lstm_hidden: int = 32,
    lstm_layers: int = 1,
    sequence_length: int = 4,
    l2_base: float = 0.001,
    l2_forget_factor: float = 0.002,
) -> ModelConfig:
    """Temporal-only baseline: raw C-vector input, no conv stack."""
    return ModelConfig(
        input_shape=(n_channels,),
        n_classes=n_classes,
        conv_layers=(),
        lstm_hidden=lstm_hidden,
        lstm_layers=lstm_layers,
        sequence_length=sequence_length,
        l2_base=l2_base,
        l2_forget_factor=l2_forget_factor,
    )


def _forget_slice(H: int) -> slice:
    return slice(H, 2 * H)


def forward_batch(model: Model, x: np.ndarray, want_cache: bool = False):
    """Probabilities for a batch of sequences.

    x: (B, T) + input_shape.  Returns probs (B, T, n_classes), and the
    backprop cache when requested.
    """
    cfg = model.config
    p = model.params
    B, T = x.shape[:2]
    if tuple(x.shape[2:]) != cfg.input_shape:
        raise ValueError(f"input shape {x.shape[2:]} != config {cfg.input_shape}")
    H = cfg.lstm_hidden

    h = [np.zeros((B, H)) for _ in range(cfg.lstm_layers)]
    c = [np.zeros((B, H)) for _ in range(cfg.lstm_layers)]
    probs = np.empty((B, T, cfg.n_classes))
    caches = []
    for t in range(T):
        z = x[:, t]
        conv_caches = []
        if len(cfg.input_shape) == 3:
            for li in range(len(cfg.conv_layers)):
                pre, cc = conv2d_forward(z, p[f"conv{li}_K"], p[f"conv{li}_b"])
                act = cfg.conv_layers[li].activation
                z_new = relu(pre) if act == "relu" else np.tanh(pre)
                conv_caches.append((cc, pre, act))
                z = z_new
            feat = z.reshape(B, -1)
        else:
            feat = z
        lstm_caches = []
        inp = feat
        for li in range(cfg.lstm_layers):
            h[li], c[li], lc = lstm_step_forward(
                inp, h[li], c[li], p[f"lstm{li}_Wx"], p[f"lstm{li}_Wh"], p[f"lstm{li}_b"]
            )
            lstm_caches.append(lc)
            inp = h[li]
        logits = inp @ p["out_W"].T + p["out_b"]
        probs[:, t] = softmax(logits)
        if want_cache:
            caches.append((conv_caches, lstm_caches, inp))
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite activations: model diverged")
    return (probs, caches) if want_cache else probs


def forward(model: Model, sequence: np.ndarray) -> list[BeliefVector]:
    """Belief vectors for one sequence of T inputs."""
    sequence = np.asarray(sequence, dtype=float)
    probs = forward_batch(model, sequence[None])
    return [BeliefVector(probs[0, t], t) for t in range(sequence.shape[0])]


def _l2_terms(model: Model) -> tuple[float, dict[str, np.ndarray]]:
    """Regularization loss and its parameter gradients.

    All weight matrices/kernels get l2_base; the forget-gate block of
    each recurrent weight matrix gets l2_forget_factor instead.  Biases
    are not regularized.
    """
    cfg = model.config
    H = cfg.lstm_hidden
    fsl = _forget_slice(H)
    extra = cfg.l2_forget_factor - cfg.l2_base
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for name, w in model.params.items():
        if name.endswith("_b"):
            continue
        loss += cfg.l2_base * float(np.sum(w * w))
        g = 2.0 * cfg.l2_base * w
        if name.endswith("_Wh"):
            wf = w[fsl]
            loss += extra * float(np.sum(wf * wf))
            g = g.copy()
            g[fsl] += 2.0 * extra * wf
        grads[name] = g
    return loss, grads


def loss_and_gradients(model: Model, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over all timesteps plus L2, with full BPTT.

    x: (B, T) + input_shape; y: (B, T) integer labels.
    Returns (loss, grads) with one gradient per parameter tensor.
    """
    cfg = model.config
    p = model.params
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    B, T = y.shape
    if np.any(y < 0) or np.any(y >= cfg.n_classes):
        raise ValueError("labels out of range")

    probs, caches = forward_batch(model, x, want_cache=True)
    n = B * T
    eps_rows = probs[np.arange(B)[:, None], np.arange(T)[None, :], y]
    data_loss = float(-np.log(np.clip(eps_rows, 1e-300, None)).sum() / n)
    reg_loss, grads = _l2_terms(model)
    loss = data_loss + reg_loss
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")

    for name, w in p.items():
        if name not in grads:
            grads[name] = np.zeros_like(w)

    H = cfg.lstm_hidden
    n_lstm = cfg.lstm_layers
    dh_next = [np.zeros((B, H)) for _ in range(n_lstm)]
    dc_next = [np.zeros((B, H)) for _ in range(n_lstm)]
    onehot = np.zeros((B, cfg.n_classes))
    for t in reversed(range(T)):
        conv_caches, lstm_caches, top_h = caches[t]
        onehot[:] = 0.0
        onehot[np.arange(B), y[:, t]] = 1.0
        dlogits = (probs[:, t] - onehot) / n
        grads["out_W"] += dlogits.T @ top_h
        grads["out_b"] += dlogits.sum(axis=0)
        dh = dlogits @ p["out_W"]
        for li in reversed(range(n_lstm)):
            dinp, dh_prev, dc_prev, d_wx, d_wh, d_b = lstm_step_backward(
                dh + dh_next[li], dc_next[li], lstm_caches[li]
            )
            grads[f"lstm{li}_Wx"] += d_wx
            grads[f"lstm{li}_Wh"] += d_wh
            grads[f"lstm{li}_b"] += d_b
            dh_next[li] = dh_prev
            dc_next[li] = dc_prev
            dh = dinp
        if len(cfg.input_shape) == 3:
            U, V, _ = cfg.input_shape
            ch = cfg.conv_layers[-1].out_channels if cfg.conv_layers else cfg.input_shape[2]
            dz = dh.reshape(B, U, V, ch)
            for li in reversed(range(len(cfg.conv_layers))):
                cc, pre, act = conv_caches[li]
                dpre = relu_backward(dz, pre) if act == "relu" else dz * (1.0 - np.tanh(pre) ** 2)
                dz, d_k, d_b = conv2d_backward(dpre, cc)
                grads[f"conv{li}_K"] += d_k
                grads[f"conv{li}_b"] += d_b
    return loss, grads


# --- model file: versioned JSON with named full-precision tensors ----------


def save_model(model: Model, path: str | Path) -> None:
    cfg = model.config
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "input_shape": list(cfg.input_shape),
            "n_classes": cfg.n_classes,
            "conv_layers": [
                {"kernel": list(s.kernel), "out_channels": s.out_channels, "activation": s.activation}
                for s in cfg.conv_layers
            ],
            "lstm_hidden": cfg.lstm_hidden,
            "lstm_layers": cfg.lstm_layers,
            "l2_base": cfg.l2_base,
            "l2_forget_factor": cfg.l2_forget_factor,
            "sequence_length": cfg.sequence_length,
        },
        "params": {
            name: {"shape": list(w.shape), "data": [float(v) for v in w.ravel()]}
            for name, w in model.params.items()
        },
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path: str | Path) -> Model:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    c = doc["config"]
    config = ModelConfig(
        input_shape=tuple(c["input_shape"]),
        n_classes=int(c["n_classes"]),
        conv_layers=tuple(
            ConvSpec(tuple(s["kernel"]), int(s["out_channels"]), s["activation"])
            for s in c["conv_layers"]
        ),
        lstm_hidden=int(c["lstm_hidden"]),
        lstm_layers=int(c["lstm_layers"]),
        l2_base=float(c["l2_base"]),
        l2_forget_factor=float(c["l2_forget_factor"]),
        sequence_length=int(c["sequence_length"]),
    )
    reference = build_model(config, seed=0)
    params = {}
    for name, rec in doc["params"].items():
        w = np.asarray(rec["data"], dtype=float).reshape(rec["shape"])
        if name not in reference.params:
            raise ValueError(f"unknown parameter {name!r} in model file")
        if w.shape != reference.params[name].shape:
            raise ValueError(
                f"parameter {name!r} shape {w.shape} does not match "
                f"config shape {reference.params[name].shape}"
            )
        params[name] = w
    missing = set(reference.params) - set(params)
    if missing:
        raise ValueError(f"model file missing parameters: {sorted(missing)}")
    return Model(config, params)
