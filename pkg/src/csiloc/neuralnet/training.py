"""Training loop, gradient verification, and dataset assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fingerprint_map import MapSequence, extract_proposals
from .model import Model, forward_batch, loss_and_gradients

__all__ = [
    "TrainConfig",
    "TrainReport",
    "train",
    "check_gradients",
    "build_training_sequences",
    "build_vector_sequences",
    "null_training_sequences",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.05
    momentum: float = 0.9
    shuffle_seed: int = 0
    divergence_loss: float = 1e6

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_accuracy: float = 0.0
    n_sequences: int = 0
    diverged: bool = False
    diverged_epoch: int | None = None


class DivergenceError(RuntimeError):
    """Loss became non-finite or exceeded the divergence threshold."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


def train(model: Model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig()) -> TrainReport:
    """SGD with momentum over minibatches of whole sequences.

    x: (N, T) + input_shape; y: (N, T) labels.  Shuffling is seeded so
    a fixed (model seed, data, config) triple trains identically.
    Raises DivergenceError when the loss leaves the finite range.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    N = x.shape[0]
    rng = np.random.default_rng(cfg.shuffle_seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    report = TrainReport(n_sequences=N)
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        total = 0.0
        nb = 0
        for start in range(0, N, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = loss_and_gradients(model, x[idx], y[idx])
            except FloatingPointError:
                report.diverged = True
                report.diverged_epoch = epoch
                raise DivergenceError(epoch, float("nan"))
            if not np.isfinite(loss) or loss > cfg.divergence_loss:
                report.diverged = True
                report.diverged_epoch = epoch
                raise DivergenceError(epoch, loss)
            for name in model.params:
                velocity[name] = cfg.momentum * velocity[name] - cfg.learning_rate * grads[name]
                model.params[name] += velocity[name]
            total += loss
            nb += 1
        report.epoch_losses.append(total / nb)
    probs = forward_batch(model, x)
    report.final_accuracy = float(np.mean(np.argmax(probs, axis=2) == y))
    return report


def check_gradients(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    step: float = 1e-5,
    n_per_param: int = 6,
    seed: int = 0,
) -> float:
    """Worst relative error between BPTT and central finite differences.

    For sampled entries of every parameter tensor, compares the
    analytic gradient against (L(w+e) - L(w-e)) / 2e.  Relative error
    is |a - n| / max(|a|, |n|, 1e-8).
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_gradients(model, x, y)
    worst = 0.0
    for name, w in model.params.items():
        flat = w.ravel()
        k = min(n_per_param, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + step
            lp, _ = loss_and_gradients(model, x, y)
            flat[j] = orig - step
            lm, _ = loss_and_gradients(model, x, y)
            flat[j] = orig
            numeric = (lp - lm) / (2.0 * step)
            analytic = grads[name].ravel()[j]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


def build_training_sequences(
    seq: MapSequence,
    sizes: tuple[int, ...] = (1, 2, 3),
    warp_to: tuple[int, int] = (3, 3),
    sequence_length: int = 4,
    start_stride: int = 1,
    label_mode_2x2: str = "top_left",
    warp_method: str = "nearest",
) -> tuple[np.ndarray, np.ndarray]:
    """Window sequences plus labels from a time-ordered map sequence.

    For every anchor cell and window size, each run of
    ``sequence_length`` consecutive maps (starts spaced by
    ``start_stride``) yields one training sequence.  The same window is
    cut from each map in the run, so the label is constant along a
    sequence.  Returns x (N, T, U, V, C) and y (N, T).
    """
    if sequence_length < 1:
        raise ValueError("sequence_length must be >= 1")
    if sequence_length > len(seq.maps):
        raise ValueError(
            f"sequence_length {sequence_length} exceeds map count {len(seq.maps)}"
        )
    per_map = [
        extract_proposals(m, sizes=sizes, warp_to=warp_to,
                          label_mode_2x2=label_mode_2x2, warp_method=warp_method)
        for m in seq.maps
    ]
    n_windows = len(per_map[0])
    xs, ys = [], []
    starts = range(0, len(seq.maps) - sequence_length + 1, start_stride)
    for w in range(n_windows):
        label = per_map[0][w].label
        for s0 in starts:
            xs.append(np.stack([per_map[s0 + dt][w].data for dt in range(sequence_length)]))
            ys.append(np.full(sequence_length, label, dtype=int))
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=int)


def build_vector_sequences(
    seq: MapSequence,
    sequence_length: int = 4,
    start_stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw fingerprint sequences for the temporal-only baseline.

    Each sample is one cell's pixel vector followed through
    ``sequence_length`` consecutive maps.  Returns x (N, T, C) and
    y (N, T).
    """
    if sequence_length < 1:
        raise ValueError("sequence_length must be >= 1")
    if sequence_length > len(seq.maps):
        raise ValueError(
            f"sequence_length {sequence_length} exceeds map count {len(seq.maps)}"
        )
    grid = seq.maps[0].grid
    xs, ys = [], []
    starts = range(0, len(seq.maps) - sequence_length + 1, start_stride)
    for row in range(grid.height_cells):
        for col in range(grid.width_cells):
            label = grid.class_of(col, row)
            for s0 in starts:
                xs.append(
                    np.stack(
                        [seq.maps[s0 + dt].pixels[row, col] for dt in range(sequence_length)]
                    )
                )
                ys.append(np.full(sequence_length, label, dtype=int))
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=int)


def null_training_sequences(
    observations,
    null_class: int,
    sequence_length: int = 4,
    warp_to: tuple[int, int] | None = (3, 3),
    start_stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Negative samples for the no-detected-location class.

    Observations are grouped by their capture point, time-ordered, and
    cut into runs of ``sequence_length``.  With ``warp_to`` set, every
    frame becomes a constant (U, V, C) tensor matching the windowed
    input shape; with ``warp_to=None``, frames stay raw C-vectors.
    """
    if sequence_length < 1:
        raise ValueError("sequence_length must be >= 1")
    groups: dict[tuple[float, float], list] = {}
    for obs in observations:
        if obs.location is None:
            raise ValueError("null observations must carry their capture point")
        groups.setdefault(tuple(obs.location), []).append(obs)
    xs, ys = [], []
    for key in sorted(groups):
        run = sorted(groups[key], key=lambda o: o.t_ms)
        if len(run) < sequence_length:
            raise ValueError(
                f"capture point {key} has {len(run)} observations, "
                f"need >= {sequence_length}"
            )
        for s0 in range(0, len(run) - sequence_length + 1, start_stride):
            frames = [run[s0 + dt].phases for dt in range(sequence_length)]
            if warp_to is not None:
                U, V = warp_to
                frames = [np.broadcast_to(f[None, None, :], (U, V, f.size)).copy() for f in frames]
            xs.append(np.stack(frames))
            ys.append(np.full(sequence_length, null_class, dtype=int))
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=int)
