"""Candidate trajectories from per-timestep location beliefs.

From each of n belief vectors (spaced ~2 s apart), f location classes
are drawn weighted by probability.  The cross-product of the
deduplicated per-timestep candidate sets is the hypothesis pool,
capped at a configurable maximum by seeded distinct subsampling.  Each
hypothesis is then midpoint-upsampled so its update spacing matches
what the trajectory filter consumes.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fingerprint_map import GridSpec
from .neuralnet.model import BeliefVector

__all__ = [
    "HypothesisConfig",
    "LocationUpdate",
    "TrajectoryHypothesis",
    "NullBeliefError",
    "sample_candidates",
    "enumerate_hypotheses",
    "upsample",
    "generate_hypotheses",
    "write_hypotheses_csv",
    "read_hypotheses_csv",
]

log = logging.getLogger(__name__)

NULL_MASS_LIMIT = 0.999


class NullBeliefError(ValueError):
    """A timestep's belief puts essentially all mass on the null class."""


@dataclass(frozen=True)
class HypothesisConfig:
    """Sampling breadth (f), window length (n), and pool cap."""

    f: int = 5
    n: int = 3
    max_hypotheses: int = 256
    rng_seed: int = 0

    def __post_init__(self):
        if self.f < 1:
            raise ValueError("f must be >= 1")
        if self.n < 3:
            # below 3 updates the window is too short to separate a
            # walking pattern from noise
            raise ValueError("n must be >= 3")
        if self.max_hypotheses < 1:
            raise ValueError("max_hypotheses must be >= 1")


@dataclass(frozen=True)
class LocationUpdate:
    """One (x, y, confidence) point on a candidate trajectory."""

    x: float
    y: float
    c: float
    t_index: float

    def __post_init__(self):
        c = min(max(float(self.c), 0.0), 1.0 - 1e-9)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class TrajectoryHypothesis:
    """An ordered run of location updates with a frozen mean confidence.

    ``mean_confidence`` is the arithmetic mean over the original
    (pre-interpolation) updates; upsampling never changes it.
    """

    id: int
    updates: tuple[LocationUpdate, ...]
    mean_confidence: float

    def positions(self) -> np.ndarray:
        return np.array([(u.x, u.y) for u in self.updates])

    def confidences(self) -> np.ndarray:
        return np.array([u.c for u in self.updates])


def sample_candidates(
    beliefs: list[BeliefVector], null_class: int, cfg: HypothesisConfig
) -> list[list[int]]:
    """Per-timestep candidate classes: f weighted draws, deduplicated.

    Draws are with replacement from each belief's categorical
    distribution; null-class draws are discarded since a trajectory
    cannot pass through "no location".  A timestep whose null mass is
    >= 0.999 makes the whole window unusable.
    """
    if len(beliefs) != cfg.n:
        raise ValueError(f"expected {cfg.n} beliefs, got {len(beliefs)}")
    rng = np.random.default_rng(cfg.rng_seed)
    sets: list[list[int]] = []
    for t, belief in enumerate(beliefs):
        probs = belief.probs
        if null_class >= probs.size:
            raise ValueError("null_class outside belief vector")
        if probs[null_class] >= NULL_MASS_LIMIT:
            raise NullBeliefError(
                f"timestep {t}: null-class mass {probs[null_class]:.4f} >= {NULL_MASS_LIMIT}"
            )
        draws = rng.choice(probs.size, size=cfg.f, replace=True, p=probs)
        kept = sorted({int(d) for d in draws} - {null_class})
        sets.append(kept)
    return sets


def enumerate_hypotheses(
    candidate_sets: list[list[int]],
    beliefs: list[BeliefVector],
    grid: GridSpec,
    cfg: HypothesisConfig,
) -> list[TrajectoryHypothesis]:
    """Cross-product of candidate sets, capped by seeded subsampling.

    Every combination picks one class per timestep; positions are the
    cell centers and confidences the belief probabilities of the picked
    classes.  When the full cross-product exceeds ``max_hypotheses``,
    that many distinct combinations are drawn uniformly (seeded).
    """
    sizes = [len(s) for s in candidate_sets]
    for t, size in enumerate(sizes):
        if size == 0:
            raise ValueError(f"empty candidate set at timestep {t}")
    total = int(np.prod(sizes))
    log.debug(
        "hypothesis pool: cross-product %d (per-timestep sizes %s; n*f would be %d)",
        total, sizes, cfg.n * cfg.f,
    )
    if total <= cfg.max_hypotheses:
        picks = np.arange(total)
    else:
        rng = np.random.default_rng(cfg.rng_seed + 1)
        picks = np.sort(rng.choice(total, size=cfg.max_hypotheses, replace=False))
    hypotheses = []
    for b, flat in enumerate(picks):
        # mixed-radix decode of the flat cross-product index, last
        # timestep fastest
        rem = int(flat)
        classes = [0] * len(sizes)
        for t in range(len(sizes) - 1, -1, -1):
            rem, k = divmod(rem, sizes[t])
            classes[t] = candidate_sets[t][k]
        updates = []
        for t, label in enumerate(classes):
            col, row = grid.cell_of_class(label)
            x, y = grid.cell_center(col, row)
            updates.append(LocationUpdate(x, y, float(beliefs[t].probs[label]), float(t)))
        mean_c = float(np.mean([u.c for u in updates]))
        hypotheses.append(TrajectoryHypothesis(b, tuple(updates), mean_c))
    return hypotheses


def upsample(hypothesis: TrajectoryHypothesis) -> TrajectoryHypothesis:
    """Insert linear midpoints between consecutive updates (n -> 2n-1).

    Positions, confidences and time indices are all averaged; endpoints
    are preserved bit-exactly and mean_confidence is carried over
    unchanged from the pre-interpolation updates.
    """
    if len(hypothesis.updates) < 2:
        raise ValueError("cannot upsample a single-point trajectory")
    out: list[LocationUpdate] = []
    for a, b in zip(hypothesis.updates[:-1], hypothesis.updates[1:]):
        out.append(a)
        out.append(
            LocationUpdate(
                0.5 * (a.x + b.x),
                0.5 * (a.y + b.y),
                0.5 * (a.c + b.c),
                0.5 * (a.t_index + b.t_index),
            )
        )
    out.append(hypothesis.updates[-1])
    return TrajectoryHypothesis(hypothesis.id, tuple(out), hypothesis.mean_confidence)


def generate_hypotheses(
    beliefs: list[BeliefVector], grid: GridSpec, cfg: HypothesisConfig
) -> list[TrajectoryHypothesis]:
    """sample_candidates + enumerate_hypotheses + upsample in one call."""
    sets = sample_candidates(beliefs, grid.null_class, cfg)
    return [upsample(h) for h in enumerate_hypotheses(sets, beliefs, grid, cfg)]


def write_hypotheses_csv(path: str | Path, hypotheses: list[TrajectoryHypothesis]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "seq", "t", "x", "y", "c"])
        for h in hypotheses:
            for seq, u in enumerate(h.updates):
                writer.writerow(
                    [h.id, seq, repr(u.t_index), repr(u.x), repr(u.y), repr(u.c)]
                )


def read_hypotheses_csv(path: str | Path) -> list[TrajectoryHypothesis]:
    rows: dict[int, list[tuple[int, LocationUpdate]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            b = int(rec["b"])
            seq = int(rec["seq"])
            rows.setdefault(b, []).append(
                (seq, LocationUpdate(
                    float(rec["x"]), float(rec["y"]), float(rec["c"]), float(rec["t"])
                ))
            )
    hypotheses = []
    for b in sorted(rows):
        updates = tuple(u for _, u in sorted(rows[b], key=lambda p: p[0]))
        # original points sit at even positions after midpoint upsampling
        orig = updates[::2] if len(updates) % 2 == 1 else updates
        mean_c = float(np.mean([u.c for u in orig]))
        hypotheses.append(TrajectoryHypothesis(b, updates, mean_c))
    return hypotheses
