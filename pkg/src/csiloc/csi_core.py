"""Core CSI types, phase sanitization and statistical denoising.

The raw phase reported by a commodity NIC carries unknown timing and
phase offsets that differ per packet.  Detrending the unwrapped phase
across the subcarrier band removes the affine component those offsets
contribute, leaving a location-dependent residual that is usable as a
fingerprint feature.  Observation sets gathered at one location are then
screened channel-by-channel against a sigma bound to drop readings hit
by transient RF disturbances.

All types are immutable values and all operations are pure functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CsiSample",
    "ChannelLayout",
    "CsiObservation",
    "DenoiseConfig",
    "DenoiseResult",
    "UnusableLocationError",
    "sanitize_phase",
    "normalize_phases",
    "sanitize_observation",
    "denoise",
    "write_observations",
    "read_observations",
]


class UnusableLocationError(ValueError):
    """Raised when denoising leaves too few observations at a location."""

    def __init__(self, location, retained: int, total: int):
        self.location = location
        self.retained = retained
        self.total = total
        super().__init__(
            f"location {location}: only {retained}/{total} observations "
            f"survive denoising; reference point is unusable"
        )


@dataclass(frozen=True)
class CsiSample:
    """One subcarrier reading: linear amplitude and phase in (-pi, pi]."""

    amplitude: float
    phase: float

    def __post_init__(self):
        if not (self.amplitude >= 0.0):
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not math.isfinite(self.phase):
            raise ValueError("phase must be finite")


@dataclass(frozen=True)
class ChannelLayout:
    """MIMO channel geometry.

    Channel index order is fixed: tx-major, then rx, then subcarrier
    ascending, so channel ``(tx, rx, k)`` sits at
    ``(tx * n_rx + rx) * n_subcarriers + k``.
    """

    n_tx: int = 3
    n_rx: int = 3
    n_subcarriers: int = 30

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_subcarriers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def n_channels(self) -> int:
        return self.n_tx * self.n_rx * self.n_subcarriers

    def channel_index(self, tx: int, rx: int, subcarrier: int) -> int:
        return (tx * self.n_rx + rx) * self.n_subcarriers + subcarrier

    def pair_slices(self) -> list[slice]:
        """Per antenna-pair slices into the flat channel vector."""
        n = self.n_subcarriers
        return [slice(p * n, (p + 1) * n) for p in range(self.n_tx * self.n_rx)]


@dataclass(frozen=True)
class CsiObservation:
    """One timestamped reading of C sanitized phase values.

    ``location`` is ``(x, y)`` in meters for training data and ``None``
    for test queries.
    """

    t_ms: int
    phases: np.ndarray
    location: tuple[float, float] | None = None

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if phases.ndim != 1:
            raise ValueError(f"phases must be a 1-d vector, got shape {phases.shape}")
        if not np.all(np.isfinite(phases)):
            raise ValueError("phases must all be finite")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "t_ms", int(self.t_ms))
        if self.location is not None:
            x, y = self.location
            object.__setattr__(self, "location", (float(x), float(y)))

    @property
    def n_channels(self) -> int:
        return self.phases.shape[0]


@dataclass(frozen=True)
class DenoiseConfig:
    """Sigma-bound screening parameters.

    ``sigma_bound`` multiplies the per-channel standard deviation;
    ``min_retained`` is the smallest acceptable retained fraction before
    the location is declared unusable.
    """

    sigma_bound: float = 2.0
    min_retained: float = 0.5

    def __post_init__(self):
        if not (self.sigma_bound > 0):
            raise ValueError(f"sigma_bound must be > 0, got {self.sigma_bound}")
        if not (0.0 < self.min_retained <= 1.0):
            raise ValueError(f"min_retained must be in (0, 1], got {self.min_retained}")


@dataclass(frozen=True)
class DenoiseResult:
    """Outcome of screening one location's observation set."""

    retained: tuple[CsiObservation, ...]
    rejected: tuple[CsiObservation, ...]
    reasons: tuple[str | None, ...] = field(repr=False, default=())

    @property
    def retained_fraction(self) -> float:
        total = len(self.retained) + len(self.rejected)
        return len(self.retained) / total if total else 0.0


def _unwrap(phases: np.ndarray) -> np.ndarray:
    """Standard 1-d unwrap: shift by 2*pi wherever a consecutive jump exceeds pi."""
    return np.unwrap(phases)


def sanitize_phase(raw_phases: Sequence[float], subcarrier_indices: Sequence[int]) -> np.ndarray:
    """Remove the affine phase component across the subcarrier band.

    Unwraps the raw phases, subtracts the two-endpoint slope
    ``a = (phi_last - phi_first) / (k_last - k_first)`` times the
    subcarrier index, then removes the mean of the detrended values.
    The result has zero mean and equal endpoints, and any affine input
    ``a*k + b`` maps to zeros.
    """
    phi = np.asarray(raw_phases, dtype=float)
    k = np.asarray(subcarrier_indices, dtype=float)
    if phi.ndim != 1 or k.ndim != 1:
        raise ValueError("raw_phases and subcarrier_indices must be 1-d")
    if phi.shape[0] != k.shape[0]:
        raise ValueError(
            f"length mismatch: {phi.shape[0]} phases vs {k.shape[0]} subcarrier indices"
        )
    if phi.shape[0] < 2:
        raise ValueError("need at least 2 subcarriers")
    if not np.all(np.isfinite(phi)):
        raise ValueError("raw phases must be finite")
    if not np.all(np.diff(k) > 0):
        raise ValueError("subcarrier_indices must be strictly increasing")

    unwrapped = _unwrap(phi)
    slope = (unwrapped[-1] - unwrapped[0]) / (k[-1] - k[0])
    detrended = unwrapped - slope * k
    return detrended - detrended.mean()


def normalize_phases(phases: np.ndarray) -> np.ndarray:
    """Min-max scale one observation's channel vector to [0, 1].

    A constant vector maps to all 0.5 (no spread to scale by).
    """
    phases = np.asarray(phases, dtype=float)
    lo = phases.min()
    hi = phases.max()
    if hi - lo < 1e-12:
        return np.full_like(phases, 0.5)
    return (phases - lo) / (hi - lo)


def sanitize_observation(
    raw_phases: Sequence[float],
    layout: ChannelLayout,
    subcarrier_indices: Sequence[int] | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Sanitize a raw C-vector pair-by-pair, optionally min-max normalized.

    ``raw_phases`` holds ``layout.n_channels`` values in the fixed channel
    order; each antenna pair's block of ``n_subcarriers`` phases is
    detrended independently.
    """
    raw = np.asarray(raw_phases, dtype=float)
    if raw.shape != (layout.n_channels,):
        raise ValueError(
            f"expected {layout.n_channels} raw phases, got {raw.shape}"
        )
    if subcarrier_indices is None:
        k = np.arange(layout.n_subcarriers)
    else:
        k = np.asarray(subcarrier_indices)
    out = np.empty_like(raw)
    for sl in layout.pair_slices():
        out[sl] = sanitize_phase(raw[sl], k)
    if normalize:
        out = normalize_phases(out)
    return out


def denoise(
    observations: Sequence[CsiObservation],
    cfg: DenoiseConfig = DenoiseConfig(),
    location=None,
) -> DenoiseResult:
    """Screen one location's observations against the sigma bound.

    Per channel, the mean and standard deviation are taken across the
    whole set; an observation is rejected if any channel deviates from
    the channel mean by more than ``sigma_bound`` standard deviations.
    Channels with zero spread never reject.  Raises
    :class:`UnusableLocationError` if fewer than ``min_retained`` of the
    set survives.
    """
    if len(observations) < 3:
        raise ValueError(f"need at least 3 observations, got {len(observations)}")
    n_channels = observations[0].n_channels
    for obs in observations:
        if obs.n_channels != n_channels:
            raise ValueError("observations must share one channel layout")
    if location is None:
        location = observations[0].location

    stack = np.stack([obs.phases for obs in observations])  # (N, C)
    mu = stack.mean(axis=0)
    sigma = stack.std(axis=0)
    deviation = np.abs(stack - mu)
    bound = cfg.sigma_bound * sigma
    # sigma == 0 channels are constant across the set: never reject on them
    over = (deviation > bound) & (sigma > 0.0)

    retained: list[CsiObservation] = []
    rejected: list[CsiObservation] = []
    reasons: list[str | None] = []
    for i, obs in enumerate(observations):
        bad = np.flatnonzero(over[i])
        if bad.size:
            c = int(bad[0])
            rejected.append(obs)
            reasons.append(
                f"channel {c}: |{stack[i, c]:.6g} - {mu[c]:.6g}| "
                f"> {cfg.sigma_bound:g} * {sigma[c]:.6g}"
            )
        else:
            retained.append(obs)
            reasons.append(None)

    result = DenoiseResult(tuple(retained), tuple(rejected), tuple(reasons))
    if result.retained_fraction < cfg.min_retained:
        raise UnusableLocationError(location, len(retained), len(observations))
    return result


# --- observation file format (JSON Lines) ---------------------------------
#
# Header line:  {"layout": {"n_tx":3,"n_rx":3,"n_subcarriers":30}}
#               optional "raw": true and "subcarrier_indices": [...]
# Data lines:   {"t_ms": int, "x": float|null, "y": float|null,
#                "phases": [C floats]}


def write_observations(
    path: str | Path,
    layout: ChannelLayout,
    observations: Iterable[CsiObservation],
    raw: bool = False,
) -> None:
    path = Path(path)
    header: dict = {
        "layout": {
            "n_tx": layout.n_tx,
            "n_rx": layout.n_rx,
            "n_subcarriers": layout.n_subcarriers,
        }
    }
    if raw:
        header["raw"] = True
    with path.open("w") as f:
        f.write(json.dumps(header) + "\n")
        for obs in observations:
            x, y = obs.location if obs.location is not None else (None, None)
            rec = {
                "t_ms": obs.t_ms,
                "x": x,
                "y": y,
                "phases": [float(p) for p in obs.phases],
            }
            f.write(json.dumps(rec) + "\n")


def read_observations(
    path: str | Path,
    normalize: bool = True,
) -> tuple[ChannelLayout, list[CsiObservation]]:
    """Read an observation file; raw files are sanitized pair-by-pair on ingest."""
    path = Path(path)
    with path.open() as f:
        header = json.loads(f.readline())
        if "layout" not in header:
            raise ValueError(f"{path}: first line must carry the channel layout")
        lay = header["layout"]
        layout = ChannelLayout(int(lay["n_tx"]), int(lay["n_rx"]), int(lay["n_subcarriers"]))
        is_raw = bool(header.get("raw", False))
        k = header.get("subcarrier_indices")

        observations = []
        for line_no, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            phases = np.asarray(rec["phases"], dtype=float)
            if phases.shape != (layout.n_channels,):
                raise ValueError(
                    f"{path}:{line_no}: expected {layout.n_channels} phases, "
                    f"got {phases.shape[0]}"
                )
            if is_raw:
                phases = sanitize_observation(phases, layout, k, normalize=normalize)
            loc = None
            if rec.get("x") is not None and rec.get("y") is not None:
                loc = (float(rec["x"]), float(rec["y"]))
            observations.append(CsiObservation(int(rec["t_ms"]), phases, loc))
    return layout, observations
