"""Dual-foot particle filter for trajectory hypothesis vetting.

Each pedestrian particle carries both feet, heading, walk phase gamma,
stride S and step period T.  Feet alternate: while gamma crosses
[0, pi) the right foot swings and the left stands, then they switch.
The along-heading foot offset follows the reference pattern
d0 = -S*cos(gamma), so per prediction tick the swing foot advances by
the exact integral of S*|sin(gamma)| over the tick's phase interval.
A hypothesis whose location updates cannot be explained by this model
starves the weights or forces constant resampling and is rejected.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fingerprint_map import GridSpec
from .hypothesis_gen import TrajectoryHypothesis

__all__ = [
    "PedestrianState",
    "Particle",
    "FilterConfig",
    "ParticleSet",
    "UpdateDiagnostics",
    "Estimate",
    "TrackResult",
    "SelectedTrajectory",
    "AllHypothesesRejectedError",
    "init_particles",
    "predict",
    "update",
    "systematic_resample",
    "maybe_resample",
    "track_hypothesis",
    "select_trajectory",
    "write_trajectory_csv",
    "write_rejections_csv",
]

TICK_S = 0.2  # estimates every 200 ms


@dataclass(frozen=True)
class PedestrianState:
    """Dual-foot walker state: feet, heading, phase, stride, period."""

    l_x: float
    l_y: float
    r_x: float
    r_y: float
    theta: float
    gamma: float
    stride: float
    step_period: float

    def __post_init__(self):
        sep = math.hypot(self.r_x - self.l_x, self.r_y - self.l_y)
        if sep > 1.5 * self.stride + 1e-9:
            raise ValueError(f"foot separation {sep:.3f} exceeds 1.5x stride")


@dataclass(frozen=True)
class Particle:
    state: PedestrianState
    weight: float


@dataclass(frozen=True)
class FilterConfig:
    """Filter size, measurement kernel, rejection rules, process noise.

    ``h`` is the bandwidth of the walking-pattern kernel (meters).
    Ordinary resampling triggers at N_eff < resample_neff_frac * J;
    with tight location updates that fires at most updates and is the
    filter's healthy mode.  What counts against a hypothesis is a
    collapse: an update whose N_eff lands below reject_neff_frac * J,
    meaning essentially no particle explains the update.  A hypothesis
    is rejected when the unnormalized weight sum drops below
    ``weight_underflow_eps`` or when more than
    ``reject_resample_count`` collapse resamplings land inside any
    window of ``reject_window_updates`` consecutive updates.  Process
    noise sigmas apply per 200 ms prediction tick.
    """

    n_particles: int = 500
    h: float = 0.1
    resample_neff_frac: float = 0.5
    reject_resample_count: int = 3
    reject_window_updates: int = 5
    reject_neff_frac: float = 0.005
    weight_underflow_eps: float = 1e-30
    sigma_theta: float = 0.03
    sigma_stride: float = 0.008
    sigma_period: float = 0.002
    stride_bounds: tuple[float, float] = (0.3, 1.2)
    period_bounds: tuple[float, float] = (0.35, 1.5)
    init_stride_mean: float = 0.7
    init_stride_sigma: float = 0.12
    init_period_mean: float = 1.1
    init_period_sigma: float = 0.15
    max_confidence: float = 0.99
    rng_seed: int = 0

    def __post_init__(self):
        positive = (
            self.n_particles, self.h, self.resample_neff_frac,
            self.reject_resample_count, self.reject_window_updates,
            self.reject_neff_frac, self.weight_underflow_eps,
            self.sigma_theta, self.sigma_stride,
            self.sigma_period, self.init_stride_sigma, self.init_period_sigma,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("all filter parameters must be positive")
        for lo, hi in (self.stride_bounds, self.period_bounds):
            if not 0 < lo < hi:
                raise ValueError("bounds must be ordered and positive")
        if not 0 < self.max_confidence < 1:
            raise ValueError("max_confidence must be in (0, 1)")


@dataclass
class ParticleSet:
    """Vectorized particle store; all arrays have length J."""

    lx: np.ndarray
    ly: np.ndarray
    rx: np.ndarray
    ry: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    stride: np.ndarray
    period: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.lx.size

    def particle(self, j: int) -> Particle:
        return Particle(
            PedestrianState(
                self.lx[j], self.ly[j], self.rx[j], self.ry[j],
                self.theta[j], self.gamma[j], self.stride[j], self.period[j],
            ),
            float(self.weights[j]),
        )


@dataclass(frozen=True)
class UpdateDiagnostics:
    sum_unnormalized: float
    n_eff: float
    underflow: bool


@dataclass(frozen=True)
class Estimate:
    tau_ms: int
    x: float
    y: float
    theta: float
    stride: float


@dataclass(frozen=True)
class TrackResult:
    hypothesis_id: int
    accepted: bool
    mean_confidence: float
    estimates: tuple[Estimate, ...]
    reject_reason: str | None = None
    reject_update_index: int | None = None
    n_resamples: int = 0


@dataclass(frozen=True)
class SelectedTrajectory:
    hypothesis_id: int
    estimates: tuple[Estimate, ...]
    snapped_cells: tuple[tuple[int, int], ...]


class AllHypothesesRejectedError(RuntimeError):
    pass


def _truncated_normal(
    rng: np.random.Generator, mean: float, sigma: float,
    lo: float, hi: float, size: int,
) -> np.ndarray:
    x = rng.normal(mean, sigma, size)
    bad = (x < lo) | (x > hi)
    while np.any(bad):
        x[bad] = rng.normal(mean, sigma, int(bad.sum()))
        bad = (x < lo) | (x > hi)
    return x


def init_particles(
    x: float, y: float, c: float, cfg: FilterConfig, rng: np.random.Generator
) -> ParticleSet:
    """Prior cloud around the first location update.

    Stride and period come from truncated Gaussians inside their
    bounds, heading and phase are uniform, and the feet are placed
    symmetrically about the (noisy) midpoint along the heading at the
    offset -S*cos(gamma) the walking pattern prescribes.  All weights
    start at 1/J.
    """
    J = cfg.n_particles
    c = min(float(c), cfg.max_confidence)
    sigma0 = 1.0 - c
    stride = _truncated_normal(
        rng, cfg.init_stride_mean, cfg.init_stride_sigma, *cfg.stride_bounds, J
    )
    period = _truncated_normal(
        rng, cfg.init_period_mean, cfg.init_period_sigma, *cfg.period_bounds, J
    )
    theta = rng.uniform(0.0, 2.0 * np.pi, J)
    gamma = rng.uniform(0.0, 2.0 * np.pi, J)
    mid_x = x + rng.normal(0.0, sigma0, J)
    mid_y = y + rng.normal(0.0, sigma0, J)
    d0 = -stride * np.cos(gamma)
    ux, uy = np.cos(theta), np.sin(theta)
    return ParticleSet(
        lx=mid_x - 0.5 * d0 * ux,
        ly=mid_y - 0.5 * d0 * uy,
        rx=mid_x + 0.5 * d0 * ux,
        ry=mid_y + 0.5 * d0 * uy,
        theta=theta,
        gamma=gamma,
        stride=stride,
        period=period,
        weights=np.full(J, 1.0 / J),
    )


def _pos_sin_integral(g: np.ndarray) -> np.ndarray:
    """Antiderivative of max(sin, 0): grows by 2 per full cycle."""
    k, u = np.divmod(g, 2.0 * np.pi)
    return 2.0 * k + np.where(u <= np.pi, 1.0 - np.cos(u), 2.0)


def _neg_sin_integral(g: np.ndarray) -> np.ndarray:
    """Antiderivative of max(-sin, 0)."""
    k, u = np.divmod(g, 2.0 * np.pi)
    return 2.0 * k + np.where(u <= np.pi, 0.0, 1.0 + np.cos(u))


def predict(
    ps: ParticleSet, dt: float, cfg: FilterConfig, rng: np.random.Generator
) -> ParticleSet:
    """Advance the walk phase and move the swing foot.

    The phase advances by 2*pi*dt/T.  Over the tick's phase interval
    the right foot moves by S * integral of max(sin g, 0) dg and the
    left by S * integral of max(-sin g, 0) dg, both along the heading,
    which keeps the along-heading foot offset equal to -S*cos(gamma)
    exactly.  The stance foot's integral is identically zero within a
    half-cycle, so its position is bit-unchanged.  Heading, stride and
    period pick up zero-mean Gaussian noise first; stride and period
    are clamped to their bounds.
    """
    ps.theta = ps.theta + rng.normal(0.0, cfg.sigma_theta, ps.size)
    ps.stride = np.clip(
        ps.stride + rng.normal(0.0, cfg.sigma_stride, ps.size), *cfg.stride_bounds
    )
    ps.period = np.clip(
        ps.period + rng.normal(0.0, cfg.sigma_period, ps.size), *cfg.period_bounds
    )
    dgamma = 2.0 * np.pi * dt / ps.period
    g0 = ps.gamma
    g1 = g0 + dgamma
    adv_r = ps.stride * (_pos_sin_integral(g1) - _pos_sin_integral(g0))
    adv_l = ps.stride * (_neg_sin_integral(g1) - _neg_sin_integral(g0))
    ux, uy = np.cos(ps.theta), np.sin(ps.theta)
    ps.rx = ps.rx + adv_r * ux
    ps.ry = ps.ry + adv_r * uy
    ps.lx = ps.lx + adv_l * ux
    ps.ly = ps.ly + adv_l * uy
    ps.gamma = np.mod(g1, 2.0 * np.pi)
    return ps


def update(
    ps: ParticleSet, x: float, y: float, c: float, cfg: FilterConfig
) -> UpdateDiagnostics:
    """Reweight particles against one location update Z = (x, y, c).

    With s = 1 - c (c clamped to at most max_confidence):
      p_L = (1/(sqrt(2 pi) s)) * exp(-((l_x-x)^2 + (l_y-y)^2) / (2 s^2))
      p_R = likewise for the right foot
      d0  = (r_x-l_x) cos(theta) + (r_y-l_y) sin(theta)
      r0  = -S cos(gamma)
      p_B = (1/(sqrt(2 pi) h)) * exp(-(d0-r0)^2 / (2 h^2))
    The unnormalized weight is p_L * p_R * p_B; weights are then
    normalized to sum 1.  An unnormalized sum below
    weight_underflow_eps flags underflow and leaves weights uniform so
    downstream code stays numerically safe.
    """
    c = min(float(c), cfg.max_confidence)
    s = 1.0 - c
    norm_s = 1.0 / (math.sqrt(2.0 * math.pi) * s)
    norm_h = 1.0 / (math.sqrt(2.0 * math.pi) * cfg.h)
    p_l = norm_s * np.exp(-((ps.lx - x) ** 2 + (ps.ly - y) ** 2) / (2.0 * s * s))
    p_r = norm_s * np.exp(-((ps.rx - x) ** 2 + (ps.ry - y) ** 2) / (2.0 * s * s))
    d0 = (ps.rx - ps.lx) * np.cos(ps.theta) + (ps.ry - ps.ly) * np.sin(ps.theta)
    r0 = -ps.stride * np.cos(ps.gamma)
    p_b = norm_h * np.exp(-((d0 - r0) ** 2) / (2.0 * cfg.h * cfg.h))
    w = p_l * p_r * p_b
    total = float(w.sum())
    if total < cfg.weight_underflow_eps:
        ps.weights = np.full(ps.size, 1.0 / ps.size)
        return UpdateDiagnostics(total, float(ps.size), True)
    ps.weights = w / total
    n_eff = 1.0 / float(np.sum(ps.weights**2))
    return UpdateDiagnostics(total, n_eff, False)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: offspring indices for normalized weights.

    One uniform draw strides the CDF at 1/J spacing, so each particle
    appears floor(J*w) or ceil(J*w) times.
    """
    J = weights.size
    positions = (rng.random() + np.arange(J)) / J
    return np.searchsorted(np.cumsum(weights), positions)


def maybe_resample(ps: ParticleSet, cfg: FilterConfig, rng: np.random.Generator) -> bool:
    """Resample systematically when N_eff < resample_neff_frac * J."""
    n_eff = 1.0 / float(np.sum(ps.weights**2))
    if n_eff >= cfg.resample_neff_frac * ps.size:
        return False
    idx = systematic_resample(ps.weights, rng)
    for name in ("lx", "ly", "rx", "ry", "theta", "gamma", "stride", "period"):
        setattr(ps, name, getattr(ps, name)[idx].copy())
    ps.weights = np.full(ps.size, 1.0 / ps.size)
    return True


def _estimate(ps: ParticleSet, tau_ms: int) -> Estimate:
    w = ps.weights
    mx = float(np.sum(w * 0.5 * (ps.lx + ps.rx)))
    my = float(np.sum(w * 0.5 * (ps.ly + ps.ry)))
    theta = float(np.arctan2(np.sum(w * np.sin(ps.theta)), np.sum(w * np.cos(ps.theta))))
    stride = float(np.sum(w * ps.stride))
    return Estimate(tau_ms, mx, my, theta, stride)


def track_hypothesis(
    hypothesis: TrajectoryHypothesis,
    cfg: FilterConfig = FilterConfig(),
    update_period_s: float = 1.0,
) -> TrackResult:
    """Run one filter over a hypothesis's updates; accept or reject.

    The first update seeds the prior cloud.  The filter then predicts
    every 200 ms and folds in each subsequent update at its arrival
    tick, recording a weighted-mean estimate (feet midpoint, circular
    mean heading, mean stride) every tick.  Rejection happens on
    weight underflow or when more than reject_resample_count collapse
    resamplings (N_eff below reject_neff_frac * J) fall inside any
    reject_window_updates consecutive updates.  Randomness is seeded
    per (cfg.rng_seed, hypothesis.id).
    """
    updates = hypothesis.updates
    if len(updates) < 5:
        raise ValueError("hypothesis must carry at least 5 updates")
    if update_period_s <= 0:
        raise ValueError("update_period_s must be positive")
    # nearest whole tick count; off-grid periods shrink/stretch the tick
    ticks_per_update = max(1, round(update_period_s / TICK_S))
    dt = update_period_s / ticks_per_update
    rng = np.random.default_rng((cfg.rng_seed, hypothesis.id))
    first = updates[0]
    ps = init_particles(first.x, first.y, first.c, cfg, rng)
    estimates = [_estimate(ps, 0)]
    resample_at: list[int] = []
    n_resamples = 0
    tau_ms = 0
    for k in range(1, len(updates)):
        for j in range(ticks_per_update):
            predict(ps, dt, cfg, rng)
            tau_ms = round(((k - 1) + (j + 1) / ticks_per_update) * update_period_s * 1000)
            estimates.append(_estimate(ps, tau_ms))
        z = updates[k]
        diag = update(ps, z.x, z.y, z.c, cfg)
        if diag.underflow:
            return TrackResult(
                hypothesis.id, False, hypothesis.mean_confidence,
                tuple(estimates), "weight_underflow", k, n_resamples,
            )
        collapsed = diag.n_eff < cfg.reject_neff_frac * ps.size
        if maybe_resample(ps, cfg, rng):
            n_resamples += 1
            if collapsed:
                resample_at.append(k)
                recent = [i for i in resample_at if k - i < cfg.reject_window_updates]
                if len(recent) > cfg.reject_resample_count:
                    return TrackResult(
                        hypothesis.id, False, hypothesis.mean_confidence,
                        tuple(estimates), "frequent_resampling", k, n_resamples,
                    )
        estimates[-1] = _estimate(ps, tau_ms)
    return TrackResult(
        hypothesis.id, True, hypothesis.mean_confidence,
        tuple(estimates), None, None, n_resamples,
    )


def select_trajectory(results: list[TrackResult], grid: GridSpec) -> SelectedTrajectory:
    """Pick the surviving hypothesis with the highest mean confidence.

    Ties break toward the lowest hypothesis id.  Estimates snap to
    their nearest cell centers; consecutive duplicates collapse so the
    cell list reads as the visited path.
    """
    survivors = [r for r in results if r.accepted]
    if not survivors:
        raise AllHypothesesRejectedError("all hypotheses rejected")
    best = min(survivors, key=lambda r: (-r.mean_confidence, r.hypothesis_id))
    cells: list[tuple[int, int]] = []
    for e in best.estimates:
        cell = grid.nearest_cell(e.x, e.y)
        if not cells or cells[-1] != cell:
            cells.append(cell)
    return SelectedTrajectory(best.hypothesis_id, best.estimates, tuple(cells))


def write_trajectory_csv(path: str | Path, results: list[TrackResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "tau_ms", "x", "y", "theta", "stride"])
        for r in results:
            if not r.accepted:
                continue
            for e in r.estimates:
                writer.writerow(
                    [r.hypothesis_id, e.tau_ms, repr(e.x), repr(e.y), repr(e.theta), repr(e.stride)]
                )


def write_rejections_csv(path: str | Path, results: list[TrackResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "reason", "update_index"])
        for r in results:
            if r.accepted:
                continue
            writer.writerow([r.hypothesis_id, r.reject_reason, r.reject_update_index])
