"""Synthetic pedestrian walks and wireless-phase fields.

Stands in for a real measurement campaign: walks follow the same
dual-foot gait the trajectory filter predicts with, and each channel's
spatial fingerprint is a smooth seeded random field (a sum of Gaussian
bumps).  Observation noise is a small per-channel jitter plus rare
large bursts, so a location's observation set contains a few clear
outliers rather than a uniform fuzz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csi_core import ChannelLayout, CsiObservation, sanitize_observation
from .fingerprint_map import GridSpec
from .hypothesis_gen import LocationUpdate
from .walk_filter import PedestrianState, _neg_sin_integral, _pos_sin_integral

__all__ = [
    "WalkSimConfig",
    "CsiFieldConfig",
    "SimulatedWalk",
    "CsiField",
    "simulate_walk",
    "generate_csi_field",
    "collect_training_observations",
    "walk_to_observations",
    "inject_jump",
    "write_ground_truth_csv",
    "read_ground_truth_csv",
    "desk_scale_layout",
    "full_scale_layout",
]


def desk_scale_layout() -> ChannelLayout:
    """9 antenna pairs x 4 subcarriers = 36 channels (fast CI scale)."""
    return ChannelLayout(n_tx=3, n_rx=3, n_subcarriers=4)


def full_scale_layout() -> ChannelLayout:
    """9 antenna pairs x 30 subcarriers = 270 channels."""
    return ChannelLayout(n_tx=3, n_rx=3, n_subcarriers=30)


@dataclass(frozen=True)
class WalkSimConfig:
    """Gait parameter distributions and walk geometry.

    Speed is redrawn each step (half gait cycle) from a truncated
    Gaussian; the step period follows as T = 2S/v, clamped to its
    bounds.  Heading turns happen at step boundaries.  When ``bounds``
    is set the walker rotates toward the area center, at most
    ``boundary_turn`` radians per step, whenever a step boundary finds
    it within ``bounds_margin`` of the edge; the midpoint is clamped
    inside the bounds as a backstop while the turn completes.
    """

    duration_s: float = 8.0
    tick_s: float = 0.2
    speed_mean: float = 1.0
    speed_sigma: float = 0.2
    speed_min: float = 0.2
    speed_max: float = 3.0
    stride_mean: float = 0.7
    stride_sigma: float = 0.1
    stride_bounds: tuple[float, float] = (0.3, 1.2)
    period_bounds: tuple[float, float] = (0.35, 1.5)
    turn_sigma: float = 0.3
    max_step_turn: float = math.pi / 2
    start: tuple[float, float] = (0.0, 0.0)
    start_heading: float | None = None
    # (xmin, xmax, ymin, ymax)
    bounds: tuple[float, float, float, float] | None = None
    bounds_margin: float = 0.8
    boundary_turn: float = 0.9  # max steer per step; keeps turns trackable
    update_period_s: float = 1.0
    update_sigma: float = 0.1
    update_c: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.duration_s < 1.0:
            raise ValueError("duration must be >= 1 s")
        if self.tick_s <= 0:
            raise ValueError("tick must be positive")
        for s in (self.speed_sigma, self.stride_sigma, self.turn_sigma, self.update_sigma):
            if s < 0:
                raise ValueError("sigmas must be >= 0")
        if not 0 < self.speed_min <= self.speed_max <= 3.0:
            raise ValueError("speeds must satisfy 0 < min <= max <= 3 m/s")
        if self.update_c is not None and not 0 < self.update_c < 1:
            raise ValueError("update_c must lie in (0, 1)")
        if self.boundary_turn <= 0:
            raise ValueError("boundary_turn must be positive")


@dataclass(frozen=True)
class SimulatedWalk:
    """Per-tick ground-truth states plus the noisy update stream."""

    t_ms: np.ndarray
    states: tuple[PedestrianState, ...]
    updates: tuple[LocationUpdate, ...]
    tick_s: float

    def midpoints(self) -> np.ndarray:
        return np.array(
            [(0.5 * (s.l_x + s.r_x), 0.5 * (s.l_y + s.r_y)) for s in self.states]
        )


def _trunc_normal_scalar(
    rng: np.random.Generator, mean: float, sigma: float, lo: float, hi: float
) -> float:
    if sigma == 0:
        return float(min(max(mean, lo), hi))
    while True:
        v = rng.normal(mean, sigma)
        if lo <= v <= hi:
            return float(v)


def simulate_walk(cfg: WalkSimConfig = WalkSimConfig()) -> SimulatedWalk:
    """Generate one seeded walk.

    Feet advance with the exact integral of S*|sin(gamma)| per tick
    (the same kinematics the trajectory filter predicts with), so the
    along-heading foot offset equals -S*cos(gamma) up to the small
    residue left by heading turns.  Noisy location updates of the body
    midpoint are emitted every ``update_period_s`` with confidence
    c = 1 - update_sigma, or ``update_c`` when set (a source may claim
    less accuracy than it delivers).
    """
    rng = np.random.default_rng(cfg.seed)
    stride = _trunc_normal_scalar(
        rng, cfg.stride_mean, cfg.stride_sigma, *cfg.stride_bounds
    )
    speed = _trunc_normal_scalar(rng, cfg.speed_mean, cfg.speed_sigma, cfg.speed_min, cfg.speed_max)
    period = float(np.clip(2.0 * stride / speed, *cfg.period_bounds))
    theta = (
        rng.uniform(0.0, 2.0 * math.pi) if cfg.start_heading is None else float(cfg.start_heading)
    )
    gamma = rng.uniform(0.0, 2.0 * math.pi)
    mx, my = cfg.start
    d0 = -stride * math.cos(gamma)
    lx = mx - 0.5 * d0 * math.cos(theta)
    ly = my - 0.5 * d0 * math.sin(theta)
    rx = mx + 0.5 * d0 * math.cos(theta)
    ry = my + 0.5 * d0 * math.sin(theta)

    n_ticks = round(cfg.duration_s / cfg.tick_s)
    updates_every = max(1, round(cfg.update_period_s / cfg.tick_s))
    conf = (1.0 - cfg.update_sigma) if cfg.update_c is None else cfg.update_c

    states = [PedestrianState(lx, ly, rx, ry, theta, gamma, stride, period)]
    t_ms = [0]
    updates = [
        LocationUpdate(
            mx + rng.normal(0.0, cfg.update_sigma),
            my + rng.normal(0.0, cfg.update_sigma),
            conf,
            0.0,
        )
    ]
    def advance_feet(g0: float, g1: float) -> None:
        nonlocal lx, ly, rx, ry
        a0, a1 = np.array([g0]), np.array([g1])
        adv_r = stride * float(_pos_sin_integral(a1)[0] - _pos_sin_integral(a0)[0])
        adv_l = stride * float(_neg_sin_integral(a1)[0] - _neg_sin_integral(a0)[0])
        ux, uy = math.cos(theta), math.sin(theta)
        rx += adv_r * ux
        ry += adv_r * uy
        lx += adv_l * ux
        ly += adv_l * uy

    for i in range(1, n_ticks + 1):
        # heading turns and re-pacing happen exactly as the feet pass
        # each other (gamma = pi/2 mod pi, where separation is zero),
        # so the foot-offset pattern -S*cos(gamma) survives any turn;
        # the tick is split at each passing moment it contains
        remaining = cfg.tick_s
        while True:
            omega = 2.0 * math.pi / period
            g_end = gamma + omega * remaining
            k = math.floor((gamma - math.pi / 2) / math.pi) + 1
            crossing = math.pi / 2 + k * math.pi
            if crossing >= g_end:
                advance_feet(gamma, g_end)
                gamma = g_end % (2.0 * math.pi)
                break
            advance_feet(gamma, crossing)
            remaining -= (crossing - gamma) / omega
            gamma = crossing
            turn = float(
                np.clip(rng.normal(0.0, cfg.turn_sigma), -cfg.max_step_turn, cfg.max_step_turn)
            )
            theta += turn
            if cfg.bounds is not None:
                xmin, xmax, ymin, ymax = cfg.bounds
                cx_now, cy_now = 0.5 * (lx + rx), 0.5 * (ly + ry)
                near_edge = (
                    cx_now < xmin + cfg.bounds_margin or cx_now > xmax - cfg.bounds_margin
                    or cy_now < ymin + cfg.bounds_margin or cy_now > ymax - cfg.bounds_margin
                )
                if near_edge:
                    desired = math.atan2(
                        0.5 * (ymin + ymax) - cy_now, 0.5 * (xmin + xmax) - cx_now
                    )
                    diff = math.atan2(math.sin(desired - theta), math.cos(desired - theta))
                    theta += float(np.clip(diff, -cfg.boundary_turn, cfg.boundary_turn))
            speed = _trunc_normal_scalar(
                rng, cfg.speed_mean, cfg.speed_sigma, cfg.speed_min, cfg.speed_max
            )
            period = float(np.clip(2.0 * stride / speed, *cfg.period_bounds))
        if cfg.bounds is not None:
            # backstop: slide along the wall while a boundary turn completes
            xmin, xmax, ymin, ymax = cfg.bounds
            cx_now, cy_now = 0.5 * (lx + rx), 0.5 * (ly + ry)
            sx = min(max(cx_now, xmin), xmax) - cx_now
            sy = min(max(cy_now, ymin), ymax) - cy_now
            if sx or sy:
                lx += sx
                rx += sx
                ly += sy
                ry += sy
        states.append(PedestrianState(lx, ly, rx, ry, theta, gamma, stride, period))
        t_ms.append(round(i * cfg.tick_s * 1000))
        if i % updates_every == 0:
            mx, my = 0.5 * (lx + rx), 0.5 * (ly + ry)
            updates.append(
                LocationUpdate(
                    mx + rng.normal(0.0, cfg.update_sigma),
                    my + rng.normal(0.0, cfg.update_sigma),
                    conf,
                    float(len(updates)),
                )
            )
    return SimulatedWalk(np.array(t_ms), tuple(states), tuple(updates), cfg.tick_s)


def inject_jump(
    updates: tuple[LocationUpdate, ...],
    offset_m: float = 4.0,
    at_fraction: float = 0.5,
    direction: float = 0.0,
) -> tuple[LocationUpdate, ...]:
    """Displace the trajectory tail to fake a superhuman jump.

    From the update at ``at_fraction`` of the way through, every
    point shifts by ``offset_m`` along ``direction``; with 1 s update
    spacing the default 4 m offset is a 4 m/s jump.
    """
    if len(updates) < 3:
        raise ValueError("need at least 3 updates")
    j = min(max(1, round(at_fraction * (len(updates) - 1))), len(updates) - 1)
    dx = offset_m * math.cos(direction)
    dy = offset_m * math.sin(direction)
    out = list(updates[:j])
    for u in updates[j:]:
        out.append(LocationUpdate(u.x + dx, u.y + dy, u.c, u.t_index))
    return tuple(out)


@dataclass(frozen=True)
class CsiFieldConfig:
    """Spatial field shape and observation noise model.

    Each channel is an independent sum of ``n_bumps`` Gaussian bumps
    of width ``length_scale`` scattered over the grid box (plus
    margin), so points a few length-scales apart decorrelate.  An
    observation adds per-channel Gaussian jitter; with probability
    ``burst_prob`` the whole capture is garbled (every channel
    replaced by a uniform random phase), modeling the corrupted
    readings a collection session sees.  Garbles are what the outlier
    screen exists to remove: they also widen every channel's sample
    sigma, keeping the screen's 2-sigma bound clear of the tight
    cluster of clean captures.  ``drift_per_day`` scales a second bump
    field added as the capture day advances.
    """

    layout: ChannelLayout = field(default_factory=desk_scale_layout)
    grid: GridSpec = field(default_factory=lambda: GridSpec(6, 6))
    length_scale: float = 1.5
    n_bumps: int = 60
    field_amplitude: float = 1.0
    noise_sigma: float = 0.05
    burst_prob: float = 0.05
    drift_per_day: float = 0.0
    affine_slope_max: float = 0.8
    affine_offset_max: float = math.pi
    seed: int = 0

    def __post_init__(self):
        if self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if self.n_bumps < 1:
            raise ValueError("n_bumps must be >= 1")
        if not 0 <= self.burst_prob < 1:
            raise ValueError("burst_prob must be in [0, 1)")


class CsiField:
    """Seeded smooth per-channel fields over the grid area."""

    def __init__(self, cfg: CsiFieldConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        C = cfg.layout.n_channels
        pad = 2.0 * cfg.length_scale
        g = cfg.grid
        x0, y0 = g.origin
        lo = np.array([x0 - pad, y0 - pad])
        hi = np.array([x0 + g.width_cells * g.cell_size_m + pad,
                       y0 + g.height_cells * g.cell_size_m + pad])
        shape = (C, cfg.n_bumps)
        self._centers = rng.uniform(lo, hi, size=shape + (2,))
        amp = cfg.field_amplitude / math.sqrt(cfg.n_bumps)
        self._amps = rng.normal(0.0, amp, size=shape)
        self._drift_centers = rng.uniform(lo, hi, size=shape + (2,))
        self._drift_amps = rng.normal(0.0, amp, size=shape)

    def vector(self, x: float, y: float, day: float = 0.0) -> np.ndarray:
        """Noise-free C-channel field value at a point."""
        p = np.array([x, y])
        d2 = np.sum((self._centers - p) ** 2, axis=-1)
        k = np.exp(-d2 / (2.0 * self.cfg.length_scale**2))
        out = np.sum(self._amps * k, axis=1)
        if self.cfg.drift_per_day != 0.0 and day != 0.0:
            d2d = np.sum((self._drift_centers - p) ** 2, axis=-1)
            kd = np.exp(-d2d / (2.0 * self.cfg.length_scale**2))
            out = out + self.cfg.drift_per_day * day * np.sum(self._drift_amps * kd, axis=1)
        return out

    def raw_observation(
        self,
        x: float,
        y: float,
        t_ms: int,
        rng: np.random.Generator,
        day: float = 0.0,
        location: tuple[float, float] | None = None,
        garble: bool | None = None,
    ) -> CsiObservation:
        """Field value dressed as a raw capture.

        Adds per-antenna-pair affine phase ramps (the timing and phase
        offsets sanitization exists to remove) and Gaussian jitter.
        ``garble=None`` corrupts the capture with probability
        ``burst_prob``; True/False forces or suppresses it, letting
        collection sessions draw an exact corruption count.
        """
        cfg = self.cfg
        layout = cfg.layout
        if garble is None:
            garble = cfg.burst_prob > 0 and rng.random() < cfg.burst_prob
        if garble:
            phases = rng.uniform(-math.pi, math.pi, layout.n_channels)
        else:
            phases = self.vector(x, y, day).copy()
            phases += rng.normal(0.0, cfg.noise_sigma, phases.size)
        k = np.arange(layout.n_subcarriers, dtype=float)
        for sl in layout.pair_slices():
            a = rng.uniform(-cfg.affine_slope_max, cfg.affine_slope_max)
            b = rng.uniform(-cfg.affine_offset_max, cfg.affine_offset_max)
            phases[sl] += a * k + b
        return CsiObservation(t_ms=int(t_ms), phases=phases, location=location)


def generate_csi_field(cfg: CsiFieldConfig = CsiFieldConfig()) -> CsiField:
    return CsiField(cfg)


def collect_training_observations(
    field: CsiField, m: int = 40, spacing_ms: int = 200, day: float = 0.0, seed: int | None = None
) -> list[CsiObservation]:
    """m raw captures at every cell center, in interleaved rounds.

    Round i visits all cells in class order, so the i-th observation
    of every cell carries nearby timestamps; binning by arrival order
    then yields time-coherent fingerprint maps.  Every cell receives
    exactly round(burst_prob * m) garbled captures so each location's
    outlier screen sees the same corruption load.
    """
    cfg = field.cfg
    g = cfg.grid
    rng = np.random.default_rng(field.cfg.seed + 1 if seed is None else seed)
    cells = [(col, row) for row in range(g.height_cells) for col in range(g.width_cells)]
    garbled = _garble_rounds(rng, len(cells), m, cfg.burst_prob)
    out = []
    for i in range(m):
        for ci, (col, row) in enumerate(cells):
            x, y = g.cell_center(col, row)
            t = (i * len(cells) + ci) * spacing_ms
            out.append(field.raw_observation(
                x, y, t, rng, day=day, location=(x, y), garble=i in garbled[ci]
            ))
    return out


def _garble_rounds(
    rng: np.random.Generator, n_locations: int, m: int, burst_prob: float
) -> list[set[int]]:
    k = round(burst_prob * m)
    if k == 0:
        return [set() for _ in range(n_locations)]
    return [set(rng.choice(m, size=k, replace=False).tolist()) for _ in range(n_locations)]


def collect_null_observations(
    field: CsiField,
    n_points: int = 8,
    m: int = 40,
    margin_m: float = 1.5,
    spacing_ms: int = 200,
    day: float = 0.0,
    seed: int | None = None,
) -> list[CsiObservation]:
    """m raw captures at each of n_points locations outside the grid.

    Points sit on a ring ``margin_m`` beyond the grid edge; their
    observations train the no-detected-location class.  Timestamps and
    the per-point corruption load are interleaved like the in-grid
    collection.
    """
    cfg = field.cfg
    g = cfg.grid
    rng = np.random.default_rng(field.cfg.seed + 3 if seed is None else seed)
    ox, oy = g.origin
    cx = ox + 0.5 * (g.width_cells - 1) * g.cell_size_m
    cy = oy + 0.5 * (g.height_cells - 1) * g.cell_size_m
    rad_x = 0.5 * g.width_cells * g.cell_size_m + margin_m
    rad_y = 0.5 * g.height_cells * g.cell_size_m + margin_m
    points = [
        (cx + rad_x * math.cos(2 * math.pi * k / n_points),
         cy + rad_y * math.sin(2 * math.pi * k / n_points))
        for k in range(n_points)
    ]
    garbled = _garble_rounds(rng, len(points), m, cfg.burst_prob)
    out = []
    for i in range(m):
        for pi, (x, y) in enumerate(points):
            t = (i * n_points + pi) * spacing_ms
            out.append(field.raw_observation(
                x, y, t, rng, day=day, location=(x, y), garble=i in garbled[pi]
            ))
    return out


def walk_to_observations(
    walk: SimulatedWalk, field: CsiField, day: float = 0.0, seed: int | None = None
) -> tuple[list[CsiObservation], list[tuple[int, float, float, int]]]:
    """Raw captures along a walk plus the ground-truth sidecar.

    One observation per tick at the body midpoint, unlabeled (the
    pipeline under test must infer the location).  The sidecar rows
    are (t_ms, x, y, class), class being the nearest cell's class or
    the null class once the walker leaves the grid.
    """
    cfg = field.cfg
    rng = np.random.default_rng(cfg.seed + 2 if seed is None else seed)
    mids = walk.midpoints()
    observations = []
    truth = []
    for i in range(len(walk.states)):
        x, y = float(mids[i, 0]), float(mids[i, 1])
        t = int(walk.t_ms[i])
        observations.append(field.raw_observation(x, y, t, rng, day=day, location=None))
        truth.append((t, x, y, cfg.grid.class_at(x, y)))
    return observations, truth


def write_ground_truth_csv(path: str | Path, truth: list[tuple[int, float, float, int]]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ms", "x", "y", "class"])
        for t, x, y, cls in truth:
            writer.writerow([t, repr(x), repr(y), cls])


def read_ground_truth_csv(path: str | Path) -> list[tuple[int, float, float, int]]:
    import csv

    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append((int(rec["t_ms"]), float(rec["x"]), float(rec["y"]), int(rec["class"])))
    return out


_STATE_FIELDS = ("l_x", "l_y", "r_x", "r_y", "theta", "gamma", "stride", "step_period")


def write_states_csv(path: str | Path, walk: SimulatedWalk) -> None:
    """Full per-tick pedestrian states, for heading/stride scoring."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ms", *_STATE_FIELDS])
        for t, s in zip(walk.t_ms, walk.states):
            writer.writerow([int(t), *(repr(getattr(s, f)) for f in _STATE_FIELDS)])


def read_states_csv(path: str | Path) -> tuple[np.ndarray, tuple[PedestrianState, ...]]:
    import csv

    t_ms, states = [], []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            t_ms.append(int(rec["t_ms"]))
            states.append(PedestrianState(*(float(rec[f]) for f in _STATE_FIELDS)))
    return np.asarray(t_ms), tuple(states)


def sanitize_walk_observations(
    observations: list[CsiObservation], layout: ChannelLayout, normalize: bool = True
) -> list[CsiObservation]:
    """Sanitize a raw capture stream in place of file round-tripping."""
    return [
        CsiObservation(
            t_ms=o.t_ms,
            phases=sanitize_observation(o.phases, layout, normalize=normalize),
            location=o.location,
        )
        for o in observations
    ]
