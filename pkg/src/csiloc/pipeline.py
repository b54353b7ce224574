"""File-composed pipeline stages, configuration, and scoring.

Each stage reads the previous stage's files and writes its own, so any
step can be rerun or inspected in isolation.  All randomness derives
from one global seed (overridable with the CSILOC_SEED environment
variable); outputs are byte-identical across reruns with a fixed seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .csi_core import (
    ChannelLayout,
    CsiObservation,
    DenoiseConfig,
    denoise,
    normalize_phases,
    read_observations,
    write_observations,
)
from .fingerprint_map import (
    GridSpec,
    MapSequence,
    build_map_sequence,
    query_proposal,
    read_map_dataset,
    write_map_dataset,
)
from .hypothesis_gen import (
    HypothesisConfig,
    LocationUpdate,
    NullBeliefError,
    TrajectoryHypothesis,
    generate_hypotheses,
    read_hypotheses_csv,
    write_hypotheses_csv,
)
from .neuralnet import (
    BeliefVector,
    Model,
    ModelConfig,
    TrainConfig,
    build_model,
    build_training_sequences,
    build_vector_sequences,
    forward_batch,
    load_model,
    lstm_only_config,
    null_training_sequences,
    save_model,
    train,
)
from .simulator import (
    CsiFieldConfig,
    WalkSimConfig,
    collect_null_observations,
    collect_training_observations,
    desk_scale_layout,
    generate_csi_field,
    read_ground_truth_csv,
    read_states_csv,
    simulate_walk,
    walk_to_observations,
    write_ground_truth_csv,
    write_states_csv,
)
from .walk_filter import (
    AllHypothesesRejectedError,
    Estimate,
    FilterConfig,
    SelectedTrajectory,
    TrackResult,
    select_trajectory,
    track_hypothesis,
    write_rejections_csv,
    write_trajectory_csv,
)

__all__ = [
    "SEED_ENV",
    "PipelineConfig",
    "EvalReport",
    "stage_simulate",
    "stage_sanitize",
    "stage_denoise",
    "stage_build_map",
    "stage_train",
    "stage_predict",
    "stage_hypothesize",
    "stage_track",
    "stage_eval",
    "run_pipeline",
    "run_sweep",
    "read_beliefs_csv",
    "write_beliefs_csv",
    "read_selected_csv",
    "write_selected_csv",
    "evaluate_run",
    "write_report_csv",
    "write_cdf_csv",
]

log = logging.getLogger(__name__)

SEED_ENV = "CSILOC_SEED"

MODEL_KINDS = ("cnn_lstm", "lstm")


@dataclass(frozen=True)
class PipelineConfig:
    """Flat key-value settings for every stage.

    Loadable from a JSON document whose keys match the field names.
    ``seed`` feeds every stage's generator via fixed offsets; the
    CSILOC_SEED environment variable overrides it at resolution time.
    """

    out_dir: str = "csiloc_run"
    seed: int = 0
    # reference grid
    grid_width: int = 6
    grid_height: int = 6
    cell_size_m: float = 1.0
    # synthetic phase field
    field_subcarriers: int = 4
    field_length_scale: float = 1.5
    field_n_bumps: int = 60
    field_noise_sigma: float = 0.05
    field_burst_prob: float = 0.05
    field_drift_per_day: float = 0.0
    # reference collection
    maps_m: int = 40
    null_points: int = 8
    # evaluation walk
    walk_duration_s: float = 20.0
    walk_speed_mean: float = 1.35
    walk_speed_sigma: float = 0.1
    walk_stride_mean: float = 0.68
    walk_stride_sigma: float = 0.08
    walk_turn_sigma: float = 0.05
    walk_bounds_margin: float = 0.8
    walk_day: float = 1.0  # reference captures are day 0; the walk happens later
    update_period_s: float = 1.0
    # denoising
    denoise_sigma_bound: float = 2.0
    # windowing + classifier
    max_window: int = 3
    model_kind: str = "cnn_lstm"
    lstm_hidden: int = 32
    sequence_length: int = 4
    train_epochs: int = 30
    train_batch_size: int = 16
    train_learning_rate: float = 0.05
    train_momentum: float = 0.9
    # query-time window assembly
    predict_lookback_ms: int = 2000
    # trajectory hypotheses
    hyp_f: int = 5
    hyp_max: int = 256
    hyp_window: int = 5
    # walking filter
    filter_particles: int = 500
    filter_sigma_theta: float = 0.3
    filter_max_confidence: float = 0.7

    def __post_init__(self):
        checks = [
            ("grid_width", self.grid_width >= 1),
            ("grid_height", self.grid_height >= 1),
            ("cell_size_m", self.cell_size_m > 0),
            ("field_subcarriers", self.field_subcarriers >= 1),
            ("field_length_scale", self.field_length_scale > 0),
            ("field_n_bumps", self.field_n_bumps >= 1),
            ("field_noise_sigma", self.field_noise_sigma >= 0),
            ("field_burst_prob", 0 <= self.field_burst_prob <= 1),
            ("maps_m", self.maps_m >= 1),
            ("null_points", self.null_points >= 0),
            ("walk_duration_s", self.walk_duration_s >= 1),
            ("walk_speed_mean", 0 < self.walk_speed_mean <= 3),
            ("update_period_s", self.update_period_s > 0),
            ("denoise_sigma_bound", self.denoise_sigma_bound >= 0),
            ("max_window", self.max_window in (1, 2, 3)),
            ("model_kind", self.model_kind in MODEL_KINDS),
            ("lstm_hidden", self.lstm_hidden >= 1),
            ("sequence_length", self.sequence_length >= 1),
            ("train_epochs", self.train_epochs >= 1),
            ("train_batch_size", self.train_batch_size >= 1),
            ("train_learning_rate", self.train_learning_rate > 0),
            ("train_momentum", 0 <= self.train_momentum < 1),
            ("predict_lookback_ms", self.predict_lookback_ms >= 0),
            ("hyp_f", self.hyp_f >= 1),
            ("hyp_max", self.hyp_max >= 1),
            ("hyp_window", self.hyp_window >= 3),
            ("filter_particles", self.filter_particles >= 1),
            ("filter_sigma_theta", self.filter_sigma_theta > 0),
            ("filter_max_confidence", 0.0 < self.filter_max_confidence < 1.0),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"config field '{name}': invalid value {getattr(self, name)!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValueError(f"config file {path}: not valid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise ValueError(f"config file {path}: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"config field '{unknown[0]}': unknown key")
        return cls(**raw)

    def to_file(self, path: str | Path) -> None:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    def resolved_seed(self) -> int:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}")
        return self.seed

    # derived module views ------------------------------------------------

    def grid(self) -> GridSpec:
        return GridSpec(self.grid_width, self.grid_height, self.cell_size_m)

    def layout(self) -> ChannelLayout:
        return ChannelLayout(3, 3, self.field_subcarriers)

    def field_config(self, seed: int) -> CsiFieldConfig:
        return CsiFieldConfig(
            layout=self.layout(),
            grid=self.grid(),
            length_scale=self.field_length_scale,
            n_bumps=self.field_n_bumps,
            noise_sigma=self.field_noise_sigma,
            burst_prob=self.field_burst_prob,
            drift_per_day=self.field_drift_per_day,
            seed=seed,
        )

    def walk_config(self, seed: int) -> WalkSimConfig:
        g = self.grid()
        ox, oy = g.origin
        half = 0.5 * g.cell_size_m
        bounds = (
            ox - half,
            ox + (g.width_cells - 0.5) * g.cell_size_m,
            oy - half,
            oy + (g.height_cells - 0.5) * g.cell_size_m,
        )
        cx = ox + 0.5 * (g.width_cells - 1) * g.cell_size_m
        cy = oy + 0.5 * (g.height_cells - 1) * g.cell_size_m
        return WalkSimConfig(
            duration_s=self.walk_duration_s,
            speed_mean=self.walk_speed_mean,
            speed_sigma=self.walk_speed_sigma,
            stride_mean=self.walk_stride_mean,
            stride_sigma=self.walk_stride_sigma,
            turn_sigma=self.walk_turn_sigma,
            start=(cx, cy),
            bounds=bounds,
            bounds_margin=self.walk_bounds_margin,
            update_period_s=self.update_period_s,
            seed=seed,
        )


# seed offsets per stage, all derived from the one resolved seed
_SEED_FIELD = 0
_SEED_COLLECT = 1
_SEED_NULL = 3
_SEED_WALK = 11
_SEED_WALK_OBS = 12
_SEED_MODEL = 21
_SEED_SHUFFLE = 22
_SEED_HYP = 31
_SEED_FILTER = 41


# --- stages -----------------------------------------------------------------


def stage_simulate(cfg: PipelineConfig, out_dir: str | Path) -> dict[str, Path]:
    """Synthesize the field, reference captures, and one evaluation walk."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.resolved_seed()
    layout = cfg.layout()
    field = generate_csi_field(cfg.field_config(seed + _SEED_FIELD))

    train_obs = collect_training_observations(field, m=cfg.maps_m, seed=seed + _SEED_COLLECT)
    null_obs = collect_null_observations(
        field, n_points=cfg.null_points, m=cfg.maps_m, seed=seed + _SEED_NULL
    )
    walk = simulate_walk(cfg.walk_config(seed + _SEED_WALK))
    walk_obs, truth = walk_to_observations(
        walk, field, day=cfg.walk_day, seed=seed + _SEED_WALK_OBS
    )

    paths = {
        "train_raw": out / "train_raw.jsonl",
        "null_raw": out / "null_raw.jsonl",
        "walk_raw": out / "walk_raw.jsonl",
        "truth": out / "walk_truth.csv",
        "states": out / "walk_states.csv",
    }
    write_observations(paths["train_raw"], layout, train_obs, raw=True)
    write_observations(paths["null_raw"], layout, null_obs, raw=True)
    write_observations(paths["walk_raw"], layout, walk_obs, raw=True)
    write_ground_truth_csv(paths["truth"], truth)
    write_states_csv(paths["states"], walk)
    return paths


def stage_sanitize(in_path: str | Path, out_path: str | Path) -> int:
    """Detrend a raw capture file; returns the row count.

    Sanitized files keep physical (unnormalized) phases: the outlier
    screen needs the full spread of a garbled capture, which per-capture
    min-max scaling would compress away.  Normalization happens where
    frames enter the classifier instead.
    """
    layout, observations = read_observations(in_path, normalize=False)
    write_observations(out_path, layout, observations, raw=False)
    return len(observations)


def stage_denoise(
    in_path: str | Path, out_path: str | Path, sigma_bound: float = 2.0
) -> tuple[int, int]:
    """Reject per-location outliers; returns (kept, total)."""
    layout, observations = read_observations(in_path)
    groups: dict[tuple[float, float], list[CsiObservation]] = {}
    for obs in observations:
        if obs.location is None:
            raise ValueError("denoise requires located observations")
        groups.setdefault(tuple(obs.location), []).append(obs)
    kept: list[CsiObservation] = []
    dcfg = DenoiseConfig(sigma_bound=sigma_bound)
    for key in sorted(groups):
        result = denoise(groups[key], dcfg, location=key)
        kept.extend(result.retained)
    kept.sort(key=lambda o: o.t_ms)
    write_observations(out_path, layout, kept, raw=False)
    return len(kept), len(observations)


def stage_build_map(
    in_path: str | Path, out_dir: str | Path, grid: GridSpec, m: int
) -> MapSequence:
    """Stack denoised captures into complete maps.

    Denoising thins each cell unevenly, so the sequence length is the
    smallest per-cell survivor count, capped at m.
    """
    layout, observations = read_observations(in_path)
    observations = [_normalized(o) for o in observations]
    counts: dict[tuple[int, int], int] = {}
    for obs in observations:
        if obs.location is not None:
            cell = grid.nearest_cell(*obs.location)
            if grid.contains_cell(*cell):
                counts[cell] = counts.get(cell, 0) + 1
    n_cells = grid.width_cells * grid.height_cells
    if len(counts) < n_cells:
        raise ValueError("input does not cover every grid cell")
    m_eff = min(m, min(counts.values()))
    seq = build_map_sequence(observations, grid, m_eff)
    write_map_dataset(out_dir, seq, layout=layout)
    return seq


def _normalized(obs: CsiObservation) -> CsiObservation:
    """Classifier frames are min-max scaled per capture."""
    return CsiObservation(obs.t_ms, normalize_phases(obs.phases), obs.location)


def stage_train(
    cfg: PipelineConfig,
    map_dir: str | Path,
    model_path: str | Path,
    null_path: str | Path | None = None,
    report_path: str | Path | None = None,
):
    """Assemble sequences, fit the classifier, persist it as JSON."""
    seed = cfg.resolved_seed()
    seq = read_map_dataset(map_dir)
    grid = seq.maps[0].grid
    n_classes = grid.null_class + 1
    n_channels = seq.maps[0].pixels.shape[2]

    if cfg.model_kind == "cnn_lstm":
        sizes = tuple(range(1, cfg.max_window + 1))
        x, y = build_training_sequences(
            seq, sizes=sizes, sequence_length=cfg.sequence_length
        )
        model_cfg = ModelConfig(
            input_shape=(3, 3, n_channels),
            n_classes=n_classes,
            lstm_hidden=cfg.lstm_hidden,
            sequence_length=cfg.sequence_length,
        )
        null_warp = (3, 3)
    else:
        x, y = build_vector_sequences(seq, sequence_length=cfg.sequence_length)
        model_cfg = lstm_only_config(
            n_channels=n_channels,
            n_classes=n_classes,
            lstm_hidden=cfg.lstm_hidden,
            sequence_length=cfg.sequence_length,
        )
        null_warp = None

    if null_path is not None:
        _, null_obs = read_observations(null_path)
        null_obs = [_normalized(o) for o in null_obs]
        if null_obs:
            xn, yn = null_training_sequences(
                null_obs, grid.null_class,
                sequence_length=cfg.sequence_length, warp_to=null_warp,
            )
            x = np.concatenate([x, xn])
            y = np.concatenate([y, yn])

    model = build_model(model_cfg, seed=seed + _SEED_MODEL)
    tcfg = TrainConfig(
        epochs=cfg.train_epochs,
        batch_size=cfg.train_batch_size,
        learning_rate=cfg.train_learning_rate,
        momentum=cfg.train_momentum,
        shuffle_seed=seed + _SEED_SHUFFLE,
    )
    report = train(model, x, y, tcfg)
    save_model(model, model_path)
    if report_path is not None:
        doc = {
            "epoch_losses": report.epoch_losses,
            "final_accuracy": report.final_accuracy,
            "n_sequences": report.n_sequences,
        }
        with open(report_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return model, report


def stage_predict(
    cfg: PipelineConfig,
    model_path: str | Path,
    walk_path: str | Path,
    beliefs_path: str | Path,
) -> list[BeliefVector]:
    """Classify the walk stream into one belief vector per update period.

    Each belief is computed from the most recent captures only; their
    short span (sequence_length x capture spacing) keeps the classifier
    input local to the subject's current cell.  Corrupted captures would
    poison every belief window they enter, so the walk stream is first
    screened with the same sigma rule used during map building, pooled
    over its own captures; screened-out captures are skipped unless a
    window has nothing else.
    """
    model = load_model(model_path)
    _, observations = read_observations(walk_path)
    observations = sorted(observations, key=lambda o: o.t_ms)
    screen = denoise(
        observations,
        DenoiseConfig(sigma_bound=cfg.denoise_sigma_bound, min_retained=0.05),
    )
    clean_ts = {o.t_ms for o in screen.retained}
    observations = [_normalized(o) for o in observations]
    clean = [o for o in observations if o.t_ms in clean_ts]
    beliefs = _predict_beliefs(cfg, model, clean, fallback=observations)
    write_beliefs_csv(beliefs_path, beliefs)
    return beliefs


def _predict_beliefs(
    cfg: PipelineConfig,
    model: Model,
    observations: list[CsiObservation],
    fallback: list[CsiObservation] | None = None,
) -> list[BeliefVector]:
    grid = cfg.grid()
    period_ms = round(cfg.update_period_s * 1000)
    observations = sorted(observations, key=lambda o: o.t_ms)
    fallback = observations if fallback is None else sorted(fallback, key=lambda o: o.t_ms)
    last_ms = fallback[-1].t_ms
    windowed = len(model.config.input_shape) == 3
    T = model.config.sequence_length

    beliefs: list[BeliefVector] = []
    prev_cell: tuple[int, int] | None = None

    k = 0
    while k * period_ms <= last_ms:
        tau_ms = k * period_ms
        recent = [o for o in observations if o.t_ms <= tau_ms][-T:]
        if not recent:
            recent = [o for o in fallback if o.t_ms <= tau_ms][-T:]
        if windowed:
            frames = [
                query_proposal(
                    [o], prev_cell, grid,
                    window_ms=cfg.predict_lookback_ms, max_size=cfg.max_window,
                ).data
                for o in recent
            ]
        else:
            frames = [o.phases for o in recent]
        x = np.stack(frames)[None]
        probs = forward_batch(model, x)[0, -1]
        probs = probs / probs.sum()
        belief = BeliefVector(probs, k)
        beliefs.append(belief)
        if belief.argmax != grid.null_class:
            prev_cell = grid.cell_of_class(belief.argmax)
        k += 1
    return beliefs


def stage_hypothesize(
    cfg: PipelineConfig,
    beliefs_path: str | Path,
    hyp_path: str | Path,
) -> list[TrajectoryHypothesis]:
    """Generate candidate trajectories over sliding belief windows.

    A trajectory hypothesis spans ``hyp_window`` consecutive update
    periods; with short windows the capped cross-product stays close
    to exhaustive, so coherent paths survive into the pool.  Windows
    overlap by more than half their length: each window's filter then
    runs well past its cold start before the stitcher (which keeps the
    earlier window's estimates) switches over to it.  The last window
    is pulled back to end on the final belief.  Hypothesis ids are
    unique across windows and update times are absolute seconds.
    """
    beliefs = read_beliefs_csv(beliefs_path)
    seed = cfg.resolved_seed()
    grid = cfg.grid()
    n = len(beliefs)
    if n < 3:
        raise ValueError(f"need at least 3 beliefs to hypothesize, got {n}")
    w = min(cfg.hyp_window, n)
    stride = max(1, (w - 1) // 2)
    starts = list(range(0, n - w + 1, stride))
    if starts[-1] != n - w:
        starts.append(n - w)
    hypotheses: list[TrajectoryHypothesis] = []
    next_id = 0
    for wi, s in enumerate(starts):
        generated = None
        last_err: ValueError | None = None
        for attempt in range(32):
            hcfg = HypothesisConfig(
                f=cfg.hyp_f,
                n=w,
                max_hypotheses=cfg.hyp_max,
                rng_seed=seed + _SEED_HYP + wi + 1009 * attempt,
            )
            try:
                generated = generate_hypotheses(beliefs[s:s + w], grid, hcfg)
                break
            except NullBeliefError:
                raise
            except ValueError as err:
                # one unlucky draw can discard every non-null sample at a
                # timestep; re-draw with a shifted seed
                last_err = err
        if generated is None:
            raise last_err
        for h in generated:
            updates = tuple(
                LocationUpdate(u.x, u.y, u.c, (s + u.t_index) * cfg.update_period_s)
                for u in h.updates
            )
            hypotheses.append(TrajectoryHypothesis(next_id, updates, h.mean_confidence))
            next_id += 1
    write_hypotheses_csv(hyp_path, hypotheses)
    log.info("hypothesized %d windows, %d trajectories", len(starts), len(hypotheses))
    return hypotheses


def stage_track(
    cfg: PipelineConfig,
    hyp_path: str | Path,
    trajectories_path: str | Path,
    rejections_path: str | Path,
    selected_path: str | Path,
) -> tuple[list[TrackResult], SelectedTrajectory]:
    """Filter every hypothesis, select per window, stitch the winners.

    Hypotheses are grouped into windows by their first update time.
    Each window runs its own dual-foot filter bank and keeps its
    highest-confidence survivor.  A window's filter is least reliable
    at both ends of its span: the opening second is burn-in from an
    uninformed cloud and the closing updates have no kinematic future
    to constrain them, so the stitch takes each winner's centered
    segment and the overlap discards both ends.
    """
    hypotheses = read_hypotheses_csv(hyp_path)
    seed = cfg.resolved_seed()
    # cell-center updates carry ~half-cell quantization error, so the
    # kernel sigma is floored via max_confidence; heading noise is set
    # high enough to follow sharp indoor turns
    fcfg = FilterConfig(
        n_particles=cfg.filter_particles,
        sigma_theta=cfg.filter_sigma_theta,
        max_confidence=cfg.filter_max_confidence,
        rng_seed=seed + _SEED_FILTER,
    )
    windows: dict[float, list[TrajectoryHypothesis]] = {}
    for h in hypotheses:
        windows.setdefault(h.updates[0].t_index, []).append(h)

    all_results: list[TrackResult] = []
    stitched: list[Estimate] = []
    sources: list[int] = []
    cells: list[tuple[int, int]] = []
    grid = cfg.grid()
    selected_ids: list[int] = []
    starts = sorted(windows)
    for k, t0 in enumerate(starts):
        group = windows[t0]
        offset_ms = round(t0 * 1000)
        results = []
        for h in group:
            times = [u.t_index for u in h.updates]
            period = times[1] - times[0] if len(times) > 1 else cfg.update_period_s
            r = track_hypothesis(h, fcfg, update_period_s=period)
            results.append(replace(r, estimates=tuple(
                replace(e, tau_ms=e.tau_ms + offset_ms) for e in r.estimates
            )))
        all_results.extend(results)
        chosen = select_trajectory(results, grid)
        selected_ids.append(chosen.hypothesis_id)
        if k + 1 < len(starts):
            span = group[0].updates[-1].t_index - group[0].updates[0].t_index
            nxt = starts[k + 1] - t0
            hi_ms = round((t0 + 0.5 * (span - nxt) + nxt) * 1000)
        else:
            hi_ms = math.inf
        last = stitched[-1].tau_ms if stitched else -1
        for e in chosen.estimates:
            if last < e.tau_ms <= hi_ms:
                stitched.append(e)
                sources.append(chosen.hypothesis_id)

    for e in stitched:
        cell = grid.nearest_cell(e.x, e.y)
        if not cells or cells[-1] != cell:
            cells.append(cell)
    selected = SelectedTrajectory(selected_ids[0], tuple(stitched), tuple(cells))

    write_trajectory_csv(trajectories_path, all_results)
    write_rejections_csv(rejections_path, all_results)
    _write_stitched_csv(selected_path, sources, stitched)
    n_acc = sum(r.accepted for r in all_results)
    log.info("tracked %d hypotheses over %d windows, %d accepted, selected %s",
             len(all_results), len(windows), n_acc, selected_ids)
    return all_results, selected


def _write_stitched_csv(
    path: str | Path,
    sources: list[int],
    stitched: list[Estimate],
) -> None:
    """Selected-trajectory rows, b column naming each estimate's winner."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "tau_ms", "x", "y", "theta", "stride"])
        for b, e in zip(sources, stitched):
            writer.writerow([
                b, e.tau_ms,
                repr(e.x), repr(e.y), repr(e.theta), repr(e.stride),
            ])


def stage_eval(
    cfg: PipelineConfig,
    beliefs_path: str | Path,
    selected_path: str | Path,
    truth_path: str | Path,
    report_path: str | Path,
    cdf_path: str | Path,
    states_path: str | Path | None = None,
) -> "EvalReport":
    beliefs = read_beliefs_csv(beliefs_path)
    estimates = read_selected_csv(selected_path)
    truth = read_ground_truth_csv(truth_path)
    states = None
    if states_path is not None and Path(states_path).exists():
        states = read_states_csv(states_path)
    report = evaluate_run(
        cfg.grid(), beliefs, estimates, truth,
        states=states, update_period_s=cfg.update_period_s,
    )
    write_report_csv(report_path, report)
    write_cdf_csv(cdf_path, report)
    return report


# --- belief / trajectory file formats ---------------------------------------


def write_beliefs_csv(path: str | Path, beliefs: list[BeliefVector]) -> None:
    n = beliefs[0].probs.size if beliefs else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *(f"p{i}" for i in range(n))])
        for b in beliefs:
            writer.writerow([b.t, *(repr(float(p)) for p in b.probs)])


def read_beliefs_csv(path: str | Path) -> list[BeliefVector]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = len(header) - 1
        for row in reader:
            probs = np.array([float(v) for v in row[1 : n + 1]])
            out.append(BeliefVector(probs / probs.sum(), int(row[0])))
    return out


def write_selected_csv(path: str | Path, selected: SelectedTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "tau_ms", "x", "y", "theta", "stride"])
        for e in selected.estimates:
            writer.writerow([
                selected.hypothesis_id, e.tau_ms,
                repr(e.x), repr(e.y), repr(e.theta), repr(e.stride),
            ])


def read_selected_csv(path: str | Path):
    from .walk_filter import Estimate

    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(Estimate(
                int(rec["tau_ms"]), float(rec["x"]), float(rec["y"]),
                float(rec["theta"]), float(rec["stride"]),
            ))
    return out


# --- scoring -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Distance errors of raw classification vs the selected trajectory.

    Both columns snap positions to grid cell centers, so the gap
    between them is purely how often each lands in the right cell.
    Heading/stride scores need full ground-truth states and skip the
    first update period (the filter's heading is uninformed until the
    second fix).
    """

    mean_error_before: float
    mean_error_after: float
    rmse_before: float
    rmse_after: float
    heading_rmse: float | None
    stride_rmse: float | None
    n_points: int
    errors_before: tuple[float, ...]
    errors_after: tuple[float, ...]

    @property
    def improvement(self) -> float:
        if self.mean_error_before == 0:
            return 0.0
        return 1.0 - self.mean_error_after / self.mean_error_before


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def evaluate_run(
    grid: GridSpec,
    beliefs: list[BeliefVector],
    estimates,
    truth: list[tuple[int, float, float, int]],
    states=None,
    update_period_s: float = 1.0,
) -> EvalReport:
    """Score belief argmaxes and the tracked trajectory against truth.

    Ground truth enters only here.  A null argmax inherits the previous
    located cell (grid center before any); estimates and truth join on
    exact timestamps.
    """
    truth_at = {t: (x, y) for t, x, y, _ in truth}
    period_ms = round(update_period_s * 1000)
    est_at = {e.tau_ms: e for e in estimates}

    center_col = grid.width_cells // 2
    center_row = grid.height_cells // 2
    prev_cell = (center_col, center_row)
    errors_before: list[float] = []
    errors_after: list[float] = []
    for b in beliefs:
        t_ms = b.t * period_ms
        if t_ms not in truth_at:
            continue
        tx, ty = truth_at[t_ms]
        cls = b.argmax
        if cls != grid.null_class:
            prev_cell = grid.cell_of_class(cls)
        bx, by = grid.cell_center(*prev_cell)
        e = est_at.get(t_ms)
        if e is None:
            continue
        ax, ay = grid.cell_center(*grid.nearest_cell(e.x, e.y))
        errors_before.append(math.hypot(bx - tx, by - ty))
        errors_after.append(math.hypot(ax - tx, ay - ty))

    if not errors_before:
        raise ValueError("no timestamps shared by beliefs, trajectory, and truth")

    eb = np.asarray(errors_before)
    ea = np.asarray(errors_after)

    heading_rmse = stride_rmse = None
    if states is not None:
        t_state, state_list = states
        state_at = {int(t): s for t, s in zip(t_state, state_list)}
        h_err, s_err = [], []
        for e in estimates:
            if e.tau_ms < period_ms or e.tau_ms not in state_at:
                continue
            s = state_at[e.tau_ms]
            h_err.append(_wrap_angle(e.theta - s.theta))
            s_err.append(e.stride - s.stride)
        if h_err:
            heading_rmse = float(np.sqrt(np.mean(np.square(h_err))))
            stride_rmse = float(np.sqrt(np.mean(np.square(s_err))))

    return EvalReport(
        mean_error_before=float(eb.mean()),
        mean_error_after=float(ea.mean()),
        rmse_before=float(np.sqrt(np.mean(eb**2))),
        rmse_after=float(np.sqrt(np.mean(ea**2))),
        heading_rmse=heading_rmse,
        stride_rmse=stride_rmse,
        n_points=len(errors_before),
        errors_before=tuple(eb),
        errors_after=tuple(ea),
    )


_REPORT_COLUMNS = (
    "mean_error_before", "mean_error_after", "rmse_before", "rmse_after",
    "heading_rmse", "stride_rmse", "n_points", "improvement",
)


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_COLUMNS)
        writer.writerow([
            repr(report.mean_error_before), repr(report.mean_error_after),
            repr(report.rmse_before), repr(report.rmse_after),
            "" if report.heading_rmse is None else repr(report.heading_rmse),
            "" if report.stride_rmse is None else repr(report.stride_rmse),
            report.n_points, repr(report.improvement),
        ])


def write_cdf_csv(path: str | Path, report: EvalReport) -> None:
    """Plot-ready error CDF: stage, error (m), cumulative fraction."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "error_m", "cum_frac"])
        for stage, errors in (
            ("before_hsm", report.errors_before),
            ("after_hsm", report.errors_after),
        ):
            n = len(errors)
            for i, err in enumerate(sorted(errors)):
                writer.writerow([stage, repr(err), repr((i + 1) / n)])


# --- orchestration -----------------------------------------------------------


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path | None = None) -> EvalReport:
    """Run every stage in order inside one output directory."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = replace(cfg, seed=cfg.resolved_seed())
    resolved.to_file(out / "config.json")

    stage_simulate(cfg, out)
    for name in ("train", "null", "walk"):
        stage_sanitize(out / f"{name}_raw.jsonl", out / f"{name}_sanitized.jsonl")
    for name in ("train", "null"):
        stage_denoise(
            out / f"{name}_sanitized.jsonl",
            out / f"{name}_denoised.jsonl",
            sigma_bound=cfg.denoise_sigma_bound,
        )
    stage_build_map(out / "train_denoised.jsonl", out / "mapdata", cfg.grid(), cfg.maps_m)
    stage_train(
        cfg, out / "mapdata", out / "model.json",
        null_path=out / "null_denoised.jsonl",
        report_path=out / "train_report.json",
    )
    stage_predict(cfg, out / "model.json", out / "walk_sanitized.jsonl", out / "beliefs.csv")
    stage_hypothesize(cfg, out / "beliefs.csv", out / "hypotheses.csv")
    stage_track(
        cfg, out / "hypotheses.csv",
        out / "trajectories.csv", out / "rejections.csv", out / "selected.csv",
    )
    return stage_eval(
        cfg, out / "beliefs.csv", out / "selected.csv", out / "walk_truth.csv",
        out / "report.csv", out / "cdf.csv", states_path=out / "walk_states.csv",
    )


SWEEP_GRIDS = ((6, 6, 1.0), (3, 3, 2.0))
SWEEP_WINDOWS = (1, 2, 3)
SWEEP_SPEEDS = (1.0, 1.35)


def run_sweep(cfg: PipelineConfig, out_csv: str | Path, work_dir: str | Path | None = None) -> list[dict]:
    """Grid-size x window-size x walking-speed table (12 rows)."""
    work = Path(work_dir if work_dir is not None else Path(cfg.out_dir) / "sweep")
    rows = []
    for gw, gh, cell in SWEEP_GRIDS:
        for window in SWEEP_WINDOWS:
            for speed in SWEEP_SPEEDS:
                sub = replace(
                    cfg,
                    grid_width=gw, grid_height=gh, cell_size_m=cell,
                    max_window=window, walk_speed_mean=speed,
                )
                tag = f"g{gw}x{gh}_w{window}_v{speed}"
                report = run_pipeline(sub, work / tag)
                rows.append({
                    "grid": f"{gw}x{gh}@{cell}m",
                    "window": f"{window}x{window}",
                    "speed_mps": speed,
                    "mean_error_before": report.mean_error_before,
                    "mean_error_after": report.mean_error_after,
                    "rmse_after": report.rmse_after,
                    "improvement": report.improvement,
                })
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({
                k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()
            })
    return rows
