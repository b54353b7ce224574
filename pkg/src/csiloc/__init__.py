"""Indoor localization from wireless channel phase fingerprints.

The package covers the full chain: phase sanitization and outlier
screening (``csi_core``), time-ordered fingerprint maps and sliding
proposal windows (``fingerprint_map``), a from-scratch conv-recurrent
classifier (``neuralnet``), belief-to-trajectory expansion
(``hypothesis_gen``), a dual-foot walking-pattern particle filter
(``walk_filter``), a gait and phase-field simulator (``simulator``),
and a file-composed pipeline with CLI (``pipeline``, ``cli``).
"""

from .csi_core import (
    ChannelLayout,
    CsiObservation,
    DenoiseConfig,
    DenoiseResult,
    UnusableLocationError,
    denoise,
    normalize_phases,
    read_observations,
    sanitize_observation,
    sanitize_phase,
    write_observations,
)
from .fingerprint_map import (
    FingerprintMap,
    GridSpec,
    MapSequence,
    Proposal,
    build_map_sequence,
    extract_proposals,
    query_proposal,
    read_map_dataset,
    warp_window,
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
    ConvSpec,
    Model,
    ModelConfig,
    TrainConfig,
    TrainReport,
    build_model,
    build_training_sequences,
    build_vector_sequences,
    check_gradients,
    forward,
    forward_batch,
    load_model,
    loss_and_gradients,
    lstm_only_config,
    null_training_sequences,
    save_model,
    train,
)
from .pipeline import EvalReport, PipelineConfig, evaluate_run, run_pipeline, run_sweep
from .simulator import (
    CsiField,
    CsiFieldConfig,
    SimulatedWalk,
    WalkSimConfig,
    collect_null_observations,
    collect_training_observations,
    desk_scale_layout,
    full_scale_layout,
    generate_csi_field,
    inject_jump,
    simulate_walk,
    walk_to_observations,
)
from .walk_filter import (
    AllHypothesesRejectedError,
    Estimate,
    FilterConfig,
    ParticleSet,
    PedestrianState,
    SelectedTrajectory,
    TrackResult,
    init_particles,
    predict,
    select_trajectory,
    systematic_resample,
    track_hypothesis,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "AllHypothesesRejectedError",
    "BeliefVector",
    "ChannelLayout",
    "ConvSpec",
    "CsiField",
    "CsiFieldConfig",
    "CsiObservation",
    "DenoiseConfig",
    "DenoiseResult",
    "Estimate",
    "EvalReport",
    "FilterConfig",
    "FingerprintMap",
    "GridSpec",
    "HypothesisConfig",
    "LocationUpdate",
    "MapSequence",
    "Model",
    "ModelConfig",
    "NullBeliefError",
    "ParticleSet",
    "PedestrianState",
    "PipelineConfig",
    "Proposal",
    "SelectedTrajectory",
    "SimulatedWalk",
    "TrackResult",
    "TrainConfig",
    "TrainReport",
    "TrajectoryHypothesis",
    "UnusableLocationError",
    "WalkSimConfig",
    "build_map_sequence",
    "build_model",
    "build_training_sequences",
    "build_vector_sequences",
    "check_gradients",
    "collect_null_observations",
    "collect_training_observations",
    "denoise",
    "desk_scale_layout",
    "evaluate_run",
    "extract_proposals",
    "forward",
    "forward_batch",
    "full_scale_layout",
    "generate_csi_field",
    "generate_hypotheses",
    "init_particles",
    "inject_jump",
    "load_model",
    "loss_and_gradients",
    "lstm_only_config",
    "normalize_phases",
    "null_training_sequences",
    "predict",
    "query_proposal",
    "read_hypotheses_csv",
    "read_map_dataset",
    "read_observations",
    "run_pipeline",
    "run_sweep",
    "sanitize_observation",
    "sanitize_phase",
    "save_model",
    "select_trajectory",
    "simulate_walk",
    "systematic_resample",
    "track_hypothesis",
    "train",
    "update",
    "walk_to_observations",
    "warp_window",
    "write_hypotheses_csv",
    "write_map_dataset",
    "write_observations",
]
