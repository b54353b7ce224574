"""From-scratch conv-recurrent classifier for fingerprint windows."""

from .layers import (
    conv2d_backward,
    conv2d_forward,
    lstm_step_backward,
    lstm_step_forward,
    relu,
    relu_backward,
    softmax,
)
from .model import (
    BeliefVector,
    ConvSpec,
    Model,
    ModelConfig,
    build_model,
    forward,
    forward_batch,
    load_model,
    loss_and_gradients,
    lstm_only_config,
    save_model,
)
from .training import (
    DivergenceError,
    TrainConfig,
    TrainReport,
    build_training_sequences,
    build_vector_sequences,
    check_gradients,
    null_training_sequences,
    train,
)

__all__ = [
    "BeliefVector",
    "ConvSpec",
    "DivergenceError",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "TrainReport",
    "build_model",
    "build_training_sequences",
    "build_vector_sequences",
    "check_gradients",
    "null_training_sequences",
    "conv2d_backward",
    "conv2d_forward",
    "forward",
    "forward_batch",
    "load_model",
    "loss_and_gradients",
    "lstm_only_config",
    "lstm_step_backward",
    "lstm_step_forward",
    "relu",
    "relu_backward",
    "save_model",
    "softmax",
    "train",
]
