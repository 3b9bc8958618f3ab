from .checkpoint import (Checkpoint, CheckpointError, load_checkpoint,
                         save_checkpoint)
from .gradcheck import GradCheckReport, grad_check, numeric_gradient
from .layers import (ShapeError, conv2d_backward, conv2d_forward,
                     conv2d_output_dim, conv_transpose2d_backward,
                     conv_transpose2d_forward, conv_transpose2d_output_dim,
                     dense_backward, dense_forward, dropout_backward,
                     dropout_forward, embedding_backward, embedding_forward,
                     lstm_backward, lstm_forward, lstm_step,
                     lstm_step_backward, relu_backward, relu_forward, sigmoid,
                     sigmoid_backward, sigmoid_forward, tanh_backward,
                     tanh_forward)
from .losses import (BCE_EPS, loss_bce, loss_bce_mean, loss_kl_gaussian,
                     loss_mse, loss_nll_sequence)
from .optim import Adam
from .params import Parameter, glorot_uniform, zeros
from .rng import generator_state, new_generator, restore_generator

__all__ = [
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "GradCheckReport", "grad_check", "numeric_gradient",
    "ShapeError", "conv2d_backward", "conv2d_forward", "conv2d_output_dim",
    "conv_transpose2d_backward", "conv_transpose2d_forward",
    "conv_transpose2d_output_dim", "dense_backward", "dense_forward",
    "dropout_backward", "dropout_forward", "embedding_backward",
    "embedding_forward", "lstm_backward", "lstm_forward", "lstm_step",
    "lstm_step_backward", "relu_backward", "relu_forward", "sigmoid",
    "sigmoid_backward", "sigmoid_forward", "tanh_backward", "tanh_forward",
    "BCE_EPS", "loss_bce", "loss_bce_mean", "loss_kl_gaussian", "loss_mse",
    "loss_nll_sequence",
    "Adam", "Parameter", "glorot_uniform", "zeros",
    "generator_state", "new_generator", "restore_generator",
]
