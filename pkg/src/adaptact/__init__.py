"""Neural-network training engine with per-layer learnable activation functions."""
from .activations import (ARELU, ASIGMOID, ATANH, LRELU, PRELU, RELU, SIGMOID, SWISH, TANH,
                          ActivationKind, AdaptiveParams, adaptive_backward, adaptive_forward,
                          classify_special_case, fixed_forward, fixed_grad)
from .network import Model, ModelSpec, init, param_census
from .optimizers import OptimizerConfig, lr_at_epoch, step
from .tensor import Rng

__version__ = "0.1.0"
