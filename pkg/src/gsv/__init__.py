"""Gaussian stochastic volatility models of Volterra type: simulation, rate functions, asymptotics."""
__version__ = "0.1.0"

from .errors import GSVError
from .kernels import KernelSpec, PathGrid, covariance, hatf, kernel_eval, sample_gaussian_paths
from .model import MCEstimate, ModelSpec, ScalingParams, VolFunction

__all__ = [
    "GSVError",
    "KernelSpec",
    "MCEstimate",
    "ModelSpec",
    "PathGrid",
    "ScalingParams",
    "VolFunction",
    "covariance",
    "hatf",
    "kernel_eval",
    "sample_gaussian_paths",
]
