"""Estimation of matrix signals with IID rows from row-wise generalized linear
observations: an EP solver, its state evolution, and replica analysis."""

from .analysis import ReplicaOptions, mutual_information, replica_fixed_point, state_evolution
from .channels import AwgnRowChannel, QuantizedRowChannel
from .ep import SolverOptions, ep_diagonal_run, ep_run
from .model import SystemConfig, generate_instance, make_covariance, nmse
from .priors import BernoulliGaussianPrior, GaussianPrior, MCOptions

__version__ = "0.1.0"

__all__ = [
    "AwgnRowChannel",
    "BernoulliGaussianPrior",
    "GaussianPrior",
    "MCOptions",
    "QuantizedRowChannel",
    "ReplicaOptions",
    "SolverOptions",
    "SystemConfig",
    "ep_diagonal_run",
    "ep_run",
    "generate_instance",
    "make_covariance",
    "mutual_information",
    "nmse",
    "replica_fixed_point",
    "state_evolution",
]
