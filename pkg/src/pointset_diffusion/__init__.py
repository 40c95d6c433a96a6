"""Diffusion models for point processes on bounded boxes in R^d.

Data point sets are progressively thinned while Poisson noise points are
superposed; a set denoiser learns to reverse the chain.
"""

from .core import (
    Domain,
    DomainError,
    LabeledState,
    Mask,
    PointSet,
    SimplicityError,
    count,
    split_by_mask,
    superpose,
    thin,
)
from .denoiser import (
    DenoiserOutput,
    NeuralDenoiser,
    OracleDenoiser,
    loss,
    mixture_log_prob,
    oracle_denoiser,
    predict,
    sample_x0_hat,
)
from .posterior import noise_posterior_keep_prob, posterior_sample, thin_posterior_prob
from .sampling import SampleTask, sample_batch, sample_conditional, sample_unconditional
from .schedule import DiffusionSchedule, forward_marginal, forward_step, make_schedule, sample_noise
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "DomainError",
    "LabeledState",
    "Mask",
    "PointSet",
    "SimplicityError",
    "count",
    "split_by_mask",
    "superpose",
    "thin",
    "DenoiserOutput",
    "NeuralDenoiser",
    "OracleDenoiser",
    "loss",
    "mixture_log_prob",
    "oracle_denoiser",
    "predict",
    "sample_x0_hat",
    "noise_posterior_keep_prob",
    "posterior_sample",
    "thin_posterior_prob",
    "SampleTask",
    "sample_batch",
    "sample_conditional",
    "sample_unconditional",
    "DiffusionSchedule",
    "forward_marginal",
    "forward_step",
    "make_schedule",
    "sample_noise",
    "TrainConfig",
    "train",
]
