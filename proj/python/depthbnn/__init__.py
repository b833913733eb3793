"""Variational depth estimation for unbounded-depth Bayesian networks."""

from ._depthbnn import (
    ContractViolation,
    Dataset,
    DepthPMF,
    DomainError,
    ParameterError,
    PoissonDepth,
    RunawayDepth,
    RunResult,
    TrainConfig,
    TruncNormalDepth,
    depth_kl,
    gaussian_kl,
    generate_spiral,
    log_pmf,
    moving_average_nonincreasing_fraction,
    pmf,
    radius_ks,
    support,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
