"""PC priors for Matern Gaussian random fields."""

from ._pcprior import (
    DivergenceError,
    DomainError,
    JeffreysRule,
    LogUniformRange,
    PcHyper,
    SamplerError,
    UniformRange,
    __version__,
    calibrate_pc,
    coverage_study,
    crps_gaussian,
    fit_direct,
    matern_cov,
    pc_logdensity,
    pc_range_logdensity,
    pc_variance_logdensity,
    sample_grf,
    scaled_kld,
    uniform_design,
)

__all__ = [
    "DivergenceError",
    "DomainError",
    "JeffreysRule",
    "LogUniformRange",
    "PcHyper",
    "SamplerError",
    "UniformRange",
    "__version__",
    "calibrate_pc",
    "coverage_study",
    "crps_gaussian",
    "fit_direct",
    "matern_cov",
    "pc_logdensity",
    "pc_range_logdensity",
    "pc_variance_logdensity",
    "sample_grf",
    "scaled_kld",
    "uniform_design",
]
