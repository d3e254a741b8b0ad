"""Particle gradient flows on f-divergences, with classifier-based density
ratios and a distilled deterministic sampler."""

from .densities import Banana, Gaussian, GaussianMixture, UniformBox, exact_log_ratio, grid_mixture, ring_mixture
from .divergences import (
    FDivergence,
    divergence_mc,
    divergence_names,
    divergence_quadrature_1d,
    get_divergence,
    logd_gan_objective_1d,
    register_divergence,
)
from .flow import (
    FlowConfig,
    FlowTelemetry,
    inner_loop,
    residual_apply,
    run_svgd,
    svgd_direction,
    vector_field,
    verify_lemma2_decay,
    verify_vfp_residual,
)
from .generator import VGrow, fit_generator, generator_push, sample_generator
from .metrics import energy_distance, mmd_rbf, two_sample_report
from .nets import Mlp, RmsPropConfig
from .ratio import ClassifierDensityRatio, ClassifierTrainSpec, ExactDensityRatio, logistic_loss, train_classifier

__version__ = "0.1.0"

__all__ = [
    "Banana",
    "ClassifierDensityRatio",
    "ClassifierTrainSpec",
    "ExactDensityRatio",
    "FDivergence",
    "FlowConfig",
    "FlowTelemetry",
    "Gaussian",
    "GaussianMixture",
    "Mlp",
    "RmsPropConfig",
    "UniformBox",
    "VGrow",
    "divergence_mc",
    "divergence_names",
    "divergence_quadrature_1d",
    "energy_distance",
    "exact_log_ratio",
    "fit_generator",
    "generator_push",
    "get_divergence",
    "grid_mixture",
    "inner_loop",
    "logd_gan_objective_1d",
    "logistic_loss",
    "mmd_rbf",
    "register_divergence",
    "residual_apply",
    "ring_mixture",
    "run_svgd",
    "sample_generator",
    "svgd_direction",
    "train_classifier",
    "two_sample_report",
    "vector_field",
    "verify_lemma2_decay",
    "verify_vfp_residual",
]
