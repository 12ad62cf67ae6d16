"""Archetypal analysis with normal, Poisson, multinomial and Bernoulli
observation models."""

from .core import (
    ArchetypalModel,
    DataMatrix,
    Domain,
    FitConfig,
    ModelKind,
    PAAError,
    StochasticMatrix,
    derive_rng,
    make_stochastic,
)
from .obs_models import (
    ProfileMatrix,
    deviance,
    estimate_profiles,
    neg_log_likelihood,
)
from .solvers import (
    FitReport,
    archetypes,
    fit,
    fit_bernoulli,
    fit_multinomial,
    fit_normal,
    fit_poisson,
    generating_observations,
    init_factors,
)

__version__ = "0.1.0"
