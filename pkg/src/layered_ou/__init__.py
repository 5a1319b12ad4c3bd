"""Layered Ornstein-Uhlenbeck state-space models for irregularly sampled,
noisily observed multi-site time series, with full model-selection
machinery (maximum likelihood, MCMC, Bayesian model likelihood, AIC/BIC
and property weights)."""

__version__ = "0.1.0"

from .autocov import ou_autocovariance, two_layer_autocovariance
from .canonicalize import canonicalize_pulls
from .dataio import Dataset, load_dataset, load_forcing, save_dataset
from .evidence import (
    BmlConfig,
    PropertyWeights,
    bayes_factor,
    bml_estimate,
    property_weights,
)
from .forcing import ForcingSeries
from .frame import (
    Categorization,
    ModelFrame,
    enumerate_models,
    standard_categorizations,
)
from .kalman import (
    StatePosterior,
    log_likelihood,
    posterior_process_draws,
    sample_conditional_path,
    smooth,
)
from .mcmc import Chain, McmcConfig, mcmc_sample
from .mlfit import MLConfig, MLResult, information_criteria, ml_fit
from .model import ModelSpec, parse_spec_name
from .params import (
    ParamTransform,
    ParamVector,
    from_unconstrained,
    make_params,
    to_unconstrained,
)
from .priors import PriorSpec, log_prior
from .simulate import ObservationDesign, simulate_dataset, simulate_state_paths
from .study import StudyConfig, StudyResult, run_selection_study
from .system import (
    SystemMatrices,
    build_system,
    stationary_autocovariance,
    stationary_moments,
    transition_moments,
)

__all__ = [
    "BmlConfig",
    "Categorization",
    "Chain",
    "Dataset",
    "ForcingSeries",
    "MLConfig",
    "MLResult",
    "McmcConfig",
    "ModelFrame",
    "ModelSpec",
    "ObservationDesign",
    "ParamTransform",
    "ParamVector",
    "PriorSpec",
    "PropertyWeights",
    "StatePosterior",
    "StudyConfig",
    "StudyResult",
    "SystemMatrices",
    "bayes_factor",
    "bml_estimate",
    "build_system",
    "canonicalize_pulls",
    "enumerate_models",
    "from_unconstrained",
    "information_criteria",
    "load_dataset",
    "load_forcing",
    "log_likelihood",
    "log_prior",
    "make_params",
    "mcmc_sample",
    "ml_fit",
    "ou_autocovariance",
    "parse_spec_name",
    "posterior_process_draws",
    "property_weights",
    "run_selection_study",
    "sample_conditional_path",
    "save_dataset",
    "simulate_dataset",
    "simulate_state_paths",
    "smooth",
    "standard_categorizations",
    "stationary_autocovariance",
    "stationary_moments",
    "to_unconstrained",
    "transition_moments",
    "two_layer_autocovariance",
]
