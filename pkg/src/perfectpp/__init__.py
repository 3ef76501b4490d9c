"""Perfect simulation and pseudo-likelihood fitting of multiscale area-interaction processes."""
from .cftp import (
    CftpResult,
    DominatingTrajectory,
    HorizonCapExceeded,
    evolve_sandwich,
    extend_backward,
    perfect_sample,
    sample_dominating,
)
from .estimator import AreaInteractionMPLE, SummaryFunction
from .geometry import Grain, PointPattern, Window, added_area, dilation_area
from .inference import FitResult, fit_mple, log_pseudo_likelihood, make_quadrature, profile_radii
from .models import (
    MultiscaleModel,
    dominating_rate,
    factor_decomposition,
    log_density_unnormalized,
    lower_birth_probability,
    lower_thinning_probability,
    mh_oracle_sample,
    papangelou,
    upper_birth_probability,
)
from .stats import envelope, k_function, l_function, t_function

__version__ = "0.1.0"

__all__ = [
    "AreaInteractionMPLE",
    "CftpResult",
    "DominatingTrajectory",
    "FitResult",
    "Grain",
    "HorizonCapExceeded",
    "MultiscaleModel",
    "PointPattern",
    "SummaryFunction",
    "Window",
    "added_area",
    "dilation_area",
    "dominating_rate",
    "envelope",
    "evolve_sandwich",
    "extend_backward",
    "factor_decomposition",
    "fit_mple",
    "k_function",
    "l_function",
    "log_density_unnormalized",
    "log_pseudo_likelihood",
    "lower_birth_probability",
    "lower_thinning_probability",
    "make_quadrature",
    "mh_oracle_sample",
    "papangelou",
    "perfect_sample",
    "profile_radii",
    "sample_dominating",
    "t_function",
    "upper_birth_probability",
]
