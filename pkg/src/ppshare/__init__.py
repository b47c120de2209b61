"""Bivariate spatial point-process models: simulation, fitting, diagnostics."""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .geometry import (AreaUnit, CovariateField, IntegrationGrid, KnotSet,
                       PointPattern, SpatialWindow, build_integration_grid,
                       build_knots, load_window, unit_square_window,
                       window_from_dict, window_to_dict)
from .gp import GPParams, draw_gp, fix_phi
from .simulate import (LOGNORM, UNIF, IntensitySpec, simulate_by_thinning,
                       simulate_case_control, simulate_shared_pair,
                       uniform_thin)
from .density import KDEstimate, eval_kde, fit_kde, scott_bandwidth
from .inference import (Chain, FitSummary, MCMCConfig, ParamSummary,
                        adaptive_metropolis, build_case_nhpp_model,
                        build_case_parametric_model, build_shared_model,
                        diagnostics, ess, fit_logistic, mcse, run_mcmc,
                        summarize, waic)
