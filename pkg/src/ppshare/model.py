"""Intensity functions, predictive-process transform, likelihoods, priors.

Three families: the shared-component model (two processes driven by one
positive spatial surface raised to complementary powers), the case-control
NHPP (case intensity = baseline times a log-linear factor), and the
logistic-regression route that avoids the baseline entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import gammaln

from .errors import NumericalError, ValidationError
from .geometry import CovariateField, IntegrationGrid, KnotSet, PointPattern
from .gp import GPParams, JITTER_FACTOR, exponential_covariance
from .simulate import UNIF, shared_weights

KDE_BASELINE = "kde"
PARAMETRIC_BASELINE = "parametric"


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters for the Bayesian fits.

    coef_sd is the sd (not variance) of the normal coefficient prior; the
    conventional Normal(0, 100) reads as variance 100, hence sd 10.
    """

    coef_sd: float = 10.0
    sigma_shape: float = 2.0   # inverse-gamma shape for sigma
    sigma_scale: float = 0.5   # inverse-gamma scale for sigma
    logdelta_sd: float = 1.0   # lognorm weighting: prior sd of log(delta)


@dataclass(frozen=True)
class SharedComponentState:
    """All free parameters of the shared-component model.

    Exactly one process carries an intercept: beta2's first entry. phi is
    fixed, never sampled.
    """

    delta: float
    sigma: float
    phi: float
    knot_logvals: np.ndarray
    beta1: np.ndarray   # process 1, no intercept
    beta2: np.ndarray   # process 2, intercept first
    knots: KnotSet
    cols1: list[str]
    cols2: list[str]
    weighting: str = UNIF

    def __post_init__(self):
        object.__setattr__(self, "knot_logvals", np.asarray(self.knot_logvals, dtype=float))
        object.__setattr__(self, "beta1", np.asarray(self.beta1, dtype=float))
        object.__setattr__(self, "beta2", np.asarray(self.beta2, dtype=float))
        if self.sigma <= 0 or self.phi <= 0:
            raise ValidationError("sigma and phi must be positive")
        shared_weights(self.weighting, self.delta)
        if len(self.knot_logvals) != self.knots.count:
            raise ValidationError("knot_logvals length must match the knot count")
        if len(self.beta1) != len(self.cols1) or len(self.beta2) != len(self.cols2) + 1:
            raise ValidationError("coefficient lengths must match covariate columns")

    @property
    def weights(self) -> tuple[float, float]:
        return shared_weights(self.weighting, self.delta)


@dataclass(frozen=True)
class CaseControlState:
    """Case-process parameters; the baseline is a KDE plug-in or parametric.

    With a parametric baseline the case-side and control-side intercepts
    are confounded, so `alpha` holds their identified sum.
    """

    alpha: float
    beta: np.ndarray
    cols: list[str]
    baseline: str = KDE_BASELINE
    control_beta: np.ndarray | None = None  # parametric baseline, no intercept
    control_cols: list[str] = dc_field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.control_beta is not None:
            object.__setattr__(self, "control_beta",
                               np.asarray(self.control_beta, dtype=float))
        if len(self.beta) != len(self.cols):
            raise ValidationError("beta length must match cols")
        if self.baseline == PARAMETRIC_BASELINE:
            if self.control_beta is None or len(self.control_beta) != len(self.control_cols):
                raise ValidationError("parametric baseline needs control_beta per control col")


@dataclass(frozen=True)
class LogLik:
    value: float
    integral_terms: tuple  # per-process quadrature of the intensity
    point_terms: tuple     # per-process sum of log-intensities at events


# -- predictive process -----------------------------------------------------

def pp_weights(knots: KnotSet, targets: np.ndarray, gp: GPParams) -> np.ndarray:
    """Kriging weight matrix C_tk C_kk^-1 (sigma cancels; depends on phi only)."""
    kn = knots.knots
    if len(kn) > 1 and np.min(pdist(kn)) == 0:
        raise ValidationError("knots must be pairwise distinct")
    c_kk = exponential_covariance(squareform(pdist(kn)) if len(kn) > 1 else np.zeros((1, 1)),
                                  gp.sigma, gp.phi)
    c_tk = exponential_covariance(cdist(np.atleast_2d(targets), kn), gp.sigma, gp.phi)
    try:
        factor = cho_factor(c_kk)
    except np.linalg.LinAlgError:
        try:
            factor = cho_factor(c_kk + JITTER_FACTOR * gp.sigma ** 2 * np.eye(len(kn)))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("knot covariance is singular after jitter") from exc
    return cho_solve(factor, c_tk.T).T


def pp_transform(knot_logvals: np.ndarray, knots: KnotSet, targets: np.ndarray,
                 gp: GPParams) -> np.ndarray:
    """Interpolate knot values to targets with exponential-covariance kriging."""
    return pp_weights(knots, targets, gp) @ np.asarray(knot_logvals, dtype=float)


# -- intensities ------------------------------------------------------------

def _cols_index(field: CovariateField, cols: list[str]) -> np.ndarray:
    try:
        return np.array([field.names.index(c) for c in cols], dtype=int)
    except ValueError as exc:
        raise ValidationError(f"unknown covariate: {exc}") from exc


def shared_log_intensities(state: SharedComponentState, field: CovariateField,
                           points: np.ndarray,
                           shared_log: np.ndarray | None = None
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Log intensities of both processes at the points.

    `shared_log` short-circuits the predictive-process transform when the
    interpolated surface has been computed already.
    """
    points = np.atleast_2d(points)
    if shared_log is None:
        shared_log = pp_transform(state.knot_logvals, state.knots, points,
                                  GPParams(state.sigma, state.phi))
    w1, w2 = state.weights
    z = field.at(points)
    log1 = w1 * shared_log + z[:, _cols_index(field, state.cols1)] @ state.beta1
    log2 = (w2 * shared_log + state.beta2[0]
            + z[:, _cols_index(field, state.cols2)] @ state.beta2[1:])
    return log1, log2


def shared_intensities(state: SharedComponentState, field: CovariateField,
                       points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log1, log2 = shared_log_intensities(state, field, points)
    return np.exp(log1), np.exp(log2)


def loglik_shared(state: SharedComponentState,
                  patterns: tuple[PointPattern, PointPattern],
                  field: CovariateField, grid: IntegrationGrid) -> LogLik:
    """Joint log-likelihood of both patterns under the shared-component model.

    The shared surface is interpolated once over the union of grid nodes
    and event locations.
    """
    p1, p2 = patterns
    targets = np.vstack([grid.nodes, p1.points, p2.points])
    shared_log = pp_transform(state.knot_logvals, state.knots, targets,
                              GPParams(state.sigma, state.phi))
    log1, log2 = shared_log_intensities(state, field, targets, shared_log=shared_log)
    ng = grid.n
    n1 = len(p1)
    integ1 = grid.integrate(np.exp(log1[:ng]))
    integ2 = grid.integrate(np.exp(log2[:ng]))
    pts1 = log1[ng:ng + n1]
    pts2 = log2[ng + n1:]
    for logs, pat in ((pts1, p1), (pts2, p2)):
        bad = np.flatnonzero(~np.isfinite(logs))
        if len(bad):
            raise NumericalError(
                f"non-finite intensity at event {tuple(pat.points[bad[0]])}")
    point1, point2 = float(pts1.sum()), float(pts2.sum())
    return LogLik(point1 + point2 - integ1 - integ2, (integ1, integ2), (point1, point2))


def case_log_intensity(state: CaseControlState, field: CovariateField,
                       points: np.ndarray, baseline_eval) -> np.ndarray:
    points = np.atleast_2d(points)
    base = np.asarray(baseline_eval(points), dtype=float)
    if (base <= 0).any():
        raise NumericalError("baseline intensity must be positive")
    z = field.at(points)
    return np.log(base) + state.alpha + z[:, _cols_index(field, state.cols)] @ state.beta


def loglik_case_nhpp(state: CaseControlState, cases: PointPattern,
                     field: CovariateField, grid: IntegrationGrid,
                     baseline_eval) -> LogLik:
    """NHPP log-likelihood of the case pattern given a baseline evaluator."""
    log_grid = case_log_intensity(state, field, grid.nodes, baseline_eval)
    integ = grid.integrate(np.exp(log_grid))
    log_pts = case_log_intensity(state, field, cases.points, baseline_eval) \
        if len(cases) else np.empty(0)
    bad = np.flatnonzero(~np.isfinite(log_pts))
    if len(bad):
        raise NumericalError(f"non-finite intensity at event {tuple(cases.points[bad[0]])}")
    point = float(log_pts.sum())
    return LogLik(point - integ, (integ,), (point,))


def parametric_baseline(state: CaseControlState, field: CovariateField):
    """Closed-form control intensity without its intercept (absorbed in alpha)."""
    idx = _cols_index(field, state.control_cols)

    def evaluate(points):
        z = field.at(np.atleast_2d(points))
        return np.exp(z[:, idx] @ state.control_beta)

    return evaluate


def logistic_design(cases: PointPattern, controls: PointPattern,
                    field: CovariateField,
                    cols: list[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1 = case) and design matrix with intercept, cases first."""
    if len(cases) == 0 or len(controls) == 0:
        raise ValidationError("both patterns must be nonempty")
    cols = cols if cols is not None else list(field.names)
    idx = _cols_index(field, cols)
    z = np.vstack([field.at(cases.points)[:, idx], field.at(controls.points)[:, idx]])
    labels = np.concatenate([np.ones(len(cases)), np.zeros(len(controls))])
    design = np.column_stack([np.ones(len(z)), z])
    return labels, design


# -- priors -----------------------------------------------------------------

def _normal_logpdf(x, sd):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * math.log(2 * math.pi) - math.log(sd)
                        - 0.5 * (x / sd) ** 2))


def invgamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return -math.inf
    return (shape * math.log(scale) - gammaln(shape)
            - (shape + 1) * math.log(x) - scale / x)


def gp_prior_logpdf(knot_logvals: np.ndarray, knots: KnotSet, sigma: float,
                    phi: float, corr_cho=None) -> float:
    """Log-density of knot values under N(0, sigma^2 R(phi))."""
    k = knots.count
    if corr_cho is None:
        corr = np.exp(-(squareform(pdist(knots.knots)) if k > 1 else np.zeros((1, 1))) / phi)
        corr_cho = cho_factor(corr + JITTER_FACTOR * np.eye(k))
    v = np.asarray(knot_logvals, dtype=float)
    quad = float(v @ cho_solve(corr_cho, v)) / sigma ** 2
    logdet = 2 * np.sum(np.log(np.diag(corr_cho[0])))
    return float(-0.5 * k * math.log(2 * math.pi) - k * math.log(sigma)
                 - 0.5 * logdet - 0.5 * quad)


def log_prior(state, priors: PriorConfig = PriorConfig(), corr_cho=None) -> float:
    """Joint log prior; -inf outside the support, never an exception."""
    if isinstance(state, CaseControlState):
        out = _normal_logpdf(state.alpha, priors.coef_sd)
        out += _normal_logpdf(state.beta, priors.coef_sd)
        if state.control_beta is not None:
            out += _normal_logpdf(state.control_beta, priors.coef_sd)
        return out

    if state.sigma <= 0:
        return -math.inf
    if state.weighting == UNIF:
        if not 0 <= state.delta <= 1:
            return -math.inf
        delta_term = 0.0  # log of the Uniform(0,1) density
    else:
        if state.delta <= 0:
            return -math.inf
        delta_term = _normal_logpdf(math.log(state.delta), priors.logdelta_sd)
    out = _normal_logpdf(state.beta1, priors.coef_sd)
    out += _normal_logpdf(state.beta2, priors.coef_sd)
    out += invgamma_logpdf(state.sigma, priors.sigma_shape, priors.sigma_scale)
    out += delta_term
    out += gp_prior_logpdf(state.knot_logvals, state.knots, state.sigma,
                           state.phi, corr_cho=corr_cho)
    return out
