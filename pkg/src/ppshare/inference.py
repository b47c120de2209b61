"""Model fitting and diagnostics.

Logistic regression is fit by Newton iteration. The Bayesian models run
through a single adaptive random-walk Metropolis engine with univariate
normal proposals, a fixed scan order, and per-parameter proposal scales
adapted during burn-in and frozen afterwards. Diagnostics: ESS (initial
positive sequence), MCSE (batch means), WAIC and AIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import pdist, squareform
from scipy.special import expit, logsumexp

from .density import INTENSITY, eval_kde
from .errors import NumericalError, ValidationError
from .geometry import CovariateField, IntegrationGrid, KnotSet, PointPattern
from .gp import GPParams, fix_phi
from .model import (CaseControlState, PriorConfig, _cols_index, gp_prior_logpdf,
                    invgamma_logpdf, pp_weights)
from .simulate import LOGNORM, UNIF, shared_weights

SEPARATION_BOUND = 30.0  # |beta| beyond this is treated as separation


@dataclass(frozen=True)
class ParamSummary:
    point: float
    sd: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower <= self.point <= self.upper):
            raise ValidationError("CI must bracket the point estimate")

    def covers(self, truth: float) -> bool:
        return self.lower <= truth <= self.upper


@dataclass(frozen=True)
class FitSummary:
    params: dict[str, ParamSummary]
    score: dict[str, float]
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "score": self.score,
            "params": {k: vars(v) for k, v in self.params.items()},
        }


# -- logistic regression ----------------------------------------------------

def fit_logistic(design: np.ndarray, labels: np.ndarray,
                 max_iter: int = 100, tol: float = 1e-10) -> FitSummary:
    """Newton-Raphson MLE with Wald intervals and AIC."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(labels, dtype=float)
    n, p = x.shape
    if np.linalg.matrix_rank(x) < p:
        raise NumericalError("design matrix is rank deficient")
    beta = np.zeros(p)
    for _ in range(max_iter):
        mu = expit(x @ beta)
        grad = x.T @ (y - mu)
        w = np.clip(mu * (1 - mu), 1e-12, None)
        hess = x.T @ (w[:, None] * x)
        step = np.linalg.solve(hess, grad)
        beta += step
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise NumericalError("separation: coefficients diverging beyond "
                                 f"{SEPARATION_BOUND}")
        if np.max(np.abs(step)) < tol:
            break
    mu = expit(x @ beta)
    w = np.clip(mu * (1 - mu), 1e-12, None)
    hess = x.T @ (w[:, None] * x)
    cov = np.linalg.inv(hess)
    se = np.sqrt(np.diag(cov))
    eta = x @ beta
    loglik = float(y @ eta - np.logaddexp(0, eta).sum())
    names = [f"b{i}" for i in range(p)]
    params = {
        name: ParamSummary(float(b), float(s), float(b - 1.96 * s), float(b + 1.96 * s))
        for name, b, s in zip(names, beta, se)
    }
    return FitSummary(params, {"aic": 2 * p - 2 * loglik}, "logistic")


# -- adaptive random-walk Metropolis ---------------------------------------

@dataclass(frozen=True)
class MCMCConfig:
    n_iter: int
    burn_in: int
    thin: int = 1
    adapt_interval: int = 200
    target_accept: float = 0.44
    seed: int = 0
    proposal_scale: float = 0.2
    init: object = None  # None, "prior-draw", or {param name: natural value}
    block_updates: bool = False  # extra model-supplied block moves, off by default

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValidationError("need 0 <= burn_in < n_iter")
        if self.thin < 1 or self.adapt_interval < 1:
            raise ValidationError("thin and adapt_interval must be >= 1")
        if self.init is not None and not (self.init == "prior-draw"
                                          or isinstance(self.init, dict)):
            raise ValidationError("init must be None, 'prior-draw', or a "
                                  "{name: value} mapping")


@dataclass(frozen=True)
class Chain:
    names: list[str]
    draws: np.ndarray          # kept iterations x parameters, natural scale
    accept_rates: np.ndarray   # per parameter, over post-burn-in iterations
    seed: int
    config: MCMCConfig

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def warnings(self) -> list[str]:
        return [f"parameter {n!r} never accepted after burn-in"
                for n, r in zip(self.names, self.accept_rates) if r == 0]


def adaptive_metropolis(logpost, init: np.ndarray, names: list[str],
                        config: MCMCConfig, to_natural=None,
                        blocks=None) -> Chain:
    """Univariate random-walk Metropolis over all parameters in scan order.

    `logpost` operates on the sampling (transformed) scale and must already
    include Jacobian terms; `to_natural` maps a sampled vector back to the
    reported scale.

    `blocks` is an optional list of (name, direction_fn) pairs. After each
    univariate sweep, one symmetric random-walk proposal is made along each
    direction (direction_fn(theta) -> vector, or None to skip); each block
    has its own adapted scale. These shear moves traverse posterior ridges
    that univariate updates cross only by diffusion.
    """
    theta = np.asarray(init, dtype=float).copy()
    p = len(theta)
    if len(names) != p:
        raise ValidationError("names and init lengths differ")
    lp = float(logpost(theta))
    if not math.isfinite(lp):
        raise NumericalError("non-finite posterior at the initial state")
    if to_natural is None:
        to_natural = lambda t: t

    rng = np.random.default_rng(config.seed)
    scales = np.full(p, config.proposal_scale)
    window_acc = np.zeros(p)
    window_n = 0
    post_acc = np.zeros(p)
    post_n = 0
    nb = len(blocks) if blocks else 0
    bscales = np.full(nb, config.proposal_scale)
    bwindow_acc = np.zeros(nb)
    n_kept = (config.n_iter - config.burn_in + config.thin - 1) // config.thin
    draws = np.empty((n_kept, p))
    kept = 0

    for it in range(config.n_iter):
        noise = rng.standard_normal(p)
        logu = np.log(rng.random(p))
        for j in range(p):
            old = theta[j]
            theta[j] = old + scales[j] * noise[j]
            lp_new = float(logpost(theta))
            if logu[j] < lp_new - lp:
                lp = lp_new
                window_acc[j] += 1
                if it >= config.burn_in:
                    post_acc[j] += 1
            else:
                theta[j] = old
        for jb in range(nb):
            eps = rng.standard_normal()
            blogu = math.log(rng.random())
            direction = blocks[jb][1](theta)
            if direction is None:
                continue
            prop = theta + bscales[jb] * eps * direction
            lp_new = float(logpost(prop))
            if blogu < lp_new - lp:
                theta = prop
                lp = lp_new
                bwindow_acc[jb] += 1
        window_n += 1
        if it >= config.burn_in:
            post_n += 1
        if (it + 1) % config.adapt_interval == 0 and it < config.burn_in:
            scales *= np.exp(window_acc / window_n - config.target_accept)
            if nb:
                bscales *= np.exp(bwindow_acc / window_n - config.target_accept)
                bwindow_acc[:] = 0
            window_acc[:] = 0
            window_n = 0
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            draws[kept] = to_natural(theta)
            kept += 1
    rates = post_acc / max(post_n, 1)
    return Chain(list(names), draws[:kept], rates, config.seed, config)


def summarize(chain: Chain, score: dict[str, float] | None = None) -> FitSummary:
    params = {}
    for j, name in enumerate(chain.names):
        col = chain.draws[:, j]
        lo, hi = np.quantile(col, [0.025, 0.975])
        params[name] = ParamSummary(float(col.mean()), float(col.std(ddof=1)),
                                    float(lo), float(hi))
    return FitSummary(params, score or {}, "mcmc")


# -- model builders ---------------------------------------------------------

@dataclass
class SamplerModel:
    """A posterior prepared for the Metropolis engine."""

    names: list[str]
    init: np.ndarray
    logpost: object
    to_natural: object
    pointwise: object = None  # draws -> (draws x events) pointwise loglik terms
    from_natural: object = None  # natural-scale vector -> sampling-scale vector
    prior_draw: object = None    # rng -> sampling-scale vector


def _initial_state(model: SamplerModel, config: MCMCConfig) -> np.ndarray:
    if config.init is None:
        return model.init
    if config.init == "prior-draw":
        if model.prior_draw is None:
            raise ValidationError("model does not support prior-draw init")
        return model.prior_draw(np.random.default_rng(config.seed))
    if model.from_natural is None:
        raise ValidationError("model does not support named init")
    defaults = dict(zip(model.names, model.to_natural(model.init)))
    unknown = set(config.init) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown parameters in init: {sorted(unknown)}")
    defaults.update(config.init)
    return model.from_natural(np.array([defaults[n] for n in model.names]))


def _nhpp_glm_init(x_grid: np.ndarray, x_events: np.ndarray,
                   qw: np.ndarray, n_iter: int = 25) -> np.ndarray:
    """Newton steps on the NHPP log-likelihood with no latent surface."""
    b = np.zeros(x_grid.shape[1])
    s_ev = x_events.sum(axis=0)
    for _ in range(n_iter):
        with np.errstate(over="ignore"):
            lam = qw * np.exp(np.clip(x_grid @ b, -700, 700))
        grad = s_ev - x_grid.T @ lam
        hess = x_grid.T @ (lam[:, None] * x_grid)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return b

        def loglik(bb):
            with np.errstate(over="ignore"):
                return s_ev @ bb - qw @ np.exp(np.clip(x_grid @ bb, -700, 700))

        base = loglik(b)
        for _ in range(40):  # backtrack: full Newton overshoots from far starts
            if loglik(b + step) > base:
                break
            step /= 2
        b += step
        if np.max(np.abs(step)) < 1e-8:
            break
    return b


def build_shared_model(patterns: tuple[PointPattern, PointPattern],
                       field: CovariateField, grid: IntegrationGrid,
                       knots: KnotSet, cols1: list[str], cols2: list[str],
                       weighting: str = UNIF, phi: float | None = None,
                       priors: PriorConfig = PriorConfig()) -> SamplerModel:
    """Shared-component posterior with phi fixed from the pooled events."""
    p1, p2 = patterns
    if phi is None:
        phi = fix_phi(np.vstack([p1.points, p2.points]))
    gp_unit = GPParams(1.0, phi)  # sigma cancels in the kriging weights
    targets = np.vstack([grid.nodes, p1.points, p2.points])
    weights_mat = pp_weights(knots, targets, gp_unit)
    z = field.at(targets)
    x1 = z[:, _cols_index(field, cols1)]
    z2 = z[:, _cols_index(field, cols2)]
    # center process-2 covariates so its intercept decouples from the slopes
    mu2 = grid.weights @ z2[:grid.n] / grid.weights.sum()
    x2 = np.column_stack([np.ones(len(z)), z2 - mu2])
    ng, n1 = grid.n, len(p1)
    qw = grid.weights
    k = knots.count
    corr = np.exp(-(squareform(pdist(knots.knots)) if k > 1 else np.zeros((1, 1))) / phi)
    corr_cho = cho_factor(corr + 1e-8 * np.eye(k))
    corr_inv = cho_solve(corr_cho, np.eye(k))
    corr_logdet = 2 * float(np.sum(np.log(np.diag(corr_cho[0]))))

    d1, d2 = x1.shape[1], x2.shape[1]
    names = ([f"beta1_{c}" for c in cols1]
             + ["beta2_0"] + [f"beta2_{c}" for c in cols2]
             + ["sigma", "delta"] + [f"knot_{i}" for i in range(k)])
    sl_b1 = slice(0, d1)
    sl_b2 = slice(d1, d1 + d2)
    i_sig = d1 + d2
    i_del = d1 + d2 + 1
    sl_v = slice(d1 + d2 + 2, d1 + d2 + 2 + k)

    def split(theta):
        sigma = math.exp(theta[i_sig])
        if weighting == UNIF:
            delta = expit(theta[i_del])
        else:
            delta = math.exp(theta[i_del])
        return theta[sl_b1], theta[sl_b2], sigma, delta, theta[sl_v]

    # the event term of the log-likelihood is linear in (v, b1, b2), so the
    # per-evaluation cost is grid-sized work plus a few precomputed dot products
    w_grid = weights_mat[:ng]
    w1sum = weights_mat[ng:ng + n1].sum(axis=0)
    w2sum = weights_mat[ng + n1:].sum(axis=0)
    x1_grid, x1sum = x1[:ng], x1[ng:ng + n1].sum(axis=0)
    x2_grid, x2sum = x2[:ng], x2[ng + n1:].sum(axis=0)

    def logpost(theta):
        b1, b2, sigma, delta, v = split(theta)
        try:
            w1, w2 = shared_weights(weighting, delta)
        except ValidationError:
            return -math.inf
        g = w_grid @ v
        with np.errstate(over="ignore"):
            lam1g = np.exp(w1 * g + x1_grid @ b1)
            lam2g = np.exp(w2 * g + x2_grid @ b2)
        integ = qw @ lam1g + qw @ lam2g
        if not math.isfinite(integ):
            return -math.inf
        pts = (w1 * (w1sum @ v) + x1sum @ b1
               + w2 * (w2sum @ v) + x2sum @ b2)
        lp = pts - integ
        # priors plus log-scale / logit-scale Jacobians (natural-scale intercept)
        b2_0 = b2[0] - mu2 @ b2[1:]
        lp += -0.5 * (b1 @ b1 + b2_0 ** 2 + b2[1:] @ b2[1:]) / priors.coef_sd ** 2
        lp += invgamma_logpdf(sigma, priors.sigma_shape, priors.sigma_scale)
        lp += theta[i_sig]  # d sigma / d log sigma
        if weighting == UNIF:
            lp += math.log(delta) + math.log1p(-delta) if 0 < delta < 1 else -math.inf
        else:
            lp += -0.5 * (theta[i_del] / priors.logdelta_sd) ** 2
            lp += theta[i_del]  # d delta / d log delta
        lp += (-0.5 * k * math.log(2 * math.pi) - k * math.log(sigma)
               - 0.5 * corr_logdet - 0.5 * (v @ corr_inv @ v) / sigma ** 2)
        return lp

    def to_natural(theta):
        b1, b2, sigma, delta, v = split(theta)
        b2_nat = b2.copy()
        b2_nat[0] = b2[0] - mu2 @ b2[1:]
        return np.concatenate([b1, b2_nat, [sigma, delta], v])

    def from_natural(nat):
        nat = np.asarray(nat, dtype=float)
        sigma, delta = nat[i_sig], nat[i_del]
        if sigma <= 0:
            raise ValidationError("sigma must be positive")
        theta = nat.copy()
        theta[d1] = nat[d1] + mu2 @ nat[d1 + 1:d1 + d2]
        theta[i_sig] = math.log(sigma)
        if weighting == UNIF:
            if not 0 < delta < 1:
                raise ValidationError("unif weighting needs 0 < delta < 1")
            theta[i_del] = math.log(delta) - math.log1p(-delta)
        else:
            if delta <= 0:
                raise ValidationError("lognorm weighting needs delta > 0")
            theta[i_del] = math.log(delta)
        return theta

    def prior_draw(rng):
        nat = np.empty(d1 + d2 + 2 + k)
        nat[sl_b1] = rng.normal(0.0, priors.coef_sd, d1)
        nat[sl_b2] = rng.normal(0.0, priors.coef_sd, d2)
        nat[i_sig] = priors.sigma_scale / rng.gamma(priors.sigma_shape)
        if weighting == UNIF:
            nat[i_del] = rng.uniform()
        else:
            nat[i_del] = math.exp(rng.normal(0.0, priors.logdelta_sd))
        chol = np.linalg.cholesky(corr + 1e-8 * np.eye(k))
        nat[sl_v] = nat[i_sig] * (chol @ rng.standard_normal(k))
        return from_natural(nat)

    init = np.zeros(d1 + d2 + 2 + k)
    # start the coefficients at their no-GP Poisson GLM fit so burn-in does
    # not have to climb the intensity level from zero
    init[sl_b1] = _nhpp_glm_init(x1[:ng], x1[ng:ng + n1], qw)
    init[sl_b2] = _nhpp_glm_init(x2[:ng], x2[ng + n1:], qw)
    init[i_sig] = 0.0  # sigma = 1
    init[i_del] = 0.0  # delta = 0.5 (unif) or 1 (lognorm)
    model = SamplerModel(names, init, logpost, to_natural,
                         from_natural=from_natural, prior_draw=prior_draw)
    model.phi = phi
    model.knots = knots
    model.pp_weights_grid = weights_mat[:ng]

    # optional ridge-direction block moves (enabled via MCMCConfig.block_updates):
    # the surface level trades off against the regression terms, so shear
    # proposals that move a coefficient together with a compensating level
    # shift cross the ridge directly instead of by univariate diffusion
    area = qw.sum()
    mu1 = qw @ x1_grid / area
    p_total = d1 + d2 + 2 + k

    def _w1(theta):
        delta = expit(theta[i_del]) if weighting == UNIF else math.exp(theta[i_del])
        try:
            return shared_weights(weighting, delta)
        except ValidationError:
            return None

    def _b1_shear(j):
        def direction(theta):
            w = _w1(theta)
            if w is None or w[0] < 1e-3:
                return None
            d = np.zeros(p_total)
            d[j] = 1.0
            d[sl_v] = -mu1[j] / w[0]
            return d
        return direction

    def _level_shear(theta):
        w = _w1(theta)
        if w is None:
            return None
        d = np.zeros(p_total)
        d[sl_v] = 1.0
        d[d1] = -w[1]
        return d

    model.block_dirs = ([(f"ridge_beta1_{c}", _b1_shear(j))
                         for j, c in enumerate(cols1)]
                        + [("ridge_level", _level_shear)])
    return model


def build_case_parametric_model(control: PointPattern, case: PointPattern,
                                field: CovariateField, grid: IntegrationGrid,
                                case_cols: list[str], control_cols: list[str],
                                priors: PriorConfig = PriorConfig()) -> SamplerModel:
    """Joint NHPP posterior for both patterns with a parametric baseline.

    The case and control intercepts enter the case intensity only through
    their sum, which is reported as the single parameter `b0_sum`; the
    control intercept is identified by the control pattern alone.
    """
    zc = field.at(np.vstack([grid.nodes, control.points]))[:, _cols_index(field, control_cols)]
    zk_all = field.at(np.vstack([grid.nodes, case.points]))
    zk = zk_all[:, _cols_index(field, case_cols)]
    zkc = zk_all[:, _cols_index(field, control_cols)]
    ng = grid.n
    qw = grid.weights
    dk, dc = len(case_cols), len(control_cols)
    names = (["b0_sum"] + [f"beta_{c}" for c in case_cols]
             + [f"beta_control_{c}" for c in control_cols] + ["b0_control"])

    # sample with grid-mean-centered covariates: decorrelates intercepts
    # from slopes so univariate proposals mix; reporting stays natural-scale
    area = qw.sum()
    mu_k = qw @ zk[:ng] / area
    mu_c = qw @ zc[:ng] / area
    zk0, zkc0, zc0 = zk - mu_k, zkc - mu_c, zc - mu_c

    def split(theta):
        return theta[0], theta[1:1 + dk], theta[1 + dk:1 + dk + dc], theta[-1]

    def to_natural(theta):
        s1, bk, bc, s0 = split(theta)
        out = np.asarray(theta, dtype=float).copy()
        out[0] = s1 - mu_k @ bk - mu_c @ bc
        out[-1] = s0 - mu_c @ bc
        return out

    def from_natural(nat):
        nat = np.asarray(nat, dtype=float)
        _, bk, bc, _ = split(nat)
        theta = nat.copy()
        theta[0] = nat[0] + mu_k @ bk + mu_c @ bc
        theta[-1] = nat[-1] + mu_c @ bc
        return theta

    def prior_draw(rng):
        return from_natural(rng.normal(0.0, priors.coef_sd, 2 + dk + dc))

    # event sums are linear in the parameters: precompute them once
    nc, nk = len(control), len(case)
    zc0_sum = zc0[ng:].sum(axis=0)
    zk0_sum = zk0[ng:].sum(axis=0)
    zkc0_sum = zkc0[ng:].sum(axis=0)

    def logpost(theta):
        s1, bk, bc, s0 = split(theta)
        with np.errstate(over="ignore"):
            integ = (qw @ np.exp(s0 + zc0[:ng] @ bc)
                     + qw @ np.exp(s1 + zk0[:ng] @ bk + zkc0[:ng] @ bc))
        if not math.isfinite(integ):
            return -math.inf
        pts = (nc * s0 + zc0_sum @ bc
               + nk * s1 + zk0_sum @ bk + zkc0_sum @ bc)
        nat = to_natural(theta)
        return pts - integ - 0.5 * (nat @ nat) / priors.coef_sd ** 2

    def pointwise(draws):
        """Case-event pointwise terms: log lam1(s_i) - I1(theta)/n."""
        n = len(case)
        out = np.empty((len(draws), n))
        for d, theta in enumerate(draws):
            b0sum = theta[0]
            bk = theta[1:1 + dk]
            bc = theta[1 + dk:1 + dk + dc]
            log1 = b0sum + zk @ bk + zkc @ bc
            integ = qw @ np.exp(log1[:ng])
            out[d] = log1[ng:] - integ / n
        return out

    init = np.zeros(1 + dk + dc + 1)
    return SamplerModel(names, init, logpost, to_natural, pointwise,
                        from_natural=from_natural, prior_draw=prior_draw)


def build_case_nhpp_model(cases: PointPattern, field: CovariateField,
                          grid: IntegrationGrid, kde,
                          cols: list[str],
                          priors: PriorConfig = PriorConfig()) -> SamplerModel:
    """Case-process NHPP posterior with a KDE plug-in baseline."""
    log_base_grid = np.log(eval_kde(kde, grid.nodes, INTENSITY))
    log_base_case = np.log(eval_kde(kde, cases.points, INTENSITY))
    z_grid = field.at(grid.nodes)[:, _cols_index(field, cols)]
    z_case = field.at(cases.points)[:, _cols_index(field, cols)]
    qw = grid.weights
    names = ["alpha"] + [f"beta_{c}" for c in cols]

    mu = qw @ z_grid / qw.sum()
    zg0, zc0 = z_grid - mu, z_case - mu

    def to_natural(theta):
        out = np.asarray(theta, dtype=float).copy()
        out[0] = theta[0] - mu @ theta[1:]
        return out

    def from_natural(nat):
        theta = np.asarray(nat, dtype=float).copy()
        theta[0] = nat[0] + mu @ nat[1:]
        return theta

    def prior_draw(rng):
        return from_natural(rng.normal(0.0, priors.coef_sd, 1 + len(cols)))

    n_case = len(cases)
    base_sum = log_base_case.sum()
    zc0_sum = zc0.sum(axis=0)

    def logpost(theta):
        s, beta = theta[0], theta[1:]
        log1_grid = log_base_grid + s + zg0 @ beta
        with np.errstate(over="ignore"):
            integ = qw @ np.exp(log1_grid)
        if not math.isfinite(integ):
            return -math.inf
        pts = base_sum + n_case * s + zc0_sum @ beta
        nat = to_natural(theta)
        return pts - integ - 0.5 * (nat @ nat) / priors.coef_sd ** 2

    def pointwise(draws):
        n = len(cases)
        out = np.empty((len(draws), n))
        for d, theta in enumerate(draws):
            alpha, beta = theta[0], theta[1:]
            integ = qw @ np.exp(log_base_grid + alpha + z_grid @ beta)
            out[d] = log_base_case + alpha + z_case @ beta - integ / n
        return out

    return SamplerModel(names, np.zeros(1 + len(cols)), logpost, to_natural,
                        pointwise, from_natural=from_natural,
                        prior_draw=prior_draw)


def run_mcmc(model: SamplerModel, config: MCMCConfig) -> Chain:
    init = _initial_state(model, config)
    blocks = getattr(model, "block_dirs", None) if config.block_updates else None
    return adaptive_metropolis(model.logpost, init, model.names, config,
                               to_natural=model.to_natural, blocks=blocks)


# -- diagnostics ------------------------------------------------------------

def ess(draws: np.ndarray) -> float:
    """Effective sample size via initial-positive-sequence truncation."""
    x = np.asarray(draws, dtype=float)
    n = len(x)
    if n < 100:
        raise ValidationError("need at least 100 draws")
    if np.all(x == x[0]):
        return 1.0
    x = x - x.mean()
    var = x @ x / n
    # autocovariances via FFT
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n] / n
    rho = acov / acov[0]
    s = 0.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        s += pair
        k += 2
    return float(n / (1 + 2 * s))


def mcse(draws: np.ndarray) -> float:
    """Batch-means Monte Carlo standard error with batch size floor(sqrt(n))."""
    x = np.asarray(draws, dtype=float)
    n = len(x)
    if n < 100:
        raise ValidationError("need at least 100 draws")
    b = int(math.isqrt(n))
    nb = n // b
    means = x[:nb * b].reshape(nb, b).mean(axis=1)
    if np.all(means == means[0]):
        return 0.0
    return float(means.std(ddof=1) / math.sqrt(nb))


def waic(pointwise_logliks: np.ndarray) -> float:
    """-2 sum_i [lppd_i - p_waic_i]; lower is better."""
    ll = np.asarray(pointwise_logliks, dtype=float)
    if ll.ndim != 2 or len(ll) < 100:
        raise ValidationError("need a (draws x points) matrix with >= 100 draws")
    if not np.isfinite(ll).all():
        raise NumericalError("non-finite pointwise log-likelihood terms")
    d = len(ll)
    lppd = logsumexp(ll, axis=0) - math.log(d)
    penalty = ll.var(axis=0, ddof=1) if d > 1 else np.zeros(ll.shape[1])
    return float(-2 * np.sum(lppd - penalty))


def diagnostics(chain: Chain) -> dict:
    out = {"accept_rates": dict(zip(chain.names, map(float, chain.accept_rates))),
           "ess": {}, "mcse": {}, "warnings": chain.warnings()}
    for j, name in enumerate(chain.names):
        col = chain.draws[:, j]
        if len(col) >= 100:
            out["ess"][name] = ess(col)
            out["mcse"][name] = mcse(col)
    return out
