"""Synthetic point patterns by spatial thinning.

A homogeneous Poisson process at rate lambda_max is generated over the
window and each candidate is kept with probability intensity / lambda_max.
Scenario generators cover the plain NHPP, the case-control pair, and the
shared-component pair (two processes thinned simultaneously from one
realized log-Gaussian surface).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geometry import (CovariateField, IntegrationGrid, KnotSet, PointPattern,
                       SpatialWindow, build_integration_grid)
from .gp import GPParams, draw_gp

LAMBDA_MAX_SAFETY = 1.2  # head-room over the max node intensity

UNIF = "unif"        # shared-component weights (delta, 1 - delta)
LOGNORM = "lognorm"  # shared-component weights (delta, 1 / delta)


def shared_weights(weighting: str, delta: float) -> tuple[float, float]:
    if weighting == UNIF:
        if not 0 <= delta <= 1:
            raise ValidationError("unif weighting requires 0 <= delta <= 1")
        return delta, 1.0 - delta
    if weighting == LOGNORM:
        if delta <= 0:
            raise ValidationError("lognorm weighting requires delta > 0")
        return delta, 1.0 / delta
    raise ValidationError(f"unknown weighting {weighting!r}")


@dataclass(frozen=True)
class IntensitySpec:
    """Truth parameters for a shared-component simulation.

    beta1 has no intercept; beta2 carries the intercept as its first entry.
    cols1/cols2 name the covariates entering each process.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    cols1: list[str]
    cols2: list[str]
    delta: float
    gp: GPParams
    weighting: str = UNIF

    def __post_init__(self):
        object.__setattr__(self, "beta1", np.asarray(self.beta1, dtype=float))
        object.__setattr__(self, "beta2", np.asarray(self.beta2, dtype=float))
        if len(self.beta1) != len(self.cols1):
            raise ValidationError("beta1 length must match cols1 (no intercept)")
        if len(self.beta2) != len(self.cols2) + 1:
            raise ValidationError("beta2 must carry an intercept plus one entry per col")
        shared_weights(self.weighting, self.delta)  # validates delta range

    @property
    def weights(self) -> tuple[float, float]:
        return shared_weights(self.weighting, self.delta)


def _uniform_in_window(window: SpatialWindow, n: int, rng) -> np.ndarray:
    minx, miny, maxx, maxy = window.boundary.bounds
    frac = window.total_area / ((maxx - minx) * (maxy - miny))
    out = []
    got = 0
    while got < n:
        batch = max(256, int(1.2 * (n - got) / frac) + 1)
        cand = rng.uniform([minx, miny], [maxx, maxy], size=(batch, 2))
        cand = cand[window.contains_many(cand)]
        out.append(cand)
        got += len(cand)
    return np.vstack(out)[:n]


def simulate_by_thinning(window: SpatialWindow, intensity, lambda_max: float,
                         seed, grid: IntegrationGrid | None = None) -> PointPattern:
    """One NHPP realization with the given intensity, by thinning.

    `intensity` maps an (m, 2) array of locations to m nonnegative values.
    When a grid is supplied, the bound is checked on its nodes first.
    """
    if lambda_max <= 0:
        raise ValidationError("lambda_max must be positive")
    if grid is not None:
        vals = np.asarray(intensity(grid.nodes), dtype=float)
        bad = np.flatnonzero(vals > lambda_max * (1 + 1e-12))
        if len(bad):
            i = bad[np.argmax(vals[bad])]
            raise ValidationError(
                f"intensity {vals[i]:.6g} exceeds lambda_max={lambda_max:.6g} "
                f"at node {tuple(grid.nodes[i])}")
    expected = lambda_max * window.total_area
    if expected > 1e7:
        raise ValidationError(
            f"lambda_max={lambda_max:.4g} implies ~{expected:.3g} thinning "
            "candidates; intensity is too peaked for this sampler")
    rng = np.random.default_rng(seed)
    n = rng.poisson(expected)
    if n == 0:
        return PointPattern(np.empty((0, 2)), window)
    cand = _uniform_in_window(window, n, rng)
    vals = np.asarray(intensity(cand), dtype=float)
    keep = rng.random(n) * lambda_max < vals
    return PointPattern(cand[keep], window)


def uniform_thin(pattern: PointPattern, keep_prob: float, seed) -> PointPattern:
    """Independent thinning: each point kept with probability keep_prob."""
    if not 0 < keep_prob <= 1:
        raise ValidationError("keep_prob must be in (0, 1]")
    rng = np.random.default_rng(seed)
    keep = rng.random(len(pattern)) < keep_prob
    return PointPattern(pattern.points[keep], pattern.window)


def _nearest_node_values(nodes: np.ndarray, values: np.ndarray):
    tree = cKDTree(nodes)

    def evaluate(points):
        _, idx = tree.query(np.atleast_2d(points))
        return values[idx]

    return evaluate


def _columns(field: CovariateField, cols: list[str]) -> np.ndarray:
    try:
        return np.array([field.names.index(c) for c in cols], dtype=int)
    except ValueError as exc:
        raise ValidationError(f"unknown covariate in {cols}: {exc}") from exc


@dataclass(frozen=True)
class SharedSimulation:
    pattern1: PointPattern
    pattern2: PointPattern
    gp_at_nodes: np.ndarray        # realized log shared component at grid nodes
    log_intensity1: np.ndarray     # per grid node
    log_intensity2: np.ndarray
    grid: IntegrationGrid = dc_field(repr=False, default=None)


def simulate_shared_pair(window: SpatialWindow, field: CovariateField,
                         spec: IntensitySpec, knots: KnotSet,
                         grid: IntegrationGrid, seed) -> SharedSimulation:
    """Simulate both processes of the shared-component model simultaneously.

    With `knots=None` the log shared component is drawn as an exact GP at
    the grid nodes and carried to thinning candidates by nearest-node
    lookup. With a knot set it is drawn at the knots and kriged, the same
    low-rank representation the fitting code uses, and candidates are
    thinned against the surface evaluated exactly at their locations.
    """
    ss = np.random.SeedSequence(seed)
    seed_gp, seed1, seed2 = ss.spawn(3)
    if knots is None:
        g = draw_gp(grid.nodes, spec.gp, seed_gp)
        vknots = None
    else:
        from .model import pp_transform  # deferred: model imports this module
        vknots = draw_gp(knots.knots, spec.gp, seed_gp)
        g = pp_transform(vknots, knots, grid.nodes, spec.gp)
    w1, w2 = spec.weights
    z = field.at(grid.nodes)
    i1, i2 = _columns(field, spec.cols1), _columns(field, spec.cols2)
    log1 = w1 * g + z[:, i1] @ spec.beta1
    log2 = w2 * g + spec.beta2[0] + z[:, i2] @ spec.beta2[1:]

    def exact_intensity(w_exp, idx, beta, b0):
        from .model import pp_transform

        def evaluate(points):
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            out = np.empty(len(pts))
            for a in range(0, len(pts), 200_000):
                chunk = pts[a:a + 200_000]
                gs = pp_transform(vknots, knots, chunk, spec.gp)
                zc = field.at(chunk)[:, idx]
                out[a:a + 200_000] = np.exp(w_exp * gs + b0 + zc @ beta)
            return out

        return evaluate

    pats = []
    for k, (logv, s) in enumerate(((log1, seed1), (log2, seed2))):
        vals = np.exp(logv)
        if knots is None:
            lam_max = vals.max() * LAMBDA_MAX_SAFETY
            ev = _nearest_node_values(grid.nodes, vals)
        else:
            w_exp = (w1, w2)[k]
            idx = (i1, i2)[k]
            beta = (np.asarray(spec.beta1),
                    np.asarray(spec.beta2[1:]))[k]
            b0 = (0.0, spec.beta2[0])[k]
            ev = exact_intensity(w_exp, idx, beta, b0)
            # the smooth surface can exceed its node maximum between
            # nodes; bound it on a finer lattice before the safety margin
            m = 200
            fx = (np.arange(m) + 0.5) / m
            fine = np.column_stack([np.repeat(fx, m), np.tile(fx, m)])
            minx, miny, maxx, maxy = window.boundary.bounds
            fine = np.column_stack([minx + fine[:, 0] * (maxx - minx),
                                    miny + fine[:, 1] * (maxy - miny)])
            fine = fine[window.contains_many(fine)]
            lam_max = max(vals.max(), ev(fine).max()) * LAMBDA_MAX_SAFETY
        pats.append(simulate_by_thinning(window, ev, lam_max, s, grid=grid))
    return SharedSimulation(pats[0], pats[1], g, log1, log2, grid)


def simulate_case_control(window: SpatialWindow, field: CovariateField,
                          control_betas: np.ndarray, case_betas: np.ndarray,
                          seed, control_cols: list[str] | None = None,
                          case_cols: list[str] | None = None,
                          grid: IntegrationGrid | None = None
                          ) -> tuple[PointPattern, PointPattern]:
    """Simulate (control, case) patterns from the case-control model.

    control intensity: exp(b0c + z_c' beta_c); case intensity scales the
    closed-form control intensity by exp(b0 + z' beta). Both beta vectors
    carry their intercept as the first entry.
    """
    control_betas = np.asarray(control_betas, dtype=float)
    case_betas = np.asarray(case_betas, dtype=float)
    control_cols = control_cols if control_cols is not None else list(field.names)
    case_cols = case_cols if case_cols is not None else list(field.names)
    if len(control_betas) != len(control_cols) + 1:
        raise ValidationError("control_betas must be intercept plus one per column")
    if len(case_betas) != len(case_cols) + 1:
        raise ValidationError("case_betas must be intercept plus one per column")
    if grid is None:
        grid = build_integration_grid(window, max(len(window.units), 400))

    ic = _columns(field, control_cols)
    ik = _columns(field, case_cols)

    def log_control(points):
        z = field.at(points)
        return control_betas[0] + z[:, ic] @ control_betas[1:]

    def log_case(points):
        z = field.at(points)
        return (control_betas[0] + z[:, ic] @ control_betas[1:]
                + case_betas[0] + z[:, ik] @ case_betas[1:])

    ss = np.random.SeedSequence(seed)
    seed_c, seed_k = ss.spawn(2)
    pats = []
    for logf, s in ((log_control, seed_c), (log_case, seed_k)):
        node_vals = np.exp(logf(grid.nodes))
        lam_max = node_vals.max() * LAMBDA_MAX_SAFETY
        pats.append(simulate_by_thinning(
            window, lambda p, f=logf: np.exp(f(p)), lam_max, s, grid=grid))
    return pats[0], pats[1]
