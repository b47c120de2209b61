"""Study windows, areal units, covariate lookup, integration grids, and knots.

All geometry values are immutable after construction and safe to share
across workers. Areal units partition the window; covariates are
piecewise constant on units. Integration grids carry area weights so that
quadrature of a piecewise-constant function on units is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Point, Polygon
from shapely.strtree import STRtree

from .errors import ValidationError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class AreaUnit:
    id: str
    polygon: Polygon
    area: float
    covariates: np.ndarray  # length p

    def __post_init__(self):
        if self.area <= 0:
            raise ValidationError(f"unit {self.id!r} has non-positive area")


class SpatialWindow:
    """Observation region: a simple polygon partitioned into areal units."""

    def __init__(self, boundary: Polygon, units: list[AreaUnit],
                 covariate_names: list[str]):
        if boundary.is_empty or boundary.area <= 0:
            raise ValidationError("degenerate window boundary (zero area)")
        self.boundary = boundary
        self.units = sorted(units, key=lambda u: u.id)
        self.covariate_names = list(covariate_names)
        self.total_area = boundary.area

        p = len(covariate_names)
        for u in self.units:
            if len(u.covariates) != p:
                raise ValidationError(
                    f"unit {u.id!r} has {len(u.covariates)} covariates, expected {p}")

        unit_area = sum(u.area for u in self.units)
        if self.units and abs(unit_area - self.total_area) > _REL_TOL * self.total_area:
            raise ValidationError(
                f"unit areas sum to {unit_area}, window area is {self.total_area}")
        for u in self.units:
            c = u.polygon.centroid
            if not self.boundary.covers(c):
                raise ValidationError(f"centroid of unit {u.id!r} lies outside the window")

        self._tree = STRtree([u.polygon for u in self.units]) if self.units else None
        self._covariate_matrix = (
            np.array([u.covariates for u in self.units], dtype=float)
            if self.units else np.empty((0, p)))
        self._unit_areas = np.array([u.area for u in self.units], dtype=float)

    # -- queries ------------------------------------------------------------

    def contains(self, point) -> bool:
        """True iff the point is inside or on the boundary."""
        return bool(self.boundary.covers(Point(point)))

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        pts = shapely.points(np.asarray(points, dtype=float))
        return shapely.covers(self.boundary, pts)

    def owning_units(self, points: np.ndarray) -> np.ndarray:
        """Index of the owning unit for each point.

        Edge ties are broken by the lexicographically smallest unit id
        (units are stored sorted by id, so the smallest index wins).
        Points outside every unit get -1.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            raise ValidationError("window has no areal units")
        geoms = shapely.points(points)
        pt_idx, unit_idx = self._tree.query(geoms, predicate="intersects")
        owners = np.full(len(points), -1, dtype=int)
        # sort by (point, unit desc); fancy assignment keeps the last write,
        # which is the smallest unit index per point
        order = np.lexsort((-unit_idx, pt_idx))
        owners[pt_idx[order]] = unit_idx[order]
        return owners

    def __repr__(self):
        return (f"SpatialWindow(area={self.total_area:.6g}, "
                f"units={len(self.units)}, covariates={self.covariate_names})")


def contains(window: SpatialWindow, point) -> bool:
    return window.contains(point)


@dataclass(frozen=True)
class PointPattern:
    """An ordered set of event locations inside a window."""

    points: np.ndarray  # (n, 2)
    window: SpatialWindow | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.window is not None and len(pts):
            inside = self.window.contains_many(pts)
            if not inside.all():
                bad = pts[~inside][0]
                raise ValidationError(f"point {tuple(bad)} lies outside the window")

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)


class CovariateField:
    """Piecewise-constant covariates keyed by areal unit."""

    def __init__(self, window: SpatialWindow):
        self.window = window
        self.names = window.covariate_names
        self.p = len(self.names)

    def at(self, points: np.ndarray) -> np.ndarray:
        """Covariate matrix (m, p) for points inside the window."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        owners = self.window.owning_units(points)
        if (owners < 0).any():
            bad = points[owners < 0][0]
            raise ValidationError(f"point {tuple(bad)} is outside every areal unit")
        return self.window._covariate_matrix[owners]


def covariate_at(field: CovariateField, point) -> np.ndarray:
    """Covariate vector of the unit owning a single point."""
    return field.at(np.asarray(point, dtype=float).reshape(1, 2))[0]


@dataclass(frozen=True)
class IntegrationGrid:
    """Weighted quadrature nodes; weights carry area so Σw = |W|."""

    nodes: np.ndarray      # (N, 2)
    weights: np.ndarray    # (N,)
    unit_ids: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


@dataclass(frozen=True)
class KnotSet:
    knots: np.ndarray  # (k, 2)

    @property
    def count(self) -> int:
        return len(self.knots)


def _proportional_counts(areas: np.ndarray, n_total: int) -> np.ndarray:
    """Node counts proportional to area, each ≥ 1, summing exactly to n_total.

    Largest-remainder correction on top of max(1, floor).
    """
    total = areas.sum()
    ideal = n_total * areas / total
    counts = np.maximum(1, np.floor(ideal)).astype(int)
    remainder = ideal - np.floor(ideal)
    short = n_total - counts.sum()
    if short > 0:
        order = np.lexsort((np.arange(len(areas)), -remainder))
        counts[order[:short]] += 1
    elif short < 0:
        # forced minimum of one node can overshoot; shave from the smallest remainders
        order = np.lexsort((np.arange(len(areas)), remainder))
        for idx in np.tile(order, 1 + (-short) // max(len(areas), 1)):
            if short == 0:
                break
            if counts[idx] > 1:
                counts[idx] -= 1
                short += 1
        if short != 0:
            raise ValidationError("cannot satisfy one-node-per-unit with this n_total")
    return counts


def _lattice_in_polygon(poly: Polygon, count: int) -> np.ndarray:
    """`count` nodes on a cell-centered lattice inside the polygon.

    A midpoint-rule lattice over the bounding box keeps the quadrature
    second-order accurate; when the lattice carries more interior points
    than needed, the ones closest to the centroid are kept.
    """
    cx, cy = poly.centroid.x, poly.centroid.y
    minx, miny, maxx, maxy = poly.bounds
    w, h = maxx - minx, maxy - miny
    # full a x b midpoint lattice (cells as square as possible); if every
    # midpoint is interior the rule is a plain midpoint rule on the unit
    best, best_skew = None, math.inf
    for a in range(1, count + 1):
        if count % a:
            continue
        b = count // a
        skew = abs(math.log((w / a) / (h / b)))
        if skew < best_skew:
            best, best_skew = (a, b), skew
    a, b = best
    xs = minx + (np.arange(a) + 0.5) * w / a
    ys = miny + (np.arange(b) + 0.5) * h / b
    gx, gy = np.meshgrid(xs, ys)
    cand = np.column_stack([gx.ravel(), gy.ravel()])
    if shapely.covers(poly, shapely.points(cand)).all():
        return cand
    m = max(1, math.ceil(math.sqrt(count)))
    for _ in range(20):
        xs = minx + (np.arange(m) + 0.5) * (maxx - minx) / m
        ys = miny + (np.arange(m) + 0.5) * (maxy - miny) / m
        gx, gy = np.meshgrid(xs, ys)
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        keep = shapely.covers(poly, shapely.points(cand))
        cand = cand[keep]
        if len(cand) >= count:
            d2 = (cand[:, 0] - cx) ** 2 + (cand[:, 1] - cy) ** 2
            order = np.lexsort((cand[:, 1], cand[:, 0], np.round(d2, 12)))
            return cand[order[:count]]
        m += 1
    # extremely thin polygon: fall back to the representative point
    rp = poly.representative_point()
    return np.tile([rp.x, rp.y], (count, 1))


def build_integration_grid(window: SpatialWindow, n_total: int) -> IntegrationGrid:
    """Quadrature grid with per-unit node counts proportional to unit area."""
    n_units = len(window.units)
    if n_total < n_units:
        raise ValidationError(
            f"n_total={n_total} is below the unit count {n_units}; "
            "every unit needs at least one node")
    counts = _proportional_counts(window._unit_areas, n_total)
    nodes, weights, unit_ids = [], [], []
    for u, c in zip(window.units, counts):
        pts = _lattice_in_polygon(u.polygon, int(c))
        nodes.append(pts)
        weights.append(np.full(len(pts), u.area / len(pts)))
        unit_ids.extend([u.id] * len(pts))
    return IntegrationGrid(np.vstack(nodes), np.concatenate(weights), unit_ids)


def build_knots(window: SpatialWindow, k: int) -> KnotSet:
    """Exactly k knots on a regular interior grid over the bounding box.

    The grid is filtered to the window and trimmed from the tail
    (row-major order) down to k; resolution grows until k knots fit.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    minx, miny, maxx, maxy = window.boundary.bounds
    m = max(1, math.ceil(math.sqrt(k)))
    while m <= 4096:
        xs = minx + (np.arange(m) + 1) * (maxx - minx) / (m + 1)
        ys = miny + (np.arange(m) + 1) * (maxy - miny) / (m + 1)
        gx, gy = np.meshgrid(xs, ys)
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        keep = shapely.covers(window.boundary, shapely.points(cand))
        cand = cand[keep]
        if len(cand) >= k:
            return KnotSet(cand[:k].copy())
        m += 1
    raise ValidationError(f"cannot place {k} knots inside the window")


# -- constructors -----------------------------------------------------------

def unit_square_window(nx: int, ny: int,
                       covariates: dict[str, tuple[float, float]] | None = None,
                       seed: int = 0) -> SpatialWindow:
    """Unit square split into an nx-by-ny lattice of equal cells.

    `covariates` maps names to (mean, sd); per-cell values are drawn from
    seeded normals so the field is deterministic given (nx, ny, seed).
    """
    if nx < 1 or ny < 1:
        raise ValidationError("lattice resolution must be positive")
    if covariates is None:
        covariates = {}
    rng = np.random.default_rng(seed)
    names = list(covariates)
    values = {name: rng.normal(mu, sd, size=nx * ny)
              for name, (mu, sd) in covariates.items()}
    units = []
    width = math.ceil(math.log10(max(nx * ny, 2)))
    idx = 0
    for iy in range(ny):
        for ix in range(nx):
            x0, x1 = ix / nx, (ix + 1) / nx
            y0, y1 = iy / ny, (iy + 1) / ny
            poly = Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
            cov = np.array([values[n][idx] for n in names], dtype=float)
            units.append(AreaUnit(id=f"u{idx:0{width}d}", polygon=poly,
                                  area=poly.area, covariates=cov))
            idx += 1
    boundary = Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    return SpatialWindow(boundary, units, names)


def window_from_dict(obj: dict) -> SpatialWindow:
    """Window from the JSON schema {boundary, units:[{id, polygon, covariates}]}."""
    try:
        boundary = Polygon(obj["boundary"])
        raw_units = obj["units"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed window object: {exc}") from exc
    if not raw_units:
        raise ValidationError("window has no units")
    names = list(raw_units[0].get("covariates", {}))
    units = []
    for ru in raw_units:
        cov = ru.get("covariates", {})
        if set(cov) != set(names):
            raise ValidationError(
                f"unit {ru.get('id')!r} covariate names differ from the first unit")
        poly = Polygon(ru["polygon"])
        units.append(AreaUnit(id=str(ru["id"]), polygon=poly, area=poly.area,
                              covariates=np.array([cov[n] for n in names], dtype=float)))
    return SpatialWindow(boundary, units, names)


def load_window(spec: str, seed: int = 0,
                covariates: dict[str, tuple[float, float]] | None = None) -> SpatialWindow:
    """Load a window from a JSON file path or a 'unit-square:NxM' shortcut."""
    if spec.startswith("unit-square"):
        if ":" in spec:
            res = spec.split(":", 1)[1]
            try:
                nx, ny = (int(v) for v in res.lower().split("x"))
            except ValueError as exc:
                raise ValidationError(f"bad unit-square resolution {res!r}") from exc
        else:
            nx = ny = 1
        return unit_square_window(nx, ny, covariates=covariates, seed=seed)
    with open(spec) as fh:
        return window_from_dict(json.load(fh))


def window_to_dict(window: SpatialWindow) -> dict:
    return {
        "boundary": [list(xy) for xy in window.boundary.exterior.coords[:-1]],
        "units": [
            {
                "id": u.id,
                "polygon": [list(xy) for xy in u.polygon.exterior.coords[:-1]],
                "covariates": dict(zip(window.covariate_names, map(float, u.covariates))),
            }
            for u in window.units
        ],
    }
