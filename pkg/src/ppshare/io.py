"""Event-file ingestion, run configuration, and result serialization.

Events travel as CSV with an `x,y` header; extra columns are ignored and
rows with missing or non-numeric coordinates are dropped and counted.
Floats are written with 17 significant digits so a save/load round trip
is exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .errors import ValidationError
from .geometry import PointPattern, SpatialWindow
from .inference import MCMCConfig
from .model import PriorConfig
from .simulate import LOGNORM, UNIF

FLOAT_FMT = "%.17g"

MODEL_KINDS = ("shared", "case_parametric", "case_nhpp", "logistic",
               "case_control", "nhpp")


@dataclass(frozen=True)
class EventLoad:
    pattern: PointPattern
    dropped: int

    def report(self) -> str:
        return f"loaded: {len(self.pattern)}, dropped: {self.dropped}"


def load_events(path: str, window: SpatialWindow | None = None) -> EventLoad:
    """Read an `x,y` CSV; bad-coordinate rows are dropped, not fatal."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:2] != ["x", "y"]:
            raise ValidationError(
                f"{path}: header must start with 'x,y', got {','.join(header)!r}")
        rows = []
        dropped = 0
        for row in reader:
            try:
                rows.append((float(row[0]), float(row[1])))
            except (IndexError, ValueError):
                dropped += 1
    if not rows:
        raise ValidationError(f"{path}: no valid event rows")
    return EventLoad(PointPattern(np.array(rows), window), dropped)


def save_pattern(pattern: PointPattern, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x,y\n")
        for x, y in pattern.points:
            fh.write(f"{FLOAT_FMT % x},{FLOAT_FMT % y}\n")


def save_grid_table(path: str, columns: dict[str, np.ndarray]) -> None:
    """Delimited table of aligned columns, 17-digit floats."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    if len({len(a) for a in arrays}) != 1:
        raise ValidationError("columns differ in length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one simulate/fit run."""

    model: str
    window: str = "unit-square:20x20"
    window_seed: int = 0
    window_covariates: dict = dc_field(default_factory=dict)
    cols1: list = dc_field(default_factory=list)
    cols2: list = dc_field(default_factory=list)
    weighting: str = UNIF
    priors: PriorConfig = dc_field(default_factory=PriorConfig)
    grid_size: int = 400
    knots: int = 64
    mcmc: MCMCConfig = dc_field(default_factory=lambda: MCMCConfig(20000, 5000))
    seed: int = 0
    truth: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValidationError(f"model must be one of {MODEL_KINDS}")
        if self.weighting not in (UNIF, LOGNORM):
            raise ValidationError(f"weighting must be {UNIF!r} or {LOGNORM!r}")
        if self.knots < 1:
            raise ValidationError("knot count must be >= 1")
        if self.grid_size < 1:
            raise ValidationError("grid size must be >= 1")

    def validate_against(self, window: SpatialWindow) -> None:
        known = set(window.covariate_names)
        for col in [*self.cols1, *self.cols2]:
            if col not in known:
                raise ValidationError(f"covariate {col!r} not present in the window")
        if self.grid_size < len(window.units):
            raise ValidationError(
                f"grid size {self.grid_size} is below the unit count "
                f"{len(window.units)}; every unit needs at least one node")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["priors"] = asdict(self.priors)
        out["mcmc"] = asdict(self.mcmc)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        if "priors" in obj:
            obj["priors"] = PriorConfig(**obj["priors"])
        if "mcmc" in obj:
            obj["mcmc"] = MCMCConfig(**obj["mcmc"])
        return cls(**obj)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(obj)


def write_config_echo(config: RunConfig, out_dir: str) -> str:
    """Persist the fully resolved config so a run can be repeated exactly."""
    path = os.path.join(out_dir, "config.json")
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def worker_count() -> int:
    """Worker cap from PPSHARE_THREADS; defaults to a single worker."""
    raw = os.environ.get("PPSHARE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"PPSHARE_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValidationError("PPSHARE_THREADS must be >= 1")
    return n
