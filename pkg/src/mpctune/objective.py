"""
Tuning objectives: live closed-loop cost, a cached cost grid with bilinear
interpolation, and analytic test surfaces on the back-off box.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .plant import BackoffTerms, PlantConfig, SimulationError
from .sim import DisturbanceSeries, simulate

GRID_FORMAT_VERSION = 1


class ObjectiveError(ValueError):
    """Unknown surface, bad knots, or a query outside the grid."""


class GridHashMismatch(ObjectiveError):
    """A cached grid was built from a different configuration."""


class GridIncomplete(RuntimeError):
    def __init__(self, msg: str, grid: "CostGrid"):
        super().__init__(msg)
        self.grid = grid


def validate_knots(knots) -> tuple:
    out = []
    for k in knots:
        k = np.asarray(k, dtype=float)
        if k.ndim != 1 or k.size < 2:
            raise ObjectiveError("each knot vector needs at least two values")
        if np.any(np.diff(k) <= 0):
            raise ObjectiveError("knots must be strictly increasing")
        if k[0] < 0 or k[-1] > 0.5:
            raise ObjectiveError("knots must lie in [0, 0.5]")
        out.append(k)
    if len(out) != 2:
        raise ObjectiveError("cost grids are two-dimensional")
    return tuple(out)


def provenance_hash(payload: dict) -> str:
    """SHA-256 of a canonical JSON rendering of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(o):
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


@dataclass
class CostGrid:
    knots: tuple
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.knots = validate_knots(self.knots)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(k.size for k in self.knots):
            raise ObjectiveError(f"value matrix shape {self.values.shape} does not match the knots")

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    @property
    def config_hash(self) -> str | None:
        return self.provenance.get("config_hash")

    def argmin(self) -> tuple | None:
        """Knot pair of the smallest finite value, or None if there is none."""
        if not np.any(np.isfinite(self.values)):
            return None
        i, j = np.unravel_index(np.nanargmin(self.values), self.values.shape)
        return float(self.knots[0][i]), float(self.knots[1][j])

    def min(self) -> float:
        finite = self.values[np.isfinite(self.values)]
        return float(finite.min()) if finite.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "version": GRID_FORMAT_VERSION,
            "complete": self.complete,
            "knots": [k.tolist() for k in self.knots],
            "shape": list(self.values.shape),
            "values": [None if not np.isfinite(v) else float(v) for v in self.values.ravel()],
            "provenance": self.provenance,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        """Long format, one row per knot pair: ``beta_cw,beta_hw,cost``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("beta_cw", "beta_hw", "cost"))
            for (i, a), (j, b) in product(enumerate(self.knots[0]), enumerate(self.knots[1])):
                v = self.values[i, j]
                w.writerow([repr(float(a)), repr(float(b)), repr(float(v)) if np.isfinite(v) else ""])

    @classmethod
    def from_dict(cls, d: dict) -> "CostGrid":
        if d.get("version") != GRID_FORMAT_VERSION:
            raise ObjectiveError(f"unsupported cost grid version {d.get('version')!r}")
        vals = np.array([np.nan if v is None else v for v in d["values"]], dtype=float)
        return cls(knots=tuple(d["knots"]), values=vals.reshape(d["shape"]),
                   provenance=d.get("provenance", {}))

    @classmethod
    def load(cls, path, expect_hash: str | None = None, force: bool = False) -> "CostGrid":
        """Read a grid file; refuse it if its hash differs from ``expect_hash`` unless ``force``."""
        with open(path) as fh:
            grid = cls.from_dict(json.load(fh))
        if expect_hash is not None and grid.config_hash != expect_hash and not force:
            raise GridHashMismatch(
                f"{path} was built for config hash {grid.config_hash}, active config is {expect_hash}")
        return grid


def _run_cell(args):
    config, series, beta, span_hours, soc_init = args
    return simulate(config, series, BackoffTerms(*beta), span_hours, soc_init=soc_init).total


def grid_evaluate(config: PlantConfig, series: DisturbanceSeries, knots, span_hours: int,
                  parallel: int = 1, provenance: dict | None = None,
                  soc_init: float = 0.5) -> CostGrid:
    """Closed-loop cost at every knot pair; raises ``GridIncomplete`` if any cell fails."""
    knots = validate_knots(knots)
    cells = list(product(range(knots[0].size), range(knots[1].size)))
    jobs = [(config, series, (float(knots[0][i]), float(knots[1][j])), span_hours, soc_init)
            for i, j in cells]
    values = np.full((knots[0].size, knots[1].size), np.nan)
    errors = []

    def record(idx, fut_or_val):
        try:
            values[cells[idx]] = fut_or_val() if callable(fut_or_val) else fut_or_val
        except SimulationError as exc:
            errors.append((jobs[idx][2], str(exc)))

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(_run_cell, job) for job in jobs]
            for idx, fut in enumerate(futures):
                record(idx, fut.result)
    else:
        for idx, job in enumerate(jobs):
            record(idx, lambda job=job: _run_cell(job))

    grid = CostGrid(knots=knots, values=values, provenance=dict(provenance or {}))
    if errors:
        grid.provenance["errors"] = [{"beta": list(b), "error": e} for b, e in errors]
        raise GridIncomplete(f"{len(errors)} of {len(jobs)} grid simulations failed", grid)
    return grid


def interpolate(grid: CostGrid, xi) -> float:
    """Bilinear interpolation of the grid at ``xi``; exact at knots."""
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != 2:
        raise ObjectiveError("grid queries are two-dimensional")
    for v, k in zip(xi, grid.knots):
        if not k[0] <= v <= k[-1]:
            raise ObjectiveError(f"query {tuple(xi)} lies outside the grid hull")
    if not grid.complete:
        raise ObjectiveError("cannot interpolate an incomplete grid")
    f = RegularGridInterpolator(grid.knots, grid.values, method="linear")
    return float(f(xi[None, :])[0])


# ---------------------------------------------------------------------------
# synthetic surfaces on [0, 0.5]^2
# ---------------------------------------------------------------------------

def _quadratic(x):
    return 1.0 + 10.0 * ((x[0] - 0.3) ** 2 + (x[1] - 0.2) ** 2)


def _two_minima(x):
    # global basin at (0.4, 0.2), shallower basin at (0.1, 0.4)
    g = 20.0 * ((x[0] - 0.4) ** 2 + (x[1] - 0.2) ** 2)
    s = 0.3 + 20.0 * ((x[0] - 0.1) ** 2 + (x[1] - 0.4) ** 2)
    return 1.0 + min(g, s)


def _constant(x):
    return 1.0


@dataclass(frozen=True)
class Surface:
    fn: object
    minimizer: tuple | None
    minimum: float
    local_minimizer: tuple | None = None
    local_minimum: float | None = None


SURFACES = {
    "quadratic": Surface(_quadratic, (0.3, 0.2), 1.0),
    "two_minima": Surface(_two_minima, (0.4, 0.2), 1.0, (0.1, 0.4), 1.3),
    "constant": Surface(_constant, None, 1.0),
}


def synthetic_surface(name: str, xi) -> float:
    try:
        surf = SURFACES[name]
    except KeyError:
        raise ObjectiveError(f"unknown surface {name!r}; choose from {sorted(SURFACES)}") from None
    return float(surf.fn(np.asarray(xi, dtype=float).ravel()))
