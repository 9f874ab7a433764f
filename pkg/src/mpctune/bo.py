"""
Gaussian-process Bayesian optimization with a lower-confidence-bound
acquisition over a box of tuning parameters.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import gp
from .gp import KernelParams

FD_STEP = 1e-6
DUPLICATE_TOL = 1e-9


class BoConfigError(ValueError):
    pass


class BoAborted(RuntimeError):
    """The objective returned a non-finite value; ``trace`` holds what was done."""

    def __init__(self, msg: str, trace: "BoTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise BoConfigError("box bounds must be equal-length vectors")
        if np.any(~(hi > lo)):
            raise BoConfigError("each upper bound must exceed its lower bound")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def d(self) -> int:
        return len(self.lower)

    def normalize(self, x) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def denormalize(self, u) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.clip(lo + np.asarray(u, dtype=float) * (hi - lo), lo, hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


BACKOFF_BOX = Box((0.0, 0.0), (0.5, 0.5))


@dataclass(frozen=True)
class TuningPoint:
    values: tuple
    bounds: Box = BACKOFF_BOX

    def __post_init__(self):
        if len(self.values) != self.bounds.d:
            raise BoConfigError("point dimension does not match the box")
        if not self.bounds.contains(self.values):
            raise BoConfigError(f"point {self.values} is outside the box")


@dataclass(frozen=True)
class BoConfig:
    kappa: float = 2.6
    n_init: int = 3
    max_iter: int = 10
    seed: int = 0
    restarts: int = 10
    kernel: KernelParams = field(default_factory=KernelParams)
    rel_tol: float | None = None

    def __post_init__(self):
        if not self.kappa >= 0:
            raise BoConfigError("kappa must be nonnegative")
        for name in ("n_init", "max_iter", "restarts"):
            if int(getattr(self, name)) < 1:
                raise BoConfigError(f"{name} must be at least 1")
        if self.rel_tol is not None and not self.rel_tol > 0:
            raise BoConfigError("rel_tol must be positive when given")


@dataclass
class Sample:
    iteration: int
    x: tuple
    value: float
    seconds: float


@dataclass
class BoTrace:
    samples: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    stopped_early: bool = False

    def append(self, s: Sample) -> None:
        self.samples.append(s)
        prev = self.best_so_far[-1] if self.best_so_far else math.inf
        self.best_so_far.append(min(prev, s.value))

    @property
    def best(self) -> Sample:
        return min(self.samples, key=lambda s: s.value)

    def to_dict(self, timing: bool = True) -> dict:
        rows = []
        for s, b in zip(self.samples, self.best_so_far):
            row = {"iteration": s.iteration, "x": list(s.x), "value": _finite_or_none(s.value),
                   "best_so_far": _finite_or_none(b)}
            if timing:
                row["seconds"] = s.seconds
            rows.append(row)
        best = self.best if self.samples else None
        return {
            "samples": rows,
            "best": None if best is None else {"x": list(best.x), "value": best.value},
            "snapshots": self.snapshots,
            "stopped_early": self.stopped_early,
        }

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    def write_csv(self, path, timing: bool = True) -> None:
        d = len(self.samples[0].x) if self.samples else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"x{i}" for i in range(d)] + ["objective", "best_so_far"]
                       + (["seconds"] if timing else []))
            for s, b in zip(self.samples, self.best_so_far):
                w.writerow([s.iteration] + [repr(v) for v in s.x] + [repr(s.value), repr(b)]
                           + ([f"{s.seconds:.6f}"] if timing else []))


def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


def lcb(model: gp.GpModel, u, kappa: float) -> float:
    """``mean - kappa * sd`` at a unit-box point ``u``."""
    mean, var = gp.posterior(model, u)
    return mean - kappa * math.sqrt(var)


def initial_design(bounds: Box, n_init: int, seed: int) -> np.ndarray:
    """Latin hypercube with points at stratum centers, rows in the original box."""
    if n_init < 1:
        raise BoConfigError("n_init must be at least 1")
    rng = np.random.default_rng(seed)
    u = qmc.LatinHypercube(d=bounds.d, scramble=False, rng=rng).random(n_init)
    return bounds.denormalize(u)


def _fd_grad(f, u):
    g = np.empty_like(u)
    for i in range(u.size):
        up, dn = u.copy(), u.copy()
        up[i] = min(u[i] + FD_STEP, 1.0)
        dn[i] = max(u[i] - FD_STEP, 0.0)
        g[i] = (f(up) - f(dn)) / (up[i] - dn[i])
    return g


def minimize_acquisition(model: gp.GpModel, kappa: float, restarts: int, seed: int,
                         d: int | None = None):
    """Multi-start L-BFGS-B on the LCB over the unit box.

    Returns ``(best_u, starts)`` where ``starts`` are the restart points
    ordered by their LCB value (used by the duplicate guard).
    """
    d = d or model.X.shape[1]
    rng = np.random.default_rng(seed)
    starts = qmc.LatinHypercube(d=d, scramble=True, rng=rng).random(restarts)

    def f(u):
        return lcb(model, np.clip(u, 0.0, 1.0), kappa)

    start_vals = np.array([f(s) for s in starts])
    order = np.argsort(start_vals, kind="stable")
    best_u, best_v = starts[order[0]].copy(), start_vals[order[0]]
    for s in starts:
        try:
            res = minimize(f, s, jac=lambda u: _fd_grad(f, np.clip(u, 0.0, 1.0)),
                           method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            continue
        u = np.clip(res.x, 0.0, 1.0)
        v = f(u)
        if np.isfinite(v) and v < best_v:
            best_u, best_v = u, v
    return best_u, starts[order]


def run_bo(objective, config: BoConfig, bounds: Box = BACKOFF_BOX, map_fn=map,
           initial=None) -> BoTrace:
    """Minimize ``objective`` (a function of an original-box point) over ``bounds``.

    ``map_fn`` evaluates the initial design; pass an executor's ``map`` to
    run it in parallel.  Results are identical either way.  ``initial``
    replaces the Latin hypercube with explicit starting points.
    """
    trace = BoTrace()
    if initial is None:
        X0 = initial_design(bounds, config.n_init, config.seed)
    else:
        X0 = np.atleast_2d(np.asarray(initial, dtype=float))
        if X0.shape[1] != bounds.d or not all(bounds.contains(x) for x in X0):
            raise BoConfigError("initial points must lie in the box")

    def timed(x):
        t0 = time.perf_counter()
        v = objective(tuple(float(c) for c in x))
        return float(v), time.perf_counter() - t0

    for k, (x, (v, sec)) in enumerate(zip(X0, map_fn(timed, list(X0)))):
        trace.append(Sample(0, tuple(float(c) for c in x), v, sec))
        if not np.isfinite(v):
            raise BoAborted(f"objective returned {v} at initial point {k}", trace)

    for it in range(1, config.max_iter + 1):
        U = np.array([bounds.normalize(s.x) for s in trace.samples])
        y = np.array([s.value for s in trace.samples])
        model = gp.fit(U, y, config.kernel)
        u, starts = minimize_acquisition(model, config.kappa, config.restarts,
                                         seed=config.seed * 1_000_003 + it, d=bounds.d)
        if _near_any(u, U):
            fresh = [s for s in starts if not _near_any(s, U)]
            if fresh:
                u = fresh[0]
        trace.snapshots.append({
            "iteration": it, "n": int(model.n), "lengthscale": config.kernel.lengthscale,
            "nu": config.kernel.nu, "noise": config.kernel.noise, "jitter": model.jitter,
            "acquisition": lcb(model, u, config.kappa),
        })
        x = bounds.denormalize(u)
        v, sec = timed(x)
        prev_best = trace.best_so_far[-1]
        trace.append(Sample(it, tuple(float(c) for c in x), v, sec))
        if not np.isfinite(v):
            raise BoAborted(f"objective returned {v} at iteration {it}", trace)
        if config.rel_tol is not None and prev_best - trace.best_so_far[-1] < config.rel_tol * abs(prev_best):
            if it > 1:
                trace.stopped_early = True
                break
    return trace


def _near_any(u, U) -> bool:
    return bool(np.any(np.max(np.abs(U - u), axis=1) <= DUPLICATE_TOL))


def gp_snapshot(trace: BoTrace, config: BoConfig, bounds: Box = BACKOFF_BOX, size: int = 50,
                upto: int | None = None) -> list:
    """Posterior mean and sd on a ``size x size`` grid, fit to the first ``upto`` samples."""
    samples = trace.samples[:upto] if upto else trace.samples
    U = np.array([bounds.normalize(s.x) for s in samples])
    model = gp.fit(U, [s.value for s in samples], config.kernel)
    g = np.linspace(0.0, 1.0, size)
    Q = np.array([(a, b) for a in g for b in g])
    mean, var = model.predict(Q)
    X = bounds.denormalize(Q)
    return [(float(x[0]), float(x[1]), float(m), float(math.sqrt(v)))
            for x, m, v in zip(X, mean, var)]
