"""
Command-line entry point: ``mpctune simulate | grid | tune``.

Exit codes: 0 success, 2 configuration error, 3 numerical or LP failure,
4 partial results written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bo import BACKOFF_BOX, BoAborted, BoConfig, BoConfigError, gp_snapshot, run_bo
from .config import Setup, build_series, load_setup, setup_provenance
from .gp import GpConfigError, GpNumericalError, KernelParams
from .lp import LpSolverError
from .objective import (
    CostGrid, GridIncomplete, ObjectiveError, grid_evaluate, interpolate, provenance_hash,
    synthetic_surface,
)
from .plant import BackoffTerms, PlantConfigError, SimulationError
from .sim import simulate, write_result_files

log = logging.getLogger("mpctune")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
MODULES = ("gp", "bo", "lp", "_simplex", "plant", "sim", "objective", "config", "cli")


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


@dataclass
class RunManifest:
    command: str
    argv: list
    config_path: str | None
    seed: int | None
    out_dir: str
    started: str = ""
    finished: str = ""
    status: str = "running"
    exit_code: int | None = None
    simulations: int = 0
    outputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    version: str = __version__
    module_hashes: dict = field(default_factory=dict)

    def write(self) -> Path:
        path = Path(self.out_dir) / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def module_hashes() -> dict:
    here = Path(__file__).parent
    return {m: hashlib.sha256((here / f"{m}.py").read_bytes()).hexdigest()[:16] for m in MODULES}


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _parse_beta(text: str) -> BackoffTerms:
    try:
        cw, hw = (float(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"--beta expects two comma-separated numbers, got {text!r}", EXIT_CONFIG) from None
    try:
        return BackoffTerms(cw, hw)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _parse_knots(text: str | None):
    if text is None:
        k = np.linspace(0.0, 0.5, 9)
        return (k, k)
    parts = text.split(";")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise CliError("--knots expects 'list;list'", EXIT_CONFIG)
    try:
        return tuple(np.array([float(v) for v in p.split(",")]) for p in parts)
    except ValueError:
        raise CliError(f"--knots has a non-numeric entry: {text!r}", EXIT_CONFIG) from None


def _load(args) -> tuple:
    setup: Setup = load_setup(args.config)
    if getattr(args, "span_hours", None) is not None:
        setup = setup.replace(span_hours=args.span_hours)
    if getattr(args, "noise_seed", None) is not None:
        setup = setup.replace(noise_seed=args.noise_seed)
    series = build_series(setup, args.series)
    return setup, series


def cmd_simulate(args, manifest: RunManifest) -> int:
    setup, series = _load(args)
    beta = _parse_beta(args.beta)
    res = simulate(setup.plant, series, beta, setup.span_hours, soc_init=setup.soc_init,
                   dump_dir=args.out)
    manifest.simulations = 1
    manifest.outputs = write_result_files(res, args.out)
    manifest.details = {"beta": [beta.cw, beta.hw], "total": res.total,
                        "violations": len(res.violations)}
    print(f"total cost {res.total:.2f} over {res.hours} h, {len(res.violations)} violations")
    return EXIT_OK


def cmd_grid(args, manifest: RunManifest) -> int:
    setup, series = _load(args)
    knots = _parse_knots(args.knots)
    prov = setup_provenance(setup, series)
    prov_hash = provenance_hash(prov)
    out = Path(args.out)
    json_path, csv_path = out / "grid.json", out / "grid.csv"
    manifest.outputs = {"grid": str(json_path), "csv": str(csv_path)}

    if json_path.exists() and not args.force:
        try:
            cached = CostGrid.load(json_path, expect_hash=prov_hash)
        except ObjectiveError:
            cached = None
        if (cached is not None and cached.complete
                and all(np.array_equal(a, b) for a, b in zip(cached.knots, knots))):
            cached.write_csv(csv_path)
            manifest.details = {"cached": True, "config_hash": prov_hash}
            print(f"grid cached at {json_path}; use --force to recompute")
            return EXIT_OK

    meta = {"config_hash": prov_hash, "noise_seed": setup.noise_seed,
            "span_hours": setup.span_hours, "horizon": setup.plant.horizon}
    try:
        grid = grid_evaluate(setup.plant, series, knots, setup.span_hours,
                             parallel=args.parallel, provenance=meta, soc_init=setup.soc_init)
        code = EXIT_OK
    except GridIncomplete as exc:
        grid, code = exc.grid, EXIT_PARTIAL
        print(f"error: {exc}", file=sys.stderr)
    manifest.simulations = int(knots[0].size * knots[1].size)
    grid.save(json_path)
    grid.write_csv(csv_path)
    manifest.details = {"cached": False, "config_hash": prov_hash, "complete": grid.complete,
                        "min": grid.min(), "argmin": grid.argmin()}
    print(f"grid {grid.values.shape[0]}x{grid.values.shape[1]} min {grid.min():.2f} "
          f"at beta={grid.argmin()}")
    return code


@dataclass
class LiveObjective:
    """Closed-loop cost at a back-off point; failed simulations map to NaN."""

    setup: Setup
    series: object

    def __call__(self, x) -> float:
        try:
            return simulate(self.setup.plant, self.series, BackoffTerms(*x), self.setup.span_hours,
                            soc_init=self.setup.soc_init).total
        except SimulationError as exc:
            log.error("simulation failed at beta=%s: %s", x, exc)
            return float("nan")


def _make_objective(args, manifest: RunManifest):
    sel = args.objective
    if sel == "live":
        setup, series = _load(args)
        return LiveObjective(setup, series)
    if sel.startswith("grid:"):
        path = sel[len("grid:"):]
        expect = None
        if args.config is not None or args.series is not None:
            setup, series = _load(args)
            expect = provenance_hash(setup_provenance(setup, series))
        try:
            grid = CostGrid.load(path, expect_hash=expect, force=args.force)
        except OSError as exc:
            raise CliError(f"cannot read grid file: {exc}", EXIT_CONFIG) from None
        if not grid.complete:
            raise CliError(f"{path} is an incomplete grid", EXIT_CONFIG)
        return lambda x: interpolate(grid, x)
    if sel.startswith("synthetic:"):
        name = sel[len("synthetic:"):]
        synthetic_surface(name, (0.0, 0.0))
        return lambda x: synthetic_surface(name, x)
    raise CliError(f"unknown objective {sel!r}; use live, grid:<file> or synthetic:<name>",
                   EXIT_CONFIG)


def cmd_tune(args, manifest: RunManifest) -> int:
    objective = _make_objective(args, manifest)
    cfg = BoConfig(kappa=args.kappa, n_init=args.init, max_iter=args.iters, seed=args.seed,
                   restarts=args.restarts, kernel=KernelParams())
    out = Path(args.out)
    code = EXIT_OK
    if args.parallel > 1 and args.objective == "live":
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            trace = _run_bo_guarded(objective, cfg, pool.map)
    else:
        trace = _run_bo_guarded(objective, cfg, map)
    if isinstance(trace, tuple):
        trace, code = trace
    paths = {"trace_json": out / "trace.json", "trace_csv": out / "trace.csv",
             "gp_snapshot": out / "gp_snapshot.csv"}
    paths["trace_json"].write_text(trace.to_json())
    trace.write_csv(paths["trace_csv"])
    _write_snapshots(paths["gp_snapshot"], trace, cfg)
    manifest.outputs = {k: str(v) for k, v in paths.items()}
    if isinstance(objective, LiveObjective):
        manifest.simulations = len(trace.samples)
    if trace.samples:
        best = trace.best
        manifest.details = {"best_x": list(best.x), "best_value": best.value,
                            "evaluations": len(trace.samples), "objective": args.objective}
        print(f"best beta={best.x} value {best.value:.6g} after {len(trace.samples)} evaluations")
    return code


def _run_bo_guarded(objective, cfg, map_fn):
    try:
        return run_bo(objective, cfg, BACKOFF_BOX, map_fn=map_fn)
    except BoAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.trace, EXIT_PARTIAL


def _write_snapshots(path, trace, cfg) -> None:
    """Posterior mean/sd on a 50x50 grid after each BO iteration."""
    finite = [s for s in trace.samples if np.isfinite(s.value)]
    n0 = min(cfg.n_init, len(finite))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "n", "beta_cw", "beta_hw", "mean", "sd"))
        if n0 == 0:
            return
        for n in range(n0, len(finite) + 1):
            sub = type(trace)()
            for s in finite[:n]:
                sub.append(s)
            for row in gp_snapshot(sub, cfg):
                w.writerow([n - n0, n] + [repr(v) for v in row])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpctune", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_out):
        sp.add_argument("--config", help="plant/run config file (default: packaged desk plant)")
        sp.add_argument("--series", help="CSV of forecasts: hour,L_e,L_cw,L_hw,price_e")
        sp.add_argument("--span-hours", type=int, help="override the simulated span")
        sp.add_argument("--noise-seed", type=int, help="override the forecast-error seed")
        sp.add_argument("--out", default=default_out, help="output directory")

    sp = sub.add_parser("simulate", help="one closed-loop simulation")
    common(sp, "out/simulate")
    sp.add_argument("--beta", default="0.1,0.1", help="back-off terms 'cw,hw'")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("grid", help="closed-loop cost over a grid of back-off terms")
    common(sp, "out/grid")
    sp.add_argument("--knots", help="'k1,k2,...;k1,k2,...' (default: 9 points on [0, 0.5])")
    sp.add_argument("--parallel", type=int, default=1)
    sp.add_argument("--force", action="store_true", help="recompute even if a cached grid matches")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("tune", help="Bayesian optimization of the back-off terms")
    common(sp, "out/tune")
    sp.add_argument("--objective", default="live", help="live | grid:<file> | synthetic:<name>")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--kappa", type=float, default=2.6)
    sp.add_argument("--init", type=int, default=3)
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--parallel", type=int, default=1, help="workers for the initial design")
    sp.add_argument("--force", action="store_true", help="accept a grid built for another config")
    sp.set_defaults(func=cmd_tune)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=args.command, argv=argv, config_path=args.config,
                           seed=getattr(args, "seed", None), out_dir=str(out),
                           started=_now(), module_hashes=module_hashes())
    try:
        code = args.func(args, manifest)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.code
    except (PlantConfigError, ObjectiveError, BoConfigError, GpConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        manifest.details = {"failure": {k: str(v) for k, v in exc.bundle.items()}}
        code = EXIT_NUMERIC
    except (LpSolverError, GpNumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    manifest.finished = _now()
    manifest.exit_code = code
    manifest.status = {EXIT_OK: "ok", EXIT_PARTIAL: "partial"}.get(code, "failed")
    manifest.write()
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
