"""
Receding-horizon closed-loop simulation of the MPC-controlled plant.

Each hour: forecast -> LP -> first action -> realized plant step -> storage
back-off update.  Storage tanks absorb every deviation between forecast and
realized commodity loads; the electricity purchase absorbs the deviation in
campus electrical load.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import LpStatus, solve, write_lp_file
from .plant import (
    TANKS, BackoffTerms, ControlAction, ForecastWindow, PlantConfig, PlantState,
    SimulationError, backoff_bounds, build_mpc_lp, extract_first_action, sigma_for,
)

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("hour", "L_e", "L_cw", "L_hw", "price_e")
COST_KEYS = ("electricity", "demand", "water", "gas", "penalty")

# LP round-off can leave the realized SOC a hair outside [0, cap] even with
# perfect forecasts; excursions below this fraction of capacity are snapped.
SNAP_TOL = 1e-7

DEFAULT_SERIES = {
    "L_e_mean": 2000.0, "L_e_amp": 0.3,
    "L_cw_mean": 1000.0, "L_cw_amp": 0.4,
    "L_hw_mean": 400.0, "L_hw_amp": 0.25,
    "weekend_factor": 0.8,
    "price_base": 0.04, "price_peak": 0.08,
}


@dataclass(frozen=True)
class DisturbanceSeries:
    """Realized hourly disturbances plus the forecasts the controller sees."""

    L_e: np.ndarray
    L_cw: np.ndarray
    L_hw: np.ndarray
    price_e: np.ndarray
    fc_L_e: np.ndarray
    fc_L_cw: np.ndarray
    fc_L_hw: np.ndarray
    fc_price_e: np.ndarray

    def __post_init__(self):
        n = len(self.L_e)
        for name in ("L_e", "L_cw", "L_hw", "price_e", "fc_L_e", "fc_L_cw", "fc_L_hw", "fc_price_e"):
            v = getattr(self, name)
            if len(v) != n:
                raise ValueError("all disturbance columns must have the same length")
            if name != "price_e" and name != "fc_price_e" and np.any(np.asarray(v) < 0):
                raise ValueError(f"{name} has negative loads")

    def __len__(self) -> int:
        return len(self.L_e)

    def forecast(self, t: int, horizon: int) -> ForecastWindow:
        if t + horizon > len(self):
            raise ValueError(f"series too short for a {horizon}-hour window at hour {t}")
        s = slice(t, t + horizon)
        return ForecastWindow(self.fc_L_e[s], self.fc_L_cw[s], self.fc_L_hw[s], self.fc_price_e[s])

    def realized(self, t: int) -> dict:
        return {"L_e": float(self.L_e[t]), "L_cw": float(self.L_cw[t]),
                "L_hw": float(self.L_hw[t]), "price_e": float(self.price_e[t])}

    @classmethod
    def from_forecast(cls, L_e, L_cw, L_hw, price_e, noise_std: float = 0.0, seed: int = 0):
        """Realized loads = forecast * (1 + eps), eps ~ N(0, noise_std), seeded.

        Prices are realized exactly as forecast.  ``eps`` is clipped at -0.95
        so loads stay nonnegative.
        """
        L_e, L_cw, L_hw, price_e = (np.asarray(v, dtype=float) for v in (L_e, L_cw, L_hw, price_e))
        if noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        rng = np.random.default_rng(seed)
        eps = rng.normal(0.0, 1.0, size=(3, L_e.size)) * noise_std
        eps = np.maximum(eps, -0.95)
        return cls(
            L_e=L_e * (1 + eps[0]), L_cw=L_cw * (1 + eps[1]), L_hw=L_hw * (1 + eps[2]),
            price_e=price_e.copy(),
            fc_L_e=L_e, fc_L_cw=L_cw, fc_L_hw=L_hw, fc_price_e=price_e,
        )


def synthetic_profiles(hours: int, params: dict | None = None) -> dict:
    """Daily/weekly sinusoidal campus loads and a time-of-use price curve."""
    p = {**DEFAULT_SERIES, **(params or {})}
    h = np.arange(hours)
    day = h % 24
    weekend = ((h // 24) % 7) >= 5
    wk = np.where(weekend, p["weekend_factor"], 1.0)
    return {
        "L_e": p["L_e_mean"] * (1 + p["L_e_amp"] * np.sin(2 * np.pi * (day - 10) / 24)) * wk,
        "L_cw": p["L_cw_mean"] * (1 + p["L_cw_amp"] * np.sin(2 * np.pi * (day - 9) / 24)) * wk,
        "L_hw": p["L_hw_mean"] * (1 + p["L_hw_amp"] * np.cos(2 * np.pi * (day - 6) / 24)),
        "price_e": p["price_base"] + p["price_peak"] * np.maximum(0.0, np.sin(2 * np.pi * (day - 8) / 24)),
    }


def synthetic_series(hours: int, params: dict | None = None, noise_std: float = 0.1,
                     seed: int = 0) -> DisturbanceSeries:
    prof = synthetic_profiles(hours, params)
    return DisturbanceSeries.from_forecast(prof["L_e"], prof["L_cw"], prof["L_hw"], prof["price_e"],
                                           noise_std=noise_std, seed=seed)


def read_series_csv(path, noise_std: float = 0.0, seed: int = 0) -> DisturbanceSeries:
    """Load forecast columns ``hour,L_e,L_cw,L_hw,price_e``; realizations get seeded noise."""
    cols = {k: [] for k in SERIES_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                for k in SERIES_COLUMNS:
                    cols[k].append(float(row[k]))
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    hours = np.asarray(cols["hour"])
    if hours.size and not np.array_equal(hours, np.arange(hours[0], hours[0] + hours.size)):
        raise ValueError(f"{path}: hour column must be consecutive integers")
    return DisturbanceSeries.from_forecast(cols["L_e"], cols["L_cw"], cols["L_hw"], cols["price_e"],
                                           noise_std=noise_std, seed=seed)


def write_series_csv(path, series: DisturbanceSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for t in range(len(series)):
            w.writerow([t, repr(float(series.fc_L_e[t])), repr(float(series.fc_L_cw[t])),
                        repr(float(series.fc_L_hw[t])), repr(float(series.fc_price_e[t]))])


# ---------------------------------------------------------------------------
# storage bound update
# ---------------------------------------------------------------------------

def backoff_case(E_next: float, beta: float, cap: float):
    """Classify a proposed SOC; returns (case, E, lo, hi, overflow, deficit).

    Cases 1..5 follow the order of the bound-update rules; at shared
    boundaries the earlier case wins.
    """
    lo_b, hi_b = beta * cap, (1.0 - beta) * cap
    if lo_b <= E_next <= hi_b:
        return 1, E_next, lo_b, hi_b, 0.0, 0.0
    if hi_b < E_next <= cap:
        return 2, E_next, lo_b, E_next, 0.0, 0.0
    if 0.0 <= E_next < lo_b:
        return 3, E_next, E_next, hi_b, 0.0, 0.0
    if E_next > cap:
        return 4, cap, lo_b, cap, E_next - cap, 0.0
    return 5, 0.0, 0.0, hi_b, 0.0, -E_next


def snap_to_range(E: float, cap: float) -> float:
    """Snap round-off excursions of at most ``SNAP_TOL * cap`` back onto [0, cap]."""
    tol = SNAP_TOL * cap
    if -tol <= E < 0.0:
        return 0.0
    if cap < E <= cap + tol:
        return cap
    return E


def apply_backoff_update(state: PlantState, E_next: dict, backoff: BackoffTerms,
                         config: PlantConfig):
    """Clamp the proposed SOC, grow carryovers on violations, set next-step bounds.

    Returns ``(E, ul, ol, lo, hi, cases)``, each a per-tank dict.
    """
    E, ul, ol, lo, hi, cases = {}, dict(state.ul), dict(state.ol), {}, {}, {}
    for j in TANKS:
        case, e, l, h, over, under = backoff_case(float(E_next[j]), backoff.of(j), config.cap(j))
        E[j], lo[j], hi[j], cases[j] = e, l, h, case
        ol[j] += over
        ul[j] += under
    return E, ul, ol, lo, hi, cases


# ---------------------------------------------------------------------------
# plant
# ---------------------------------------------------------------------------

def plant_step(state: PlantState, action: ControlAction, realized: dict, config: PlantConfig):
    """Apply committed production against realized loads.

    Returns ``(E_next, purchases, costs)``; ``E_next`` may leave [0, cap].
    """
    P = action.P
    discharge = {
        "cw": realized["L_cw"] - P["cs"] - P["hrc"],
        "hw": realized["L_hw"] - config.alpha_h_hrc * P["hrc"] - P["hwg"] + P["hx"],
    }
    E_next = {j: state.E[j] - discharge[j] for j in TANKS}
    P_ct = config.alpha_cond_cs * P["cs"] + P["hx"]
    r_e = (config.alpha_e_cs * P["cs"] + config.alpha_e_hrc * P["hrc"]
           + config.alpha_e_hwg * P["hwg"] + config.alpha_e_ct * P_ct + realized["L_e"])
    r_w = config.alpha_w_ct * P_ct
    r_ng = config.alpha_ng_hwg * P["hwg"]
    purchases = {"e": r_e, "w": r_w, "ng": r_ng, "discharge_cw": discharge["cw"],
                 "discharge_hw": discharge["hw"]}
    costs = {
        "electricity": realized["price_e"] * r_e,
        "water": config.price_water * r_w,
        "gas": config.price_gas * r_ng,
    }
    return E_next, purchases, costs


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

@dataclass
class ClosedLoopResult:
    total: float
    breakdown: dict
    weekly: list
    hours: int
    backoff: tuple
    trajectories: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def to_dict(self, with_trajectories: bool = False) -> dict:
        out = {
            "total": self.total, "breakdown": self.breakdown, "weekly": self.weekly,
            "hours": self.hours, "backoff": list(self.backoff),
            "n_violations": len(self.violations), "violations": self.violations,
        }
        if with_trajectories:
            out["trajectories"] = {k: [float(v) for v in arr] for k, arr in self.trajectories.items()}
        return out


TRAJECTORY_KEYS = (
    "E_cw", "E_hw", "lo_cw", "hi_cw", "lo_hw", "hi_hw", "ul_cw", "ol_cw", "ul_hw", "ol_hw",
    "r_e", "peak", "cost_electricity", "cost_demand", "cost_water", "cost_gas", "cost_penalty",
    "cost_total", "case_cw", "case_hw",
)


def simulate(config: PlantConfig, series: DisturbanceSeries, backoff: BackoffTerms,
             span_hours: int, soc_init: float = 0.5, backend: str = "simplex",
             dump_dir=None) -> ClosedLoopResult:
    """Run the MPC in closed loop for ``span_hours`` hours starting at hour 0."""
    T = config.horizon
    if span_hours < 1:
        raise ValueError("span_hours must be positive")
    if len(series) < span_hours + T:
        raise ValueError(f"series has {len(series)} hours; need span + horizon = {span_hours + T}")
    config = config.with_penalties(float(np.max(series.fc_price_e[: span_hours + T])))
    rho = {"cw": config.rho_cw, "hw": config.rho_hw}

    E0 = {j: soc_init * config.cap(j) for j in TANKS}
    lo0, hi0 = {}, {}
    for j in TANKS:
        lo0[j], hi0[j] = backoff_bounds(E0[j], backoff.of(j), config.cap(j))
    state = PlantState(E=E0, R=0.0, t=0, E_lo=lo0, E_hi=hi0)

    traj = {k: np.zeros(span_hours) for k in TRAJECTORY_KEYS}
    violations = []
    month_peak = 0.0

    for t in range(span_hours):
        fc = series.forecast(t, T)
        p = build_mpc_lp(config, state, fc, backoff, sigma_for(config, t))
        sol = solve(p, backend=backend)
        if sol.status is not LpStatus.OPTIMAL:
            bundle = {"hour": t, "status": sol.status.value, "state": state, "backoff": backoff}
            if dump_dir is not None:
                path = Path(dump_dir) / f"failed_lp_hour{t}.lp"
                write_lp_file(p, path)
                bundle["lp_file"] = str(path)
            raise SimulationError(f"MPC problem at hour {t} is {sol.status.value}", bundle)
        action = extract_first_action(p, sol)

        realized = series.realized(t)
        E_next, purch, costs = plant_step(state, action, realized, config)
        E_next = {j: snap_to_range(E_next[j], config.cap(j)) for j in TANKS}
        paid = PlantState(
            E=state.E,
            ul={j: max(state.ul[j] - action.S_un[j], 0.0) for j in TANKS},
            ol={j: max(state.ol[j] - action.S_ov[j], 0.0) for j in TANKS},
            R=state.R, t=state.t,
        )
        E, ul, ol, lo, hi, cases = apply_backoff_update(paid, E_next, backoff, config)
        for j in TANKS:
            if cases[j] in (4, 5):
                violations.append({
                    "hour": t, "tank": j, "kind": "overflow" if cases[j] == 4 else "dry-up",
                    "magnitude": float(abs(E_next[j] - E[j])),
                })

        month_peak = max(month_peak, purch["e"])
        demand = 0.0
        month_end = (t + 1) % config.month_hours == 0
        if month_end or t == span_hours - 1:
            demand = config.price_demand * month_peak
        penalty = sum(rho[j] * (ul[j] + ol[j]) for j in TANKS)

        traj["r_e"][t] = purch["e"]
        traj["peak"][t] = month_peak
        traj["cost_electricity"][t] = costs["electricity"]
        traj["cost_water"][t] = costs["water"]
        traj["cost_gas"][t] = costs["gas"]
        traj["cost_demand"][t] = demand
        traj["cost_penalty"][t] = penalty
        traj["cost_total"][t] = costs["electricity"] + costs["water"] + costs["gas"] + demand + penalty
        for j in TANKS:
            traj[f"E_{j}"][t] = E[j]
            traj[f"lo_{j}"][t] = lo[j]
            traj[f"hi_{j}"][t] = hi[j]
            traj[f"ul_{j}"][t] = ul[j]
            traj[f"ol_{j}"][t] = ol[j]
            traj[f"case_{j}"][t] = cases[j]

        if month_end:
            month_peak = 0.0
        state = PlantState(E=E, ul=ul, ol=ol, R=month_peak, t=t + 1, E_lo=lo, E_hi=hi)

    breakdown = {k: float(np.sum(traj[f"cost_{k}"])) for k in COST_KEYS}
    total = float(sum(breakdown.values()))
    n_weeks = -(-span_hours // 168)
    weekly = [float(np.sum(traj["cost_total"][w * 168:(w + 1) * 168])) for w in range(n_weeks)]
    log.debug("simulated beta=(%.4f, %.4f): total %.2f, %d violations",
              backoff.cw, backoff.hw, total, len(violations))
    return ClosedLoopResult(total=total, breakdown=breakdown, weekly=weekly, hours=span_hours,
                            backoff=(backoff.cw, backoff.hw), trajectories=traj,
                            violations=violations)


def write_result_files(result: ClosedLoopResult, out_dir) -> dict:
    """Write ``result.json``, ``hourly.csv``, ``weekly.csv`` and ``violations.csv``."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f"{k}.{ext}" for k, ext in
             (("result", "json"), ("hourly", "csv"), ("weekly", "csv"), ("violations", "csv"))}
    with open(paths["result"], "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["hourly"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("hour",) + TRAJECTORY_KEYS)
        for t in range(result.hours):
            w.writerow([t] + [repr(float(result.trajectories[k][t])) for k in TRAJECTORY_KEYS])
    with open(paths["weekly"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("week", "cost"))
        for i, c in enumerate(result.weekly):
            w.writerow([i, repr(c)])
    with open(paths["violations"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("hour", "tank", "kind", "magnitude"))
        for v in result.violations:
            w.writerow([v["hour"], v["tank"], v["kind"], repr(v["magnitude"])])
    return {k: str(v) for k, v in paths.items()}
