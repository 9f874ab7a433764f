"""
Central HVAC plant model and the hourly MPC linear program.

Units: loads and unit outputs in kW (one-hour steps, so kW == kWh per step),
storage in kWh, water in gallons, prices in $/kWh, $/gal and $/kW.

Per-hour decision block (``BLOCK`` variables, offsets in ``VAR_OFFSET``):

    P_cs P_hrc P_hwg P_ct P_hx P_cw P_hw   unit loads / storage discharge
    r_e r_w r_ng                           purchases from the market
    S_un_cw S_ov_cw S_un_hw S_ov_hw        balance slacks
    E_cw E_hw                              storage SOC after the hour
    ul_cw ol_cw ul_hw ol_hw                carryovers after the hour

plus one peak-demand variable ``R`` shared by the whole horizon.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem, LpSolution, LpStatus

UNITS = ("cs", "hrc", "hwg", "ct", "hx", "cw", "hw")
TANKS = ("cw", "hw")

VARS = (
    "P_cs", "P_hrc", "P_hwg", "P_ct", "P_hx", "P_cw", "P_hw",
    "r_e", "r_w", "r_ng",
    "S_un_cw", "S_ov_cw", "S_un_hw", "S_ov_hw",
    "E_cw", "E_hw",
    "ul_cw", "ol_cw", "ul_hw", "ol_hw",
)
VAR_OFFSET = {v: i for i, v in enumerate(VARS)}
BLOCK = len(VARS)


class PlantConfigError(ValueError):
    """Invalid plant configuration value or file."""


class SimulationError(RuntimeError):
    """The MPC problem for some hour could not be solved to optimality."""

    def __init__(self, msg: str, bundle: dict | None = None):
        super().__init__(msg)
        self.bundle = bundle or {}


@dataclass(frozen=True)
class PlantConfig:
    # kW of input per kW of output (water: gal per kW of condenser water)
    alpha_e_cs: float = 0.20
    alpha_e_hrc: float = 0.30
    alpha_e_hwg: float = 0.02
    alpha_ng_hwg: float = 1.10
    alpha_e_ct: float = 0.02
    alpha_w_ct: float = 0.50
    alpha_h_hrc: float = 1.30
    alpha_cond_cs: float = 1.25
    # unit load bounds, kW
    p_min: dict = field(default_factory=lambda: {
        "cs": 0.0, "hrc": 0.0, "hwg": 0.0, "ct": 0.0, "hx": 0.0, "cw": -3000.0, "hw": -1200.0})
    p_max: dict = field(default_factory=lambda: {
        "cs": 1500.0, "hrc": 400.0, "hwg": 800.0, "ct": 5000.0, "hx": 1000.0, "cw": 3000.0, "hw": 1200.0})
    # storage capacities, kWh
    cap_cw: float = 6000.0
    cap_hw: float = 2400.0
    price_water: float = 0.009
    price_gas: float = 0.018
    price_demand: float = 4.5
    # $/kWh per hour outstanding; None -> 10x the highest electricity price seen
    rho_cw: float | None = None
    rho_hw: float | None = None
    horizon: int = 48
    month_hours: int = 720
    sigma_policy: str = "remaining"

    def __post_init__(self):
        for f in ("alpha_e_cs", "alpha_e_hrc", "alpha_e_hwg", "alpha_ng_hwg", "alpha_e_ct",
                  "alpha_w_ct", "alpha_h_hrc", "alpha_cond_cs"):
            if not getattr(self, f) > 0:
                raise PlantConfigError(f"{f} must be positive")
        for u in UNITS:
            if u not in self.p_min or u not in self.p_max:
                raise PlantConfigError(f"missing load bounds for unit {u!r}")
            if not self.p_min[u] <= self.p_max[u]:
                raise PlantConfigError(f"p_min[{u}] > p_max[{u}]")
        if not (self.cap_cw > 0 and self.cap_hw > 0):
            raise PlantConfigError("storage capacities must be positive")
        for f in ("price_water", "price_gas", "price_demand"):
            if not getattr(self, f) >= 0:
                raise PlantConfigError(f"{f} must be nonnegative")
        for f in ("rho_cw", "rho_hw"):
            v = getattr(self, f)
            if v is not None and not v >= 0:
                raise PlantConfigError(f"{f} must be nonnegative")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise PlantConfigError("horizon must be a positive integer")
        if int(self.month_hours) != self.month_hours or self.month_hours < 1:
            raise PlantConfigError("month_hours must be a positive integer")
        if self.sigma_policy not in ("remaining", "month"):
            raise PlantConfigError("sigma_policy must be 'remaining' or 'month'")

    def cap(self, tank: str) -> float:
        return self.cap_cw if tank == "cw" else self.cap_hw

    def with_penalties(self, max_price: float) -> "PlantConfig":
        """Fill unset slack penalties with 10x ``max_price``."""
        return dataclasses.replace(
            self,
            rho_cw=10.0 * max_price if self.rho_cw is None else self.rho_cw,
            rho_hw=10.0 * max_price if self.rho_hw is None else self.rho_hw,
        )

    def replace(self, **kw) -> "PlantConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class BackoffTerms:
    cw: float = 0.0
    hw: float = 0.0

    def __post_init__(self):
        for v in (self.cw, self.hw):
            if not 0.0 <= v <= 0.5:
                raise PlantConfigError(f"back-off terms must lie in [0, 0.5], got {v}")

    def of(self, tank: str) -> float:
        return self.cw if tank == "cw" else self.hw


def backoff_bounds(E: float, beta: float, cap: float) -> tuple[float, float]:
    """Storage bounds for the next step given the current (in-range) SOC."""
    lo, hi = beta * cap, (1.0 - beta) * cap
    return min(E, lo), max(E, hi)


@dataclass(frozen=True)
class PlantState:
    E: dict
    ul: dict = field(default_factory=lambda: {"cw": 0.0, "hw": 0.0})
    ol: dict = field(default_factory=lambda: {"cw": 0.0, "hw": 0.0})
    R: float = 0.0
    t: int = 0
    E_lo: dict | None = None
    E_hi: dict | None = None

    def __post_init__(self):
        for j in TANKS:
            for name, d in (("ul", self.ul), ("ol", self.ol)):
                if d[j] < 0:
                    raise ValueError(f"{name}[{j}] must be nonnegative")
            if self.E[j] < 0:
                raise ValueError(f"E[{j}] must be nonnegative")
        if self.R < 0:
            raise ValueError("R must be nonnegative")

    def first_bounds(self, tank: str, beta: float, cap: float) -> tuple[float, float]:
        if self.E_lo is not None and self.E_hi is not None:
            return self.E_lo[tank], self.E_hi[tank]
        return backoff_bounds(self.E[tank], beta, cap)


def initial_state(config: PlantConfig, soc_fraction: float = 0.5) -> PlantState:
    return PlantState(E={j: soc_fraction * config.cap(j) for j in TANKS})


@dataclass(frozen=True)
class ForecastWindow:
    L_e: np.ndarray
    L_cw: np.ndarray
    L_hw: np.ndarray
    price_e: np.ndarray

    def __post_init__(self):
        n = len(self.price_e)
        for name in ("L_e", "L_cw", "L_hw"):
            v = np.asarray(getattr(self, name), dtype=float)
            if len(v) != n:
                raise ValueError("forecast vectors must share one length")
            if np.any(v < 0):
                raise ValueError(f"{name} forecast has negative loads")

    def __len__(self) -> int:
        return len(self.price_e)


@dataclass(frozen=True)
class ControlAction:
    P: dict
    S_un: dict
    S_ov: dict


def lp_size(T: int) -> int:
    return BLOCK * T + 1


def sigma_for(config: PlantConfig, t: int) -> int:
    if config.sigma_policy == "month":
        return config.month_hours
    return config.month_hours - (t % config.month_hours)


def build_mpc_lp(config: PlantConfig, state: PlantState, fc: ForecastWindow,
                 backoff: BackoffTerms, sigma_t: float) -> LpProblem:
    """Assemble the receding-horizon LP for the hour ``state.t``."""
    T = len(fc)
    if T < 1:
        raise ValueError("empty forecast window")
    if not sigma_t > 0:
        raise ValueError("sigma_t must be positive")
    rho_cw = config.rho_cw if config.rho_cw is not None else 10.0 * float(np.max(fc.price_e))
    rho_hw = config.rho_hw if config.rho_hw is not None else 10.0 * float(np.max(fc.price_e))
    rho = {"cw": rho_cw, "hw": rho_hw}

    n = lp_size(T)
    iR = n - 1

    def ix(name, k):
        return k * BLOCK + VAR_OFFSET[name]

    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    names = [f"{v}[{k}]" for k in range(T) for v in VARS] + ["R"]

    A_eq = np.zeros((12 * T, n))
    b_eq = np.zeros(12 * T)
    eq_names = []
    A_ub = np.zeros((T, n))
    b_ub = np.zeros(T)
    ub_names = []

    row = 0

    def eq(coefs, rhs, tag):
        nonlocal row
        for j, a in coefs:
            A_eq[row, j] += a
        b_eq[row] = rhs
        eq_names.append(tag)
        row += 1

    cap = {j: config.cap(j) for j in TANKS}
    for k in range(T):
        c[ix("r_e", k)] = fc.price_e[k]
        c[ix("r_w", k)] = config.price_water
        c[ix("r_ng", k)] = config.price_gas
        for j in TANKS:
            c[ix(f"ul_{j}", k)] = rho[j]
            c[ix(f"ol_{j}", k)] = rho[j]

        for u in UNITS:
            lb[ix(f"P_{u}", k)] = config.p_min[u]
            ub[ix(f"P_{u}", k)] = config.p_max[u]
        for v in ("r_e", "r_w", "r_ng"):
            lb[ix(v, k)] = -np.inf
        for j in TANKS:
            beta = backoff.of(j)
            if k == 0:
                lo, hi = state.first_bounds(j, beta, cap[j])
            else:
                lo, hi = beta * cap[j], (1.0 - beta) * cap[j]
            if lo > hi:
                raise ValueError(f"storage bounds for {j} are crossed: [{lo}, {hi}]")
            lb[ix(f"E_{j}", k)] = lo
            ub[ix(f"E_{j}", k)] = hi

        eq([(ix("r_e", k), 1.0), (ix("P_cs", k), -config.alpha_e_cs),
            (ix("P_hrc", k), -config.alpha_e_hrc), (ix("P_hwg", k), -config.alpha_e_hwg),
            (ix("P_ct", k), -config.alpha_e_ct)], fc.L_e[k], f"elec[{k}]")
        eq([(ix("r_w", k), 1.0), (ix("P_ct", k), -config.alpha_w_ct)], 0.0, f"water[{k}]")
        eq([(ix("r_ng", k), 1.0), (ix("P_hwg", k), -config.alpha_ng_hwg)], 0.0, f"gas[{k}]")
        eq([(ix("P_ct", k), 1.0), (ix("P_cs", k), -config.alpha_cond_cs), (ix("P_hx", k), -1.0)],
           0.0, f"condenser[{k}]")
        eq([(ix("P_cs", k), 1.0), (ix("P_hrc", k), 1.0), (ix("P_cw", k), 1.0),
            (ix("S_un_cw", k), 1.0), (ix("S_ov_cw", k), -1.0)], fc.L_cw[k], f"chilled[{k}]")
        eq([(ix("P_hrc", k), config.alpha_h_hrc), (ix("P_hwg", k), 1.0), (ix("P_hx", k), -1.0),
            (ix("P_hw", k), 1.0), (ix("S_un_hw", k), 1.0), (ix("S_ov_hw", k), -1.0)],
           fc.L_hw[k], f"hot[{k}]")
        for j in TANKS:
            coefs = [(ix(f"E_{j}", k), 1.0), (ix(f"P_{j}", k), 1.0)]
            if k == 0:
                eq(coefs, state.E[j], f"soc_{j}[{k}]")
            else:
                eq(coefs + [(ix(f"E_{j}", k - 1), -1.0)], 0.0, f"soc_{j}[{k}]")
        for j in TANKS:
            for carry, slack, start in (("ul", "S_un", state.ul[j]), ("ol", "S_ov", state.ol[j])):
                coefs = [(ix(f"{carry}_{j}", k), 1.0), (ix(f"{slack}_{j}", k), 1.0)]
                if k == 0:
                    eq(coefs, start, f"{carry}_{j}[{k}]")
                else:
                    eq(coefs + [(ix(f"{carry}_{j}", k - 1), -1.0)], 0.0, f"{carry}_{j}[{k}]")

        A_ub[k, ix("r_e", k)] = 1.0
        A_ub[k, iR] = -1.0
        ub_names.append(f"peak[{k}]")

    c[iR] = config.price_demand / sigma_t
    lb[iR] = state.R

    return LpProblem(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lb=lb, ub=ub,
                     var_names=names, eq_names=eq_names, ub_names=ub_names)


def extract_first_action(p: LpProblem, s: LpSolution) -> ControlAction:
    if s.status is not LpStatus.OPTIMAL:
        raise SimulationError(f"cannot extract an action from a {s.status.value} LP")
    P = {u: float(s.x[p.index(f"P_{u}[0]")]) for u in UNITS}
    S_un = {j: float(s.x[p.index(f"S_un_{j}[0]")]) for j in TANKS}
    S_ov = {j: float(s.x[p.index(f"S_ov_{j}[0]")]) for j in TANKS}
    return ControlAction(P=P, S_un=S_un, S_ov=S_ov)


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

_SCALAR_KEYS = {
    "alpha_e_cs": float, "alpha_e_hrc": float, "alpha_e_hwg": float, "alpha_ng_hwg": float,
    "alpha_e_ct": float, "alpha_w_ct": float, "alpha_h_hrc": float, "alpha_cond_cs": float,
    "cap_cw": float, "cap_hw": float,
    "price_water": float, "price_gas": float, "price_demand": float,
    "rho_cw": float, "rho_hw": float,
    "horizon": int, "month_hours": int, "sigma_policy": str,
}
_BOUND_KEYS = {f"p_{side}_{u}": (side, u) for side in ("min", "max") for u in UNITS}

# keys of the [sim] and [series] sections and their parsers
SIM_KEYS = {"span_hours": int, "noise_std": float, "noise_seed": int, "soc_init": float}
SERIES_KEYS = {
    "L_e_mean": float, "L_e_amp": float, "L_cw_mean": float, "L_cw_amp": float,
    "L_hw_mean": float, "L_hw_amp": float, "weekend_factor": float,
    "price_base": float, "price_peak": float,
}


def _parse_value(raw: str, typ, lineno: int, key: str):
    if typ is str:
        return raw
    if raw.lower() in ("none", "auto") and key in ("rho_cw", "rho_hw"):
        return None
    try:
        v = typ(raw)
    except ValueError:
        raise PlantConfigError(f"line {lineno}: {key} expects {typ.__name__}, got {raw!r}") from None
    if typ is float and not np.isfinite(v):
        raise PlantConfigError(f"line {lineno}: {key} must be finite")
    return v


def parse_config_text(text: str) -> dict:
    """Parse the ``key = value`` config format into ``{section: {key: value}}``.

    Sections are ``[plant]``, ``[sim]`` and ``[series]``; ``#`` starts a
    comment.  Unknown sections or keys, duplicates and malformed values raise
    ``PlantConfigError`` naming the offending line.
    """
    schemas = {
        "plant": {**_SCALAR_KEYS, **{k: float for k in _BOUND_KEYS}},
        "sim": SIM_KEYS,
        "series": SERIES_KEYS,
    }
    out: dict = {s: {} for s in schemas}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise PlantConfigError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in schemas:
                raise PlantConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise PlantConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise PlantConfigError(f"line {lineno}: key outside of any section")
        key, raw = (s.strip() for s in line.split("=", 1))
        schema = schemas[section]
        if key not in schema:
            raise PlantConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in out[section]:
            raise PlantConfigError(f"line {lineno}: duplicate key {key!r}")
        out[section][key] = _parse_value(raw, schema[key], lineno, key)
    return out


def plant_config_from_dict(values: dict) -> PlantConfig:
    kw = {}
    p_min = dict(PlantConfig().p_min)
    p_max = dict(PlantConfig().p_max)
    for key, v in values.items():
        if key in _BOUND_KEYS:
            side, u = _BOUND_KEYS[key]
            (p_min if side == "min" else p_max)[u] = v
        else:
            kw[key] = v
    return PlantConfig(p_min=p_min, p_max=p_max, **kw)
