"""
Linear programs and a self-contained bounded-variable simplex solver.

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lb <= x <= ub          (infinite bounds allowed)

The built-in solver is a revised simplex with an explicit basis inverse
(kernels in ``_simplex``).  An
adapter to SciPy's HiGHS is available via ``solve(p, backend="highs")`` for
cross-checking or larger problems.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _simplex


class LpInputError(ValueError):
    """Malformed LP (inconsistent dimensions, non-finite data, crossed bounds)."""


class LpSolverError(RuntimeError):
    """The solver hit its iteration cap or lost numerical accuracy."""


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


def _as_matrix(M, ncols: int, what: str) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    if sp.issparse(M):
        M = M.toarray()
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, ncols))
    if M.shape[1] != ncols:
        raise LpInputError(f"{what} has {M.shape[1]} columns, expected {ncols}")
    return M


@dataclass
class LpProblem:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    var_names: list[str] | None = None
    eq_names: list[str] | None = None
    ub_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.A_ub = _as_matrix(self.A_ub, n, "A_ub")
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        if self.b_eq.size != self.A_eq.shape[0]:
            raise LpInputError(f"b_eq has {self.b_eq.size} entries for {self.A_eq.shape[0]} rows")
        if self.b_ub.size != self.A_ub.shape[0]:
            raise LpInputError(f"b_ub has {self.b_ub.size} entries for {self.A_ub.shape[0]} rows")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel().copy()
        if self.lb.size != n or self.ub.size != n:
            raise LpInputError("bound vectors must have one entry per variable")
        for name, arr in (("c", self.c), ("A_eq", self.A_eq), ("b_eq", self.b_eq),
                          ("A_ub", self.A_ub), ("b_ub", self.b_ub)):
            if not np.all(np.isfinite(arr)):
                raise LpInputError(f"{name} contains non-finite entries")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise LpInputError("bounds contain NaN")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise LpInputError("lower bound +inf or upper bound -inf")
        bad = np.flatnonzero(self.lb > self.ub)
        if bad.size:
            j = bad[0]
            raise LpInputError(f"variable {self.name_of(j)} has lb {self.lb[j]} > ub {self.ub[j]}")
        if self.var_names is not None and len(self.var_names) != n:
            raise LpInputError("var_names length does not match number of variables")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A_eq.shape[0] + self.A_ub.shape[0]

    def name_of(self, j: int) -> str:
        return self.var_names[j] if self.var_names else f"x{j}"

    def index(self, name: str) -> int:
        if self.var_names is None:
            raise KeyError(name)
        if not hasattr(self, "_index"):
            self._index = {v: i for i, v in enumerate(self.var_names)}
        return self._index[name]

    def residuals(self, x) -> dict[str, float]:
        """Row-scaled constraint violations of ``x`` (all zero when feasible)."""
        x = np.asarray(x, dtype=float)
        out = {"eq": 0.0, "ub": 0.0, "bounds": 0.0}
        if self.A_eq.shape[0]:
            s = np.maximum(np.abs(self.A_eq).max(axis=1), 1.0)
            out["eq"] = float(np.max(np.abs(self.A_eq @ x - self.b_eq) / s))
        if self.A_ub.shape[0]:
            s = np.maximum(np.abs(self.A_ub).max(axis=1), 1.0)
            out["ub"] = float(max(0.0, np.max((self.A_ub @ x - self.b_ub) / s)))
        out["bounds"] = float(max(0.0, np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))
        return out

    def max_residual(self, x) -> float:
        return max(self.residuals(x).values())


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _pow2_scale(v: np.ndarray) -> np.ndarray:
    # exact scaling factors: powers of two leave mantissas untouched
    out = np.ones_like(v)
    nz = v > 0
    out[nz] = 2.0 ** (-np.round(np.log2(v[nz])))
    return out


def solve(p: LpProblem, backend: str = "simplex") -> LpSolution:
    """Solve ``p``.  ``backend`` is ``"simplex"`` (built-in) or ``"highs"``."""
    if backend == "highs":
        return _solve_highs(p)
    if backend != "simplex":
        raise LpInputError(f"unknown LP backend {backend!r}")

    n = p.n
    m_eq, m_ub = p.A_eq.shape[0], p.A_ub.shape[0]
    m = m_eq + m_ub
    if m == 0:
        return _solve_box(p)

    A = np.vstack([p.A_eq, p.A_ub])
    b = np.concatenate([p.b_eq, p.b_ub])
    rs = _pow2_scale(np.abs(A).max(axis=1))
    A = A * rs[:, None]
    b = b * rs

    n_struct = n + m_ub
    ntot = n_struct + m
    lo = np.concatenate([p.lb, np.zeros(m_ub), np.zeros(m)])
    hi = np.concatenate([p.ub, np.full(m_ub, np.inf), np.zeros(m)])
    cost = np.concatenate([p.c, np.zeros(m_ub + m)])

    slack = np.zeros((m, m_ub))
    slack[m_eq:, :] = np.eye(m_ub)
    A_s = sp.csc_matrix(np.hstack([A, slack]))
    A_s.sort_indices()
    x, basis, pos, art_sign, art_hi = _crash_start(A_s, b, lo[:n_struct], hi[:n_struct], m, n)
    hi[n_struct:] = art_hi
    x = np.concatenate([x, np.zeros(m)])
    pos = np.concatenate([pos, np.full(m, _simplex.AT_LOWER, dtype=np.int64)])
    for i in range(m):
        if basis[i] < 0:
            basis[i] = n_struct + i
            pos[n_struct + i] = _simplex.BASIC
    csc = sp.hstack([A_s, sp.diags(art_sign)], format="csc")
    csc.sort_indices()

    max_iter = 50 * (n + m)
    status, iters = _drive(csc, b, cost, lo, hi, x, basis, pos, n_struct, max_iter)
    if status == _simplex.ITERATION_LIMIT:
        raise LpSolverError(f"simplex exceeded {max_iter} iterations (n={n}, m={m})")
    if status == _simplex.INFEASIBLE:
        return LpSolution(LpStatus.INFEASIBLE, None, float("nan"), iters)
    if status == _simplex.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, None, -float("inf"), iters)

    xs = x[:n].copy()
    # snap values that sit within rounding of a finite bound
    near_lo = np.isfinite(p.lb) & (np.abs(xs - p.lb) <= 1e-11 * np.maximum(1.0, np.abs(p.lb)))
    near_hi = np.isfinite(p.ub) & (np.abs(xs - p.ub) <= 1e-11 * np.maximum(1.0, np.abs(p.ub)))
    xs[near_lo] = p.lb[near_lo]
    xs[near_hi] = p.ub[near_hi]
    res = p.max_residual(xs)
    if res > 1e-7:
        raise LpSolverError(f"simplex returned a point with scaled residual {res:.3g}")
    return LpSolution(LpStatus.OPTIMAL, xs, float(p.c @ xs), iters, {"residual": res})


def _factor(csc, basis):
    try:
        return spla.splu(csc[:, basis].tocsc())
    except RuntimeError as exc:  # exactly singular
        raise LpSolverError(f"basis matrix became singular: {exc}") from None


def _invert(lu) -> np.ndarray:
    Lm, Um = lu.L.tocsc(), lu.U.tocsc()
    Binv = _simplex.inverse_from_lu(
        lu.shape[0],
        Lm.indptr.astype(np.int64), Lm.indices.astype(np.int64), Lm.data,
        Um.indptr.astype(np.int64), Um.indices.astype(np.int64), Um.data,
        lu.perm_r.astype(np.int64), lu.perm_c.astype(np.int64),
    )
    if not np.all(np.isfinite(Binv)):
        raise LpSolverError("basis matrix became numerically singular")
    return Binv


def _refresh_basic(csc, b, x, basis, pos, lu):
    nonbasic = pos != _simplex.BASIC
    rhs = b - csc[:, nonbasic] @ x[nonbasic]
    x[basis] = lu.solve(rhs)


def _phase(csc, arrays, b, cost, lo, hi, x, basis, pos, max_iter, it, Binv=None):
    stall = np.zeros(2, dtype=np.int64)
    while True:
        if Binv is None:
            lu = _factor(csc, basis)
            Binv = _invert(lu)
            _refresh_basic(csc, b, x, basis, pos, lu)
        status, it = _simplex.run_phase(*arrays, cost, lo, hi, x, basis, pos, Binv,
                                        max_iter, it, _simplex.REFACTOR_EVERY, stall)
        if status != _simplex.NEED_REFACTOR:
            _refresh_basic(csc, b, x, basis, pos, _factor(csc, basis))
            return status, it, Binv
        Binv = None


def _drive(csc, b, cost, lo, hi, x, basis, pos, n_struct, max_iter):
    """Two-phase simplex; artificial columns are ``n_struct ..`` (one per row)."""
    m = b.size
    arrays = (csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data)
    it = 0
    art = slice(n_struct, n_struct + m)
    Binv = None
    if np.any(hi[art] > 0):
        c1 = np.zeros_like(cost)
        c1[art] = 1.0
        status, it, Binv = _phase(csc, arrays, b, c1, lo, hi, x, basis, pos, max_iter, it)
        if status == _simplex.ITERATION_LIMIT:
            return status, it
        if np.sum(x[art]) > 1e-8 * max(1.0, float(np.max(np.abs(b)))):
            return _simplex.INFEASIBLE, it
        hi[art] = 0.0
        nb = np.flatnonzero(pos[art] != _simplex.BASIC) + n_struct
        x[nb] = 0.0
        pos[nb] = _simplex.AT_LOWER
    status, it, _ = _phase(csc, arrays, b, cost, lo, hi, x, basis, pos, max_iter, it, Binv)
    return status, it


def _crash_start(A_s, b, lo, hi, m, n):
    """Starting point: triangular crash basis, infeasible picks replaced by artificials."""
    ncand = A_s.shape[1]
    x = np.clip(0.0, lo, hi)
    pos = np.full(ncand, _simplex.AT_ZERO, dtype=np.int64)
    pos[lo == x] = _simplex.AT_LOWER
    pos[(hi == x) & (lo != x)] = _simplex.AT_UPPER
    csr = A_s.tocsr()
    free_col = (lo == -np.inf) & (hi == np.inf)
    slack_col = np.arange(ncand) >= n
    row_col, order = _simplex.triangular_crash(
        A_s.indptr.astype(np.int64), A_s.indices.astype(np.int64), A_s.data,
        csr.indptr.astype(np.int64), csr.indices.astype(np.int64), m, ncand, free_col, slack_col,
    )
    basis, x, pos = _simplex.crash_values(
        csr.indptr.astype(np.int64), csr.indices.astype(np.int64), csr.data,
        b, lo, hi, x, pos, row_col, order,
    )
    resid = b - csr @ x
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    art_hi = np.where(basis < 0, np.inf, 0.0)
    return x, basis, pos, art_sign, art_hi


def _solve_box(p: LpProblem) -> LpSolution:
    x = np.where(p.c > 0, p.lb, np.where(p.c < 0, p.ub, np.clip(0.0, p.lb, p.ub)))
    if not np.all(np.isfinite(x)):
        return LpSolution(LpStatus.UNBOUNDED, None, -float("inf"), 0)
    return LpSolution(LpStatus.OPTIMAL, x, float(p.c @ x), 0)


def _solve_highs(p: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    res = linprog(
        p.c,
        A_ub=p.A_ub if p.A_ub.shape[0] else None, b_ub=p.b_ub if p.A_ub.shape[0] else None,
        A_eq=p.A_eq if p.A_eq.shape[0] else None, b_eq=p.b_eq if p.A_eq.shape[0] else None,
        bounds=list(zip(np.where(np.isfinite(p.lb), p.lb, None), np.where(np.isfinite(p.ub), p.ub, None))),
        method="highs",
    )
    if res.status == 0:
        return LpSolution(LpStatus.OPTIMAL, res.x, float(p.c @ res.x), int(res.nit))
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE, None, float("nan"), int(res.nit))
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, None, -float("inf"), int(res.nit))
    raise LpSolverError(f"HiGHS failed: {res.message}")


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) > 1e15 else str(int(v))


def _lp_name(v: str) -> str:
    return "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in v)


def write_lp_file(p: LpProblem, path) -> None:
    """Dump ``p`` in CPLEX LP text format for cross-checking with external solvers."""
    names = [f"x{j}" for j in range(p.n)] if p.var_names is None else [_lp_name(v) for v in p.var_names]

    def expr(coefs):
        terms = []
        for j in np.flatnonzero(coefs):
            a = coefs[j]
            terms.append(f"{'-' if a < 0 else '+'} {_fmt(abs(a))} {names[j]}")
        if not terms:
            return "0 " + names[0]
        s = " ".join(terms)
        return s[2:] if s.startswith("+ ") else s

    lines = ["\\ generated by mpctune", "Minimize", f" obj: {expr(p.c)}", "Subject To"]
    for i in range(p.A_eq.shape[0]):
        tag = _lp_name(p.eq_names[i]) if p.eq_names else f"e{i}"
        lines.append(f" {tag}: {expr(p.A_eq[i])} = {_fmt(p.b_eq[i])}")
    for i in range(p.A_ub.shape[0]):
        tag = _lp_name(p.ub_names[i]) if p.ub_names else f"u{i}"
        lines.append(f" {tag}: {expr(p.A_ub[i])} <= {_fmt(p.b_ub[i])}")
    lines.append("Bounds")
    for j in range(p.n):
        lo, hi = p.lb[j], p.ub[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(f" {names[j]} free")
        elif lo == hi:
            lines.append(f" {names[j]} = {_fmt(lo)}")
        else:
            left = "-inf" if lo == -np.inf else _fmt(lo)
            right = "+inf" if hi == np.inf else _fmt(hi)
            lines.append(f" {left} <= {names[j]} <= {right}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
