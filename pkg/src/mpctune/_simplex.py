"""
Compiled kernels of the bounded-variable revised simplex.

Works on ``A x = b, l <= x <= u`` with ``A`` in CSC form.  The basis inverse
is kept explicitly (dense, m x m) and updated by elementary row operations;
the driver in ``lp`` re-inverts it from a sparse LU every ``REFACTOR_EVERY``
pivots.
"""

from __future__ import annotations

import heapq

import numpy as np

try:
    from numba import njit
except ModuleNotFoundError:  # pragma: no cover - pure-python fallback

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


# status codes
OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3
NEED_REFACTOR = 4

# nonbasic position codes
BASIC = -1
AT_LOWER = 0
AT_UPPER = 1
AT_ZERO = 2  # free or interior nonbasic, may move either way

REFACTOR_EVERY = 100
STALL_LIMIT = 1000

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9


@njit(cache=True)
def _col_dot(indptr, indices, data, j, y):
    s = 0.0
    for p in range(indptr[j], indptr[j + 1]):
        s += data[p] * y[indices[p]]
    return s


@njit(cache=True)
def basic_values(indptr, indices, data, b, x, basis, pos, Binv):
    """Recompute basic variable values from the nonbasic ones."""
    m = b.shape[0]
    rhs = b.copy()
    for j in range(x.shape[0]):
        if pos[j] != BASIC and x[j] != 0.0:
            for p in range(indptr[j], indptr[j + 1]):
                rhs[indices[p]] -= data[p] * x[j]
    xb = Binv @ rhs
    for k in range(m):
        x[basis[k]] = xb[k]


@njit(cache=True)
def _duals(Binv, cost, basis, m):
    cb = np.empty(m)
    for k in range(m):
        cb[k] = cost[basis[k]]
    return Binv.T @ cb


@njit(cache=True)
def run_phase(indptr, indices, data, cost, lo, hi, x, basis, pos, Binv,
              max_iter, it, budget, stall_state):
    """Primal simplex pivots from the current basis.

    Returns ``NEED_REFACTOR`` after ``budget`` basis changes so the caller can
    re-invert; ``stall_state`` carries (non-improving count, Bland flag)
    across calls.  Returns (status, iterations so far).
    """
    m = Binv.shape[0]
    ntot = cost.shape[0]
    is_basic = pos == BASIC
    y = _duals(Binv, cost, basis, m)
    w = np.empty(m)
    pivots = 0
    stall = stall_state[0]
    bland = stall_state[1] != 0
    obj = 0.0
    for j in range(ntot):
        obj += cost[j] * x[j]

    while True:
        if it >= max_iter:
            return ITERATION_LIMIT, it
        if pivots >= budget:
            stall_state[0] = stall
            stall_state[1] = 1 if bland else 0
            return NEED_REFACTOR, it

        # pricing
        q = -1
        best = 0.0
        direction = 0
        for j in range(ntot):
            if is_basic[j]:
                continue
            if lo[j] == hi[j]:
                continue
            d = cost[j] - _col_dot(indptr, indices, data, j, y)
            pj = pos[j]
            if pj == AT_LOWER:
                cand = -d if d < -OPT_TOL else 0.0
                sgn = 1
            elif pj == AT_UPPER:
                cand = d if d > OPT_TOL else 0.0
                sgn = -1
            else:
                if d < -OPT_TOL:
                    cand = -d
                    sgn = 1
                elif d > OPT_TOL:
                    cand = d
                    sgn = -1
                else:
                    cand = 0.0
                    sgn = 0
            if cand > 0.0:
                if bland:
                    q = j
                    direction = sgn
                    break
                if cand > best:
                    best = cand
                    q = j
                    direction = sgn
        if q < 0:
            return OPTIMAL, it

        # entering column in basis coordinates
        for k in range(m):
            w[k] = 0.0
        for p in range(indptr[q], indptr[q + 1]):
            r = indices[p]
            a = data[p]
            for k in range(m):
                w[k] += Binv[k, r] * a

        # ratio test: x_B(t) = x_B - direction * t * w
        t_best = np.inf
        leave = -1
        leave_to_upper = False
        if direction > 0:
            t_flip = hi[q] - x[q]
        else:
            t_flip = x[q] - lo[q]
        for k in range(m):
            wk = w[k]
            if abs(wk) <= PIVOT_TOL:
                continue
            delta = -direction * wk
            j = basis[k]
            if delta < 0.0:
                if lo[j] == -np.inf:
                    continue
                t = (x[j] - lo[j]) / (-delta)
                to_upper = False
            else:
                if hi[j] == np.inf:
                    continue
                t = (hi[j] - x[j]) / delta
                to_upper = True
            if t < 0.0:
                t = 0.0
            if leave < 0 or t < t_best - 1e-12:
                take = True
            elif t <= t_best + 1e-12:
                if bland:
                    take = j < basis[leave]
                else:
                    take = abs(wk) > abs(w[leave]) or (abs(wk) == abs(w[leave]) and j < basis[leave])
            else:
                take = False
            if take:
                t_best = t
                leave = k
                leave_to_upper = to_upper

        if t_flip <= t_best:
            if t_flip == np.inf:
                return UNBOUNDED, it
            t_best = t_flip
            leave = -1

        # move
        if t_best > 0.0:
            for k in range(m):
                x[basis[k]] -= direction * t_best * w[k]
            x[q] += direction * t_best

        it += 1
        new_obj = 0.0
        for j in range(ntot):
            new_obj += cost[j] * x[j]
        if new_obj < obj - 1e-12 * max(1.0, abs(obj)):
            stall = 0
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True
        obj = new_obj

        if leave < 0:
            # bound flip, basis unchanged
            if direction > 0:
                x[q] = hi[q]
                pos[q] = AT_UPPER
            else:
                x[q] = lo[q]
                pos[q] = AT_LOWER
            continue

        jl = basis[leave]
        if leave_to_upper:
            x[jl] = hi[jl]
            pos[jl] = AT_UPPER
        else:
            x[jl] = lo[jl]
            pos[jl] = AT_LOWER
        is_basic[jl] = False
        basis[leave] = q
        pos[q] = BASIC
        is_basic[q] = True

        pivots += 1

        piv = w[leave]
        row = Binv[leave, :] / piv
        dq = cost[q] - _col_dot(indptr, indices, data, q, y)
        for k in range(m):
            if k == leave:
                continue
            f = w[k]
            if f != 0.0:
                for c in range(m):
                    Binv[k, c] -= f * row[c]
        Binv[leave, :] = row
        for c in range(m):
            y[c] += dq * row[c]


@njit(cache=True)
def triangular_crash(indptr, indices, data, rindptr, rcols, m, ncand, free_col, slack_col):
    """Pick a triangular starting basis among the first ``ncand`` columns.

    A column becomes eligible once it has exactly one nonzero in the rows not
    yet assigned; eligible columns are taken free-first, then slacks, then by
    index.  Returns ``row_col`` (column per row, -1 if unassigned) and the
    assignment order of the rows.
    """
    count = np.zeros(ncand, dtype=np.int64)
    colmax = np.zeros(ncand)
    for j in range(ncand):
        count[j] = indptr[j + 1] - indptr[j]
        for p in range(indptr[j], indptr[j + 1]):
            colmax[j] = max(colmax[j], abs(data[p]))
    row_done = np.zeros(m, dtype=np.bool_)
    col_used = np.zeros(ncand, dtype=np.bool_)
    row_col = np.full(m, -1, dtype=np.int64)
    order = np.full(m, -1, dtype=np.int64)
    heap = [np.int64(0)]
    heap.pop()
    for j in range(ncand):
        if count[j] == 1:
            cls = 0 if free_col[j] else (1 if slack_col[j] else 2)
            heapq.heappush(heap, np.int64(cls * ncand + j))
    n_assigned = 0
    while len(heap) > 0:
        key = heapq.heappop(heap)
        j = key % ncand
        if col_used[j] or count[j] != 1:
            continue
        r = -1
        a = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            if not row_done[indices[p]]:
                r = indices[p]
                a = data[p]
        if r < 0 or abs(a) < 0.1 * colmax[j]:
            continue
        col_used[j] = True
        row_done[r] = True
        row_col[r] = j
        order[n_assigned] = r
        n_assigned += 1
        for p in range(rindptr[r], rindptr[r + 1]):
            jj = rcols[p]
            if jj < ncand and not col_used[jj]:
                count[jj] -= 1
                if count[jj] == 1:
                    cls = 0 if free_col[jj] else (1 if slack_col[jj] else 2)
                    heapq.heappush(heap, np.int64(cls * ncand + jj))
    return row_col, order[:n_assigned]


@njit(cache=True)
def crash_values(rindptr, rcols, rdata, b, lo, hi, x, pos, row_col, order):
    """Back-substitute the crash basis; out-of-bound picks go nonbasic at a bound."""
    m = b.shape[0]
    basis = np.full(m, -1, dtype=np.int64)
    for k in range(order.shape[0] - 1, -1, -1):
        r = order[k]
        j = row_col[r]
        s = b[r]
        a = 0.0
        for p in range(rindptr[r], rindptr[r + 1]):
            if rcols[p] == j:
                a = rdata[p]
            else:
                s -= rdata[p] * x[rcols[p]]
        v = s / a
        tol = FEAS_TOL * max(1.0, abs(v))
        if v < lo[j] - tol:
            x[j] = lo[j]
            pos[j] = AT_LOWER
        elif v > hi[j] + tol:
            x[j] = hi[j]
            pos[j] = AT_UPPER
        else:
            x[j] = min(max(v, lo[j]), hi[j])
            basis[r] = j
            pos[j] = BASIC
    return basis, x, pos


@njit(cache=True)
def inverse_from_lu(m, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, perm_r, perm_c):
    """Dense inverse of ``A`` from SuperLU factors ``Pr A Pc = L U`` (CSC, L unit-diagonal)."""
    Binv = np.zeros((m, m))
    z = np.empty(m)
    for i in range(m):
        for k in range(m):
            z[k] = 0.0
        z[perm_r[i]] = 1.0
        # L z = e
        for j in range(m):
            zj = z[j]
            if zj != 0.0:
                for p in range(l_ptr[j], l_ptr[j + 1]):
                    r = l_idx[p]
                    if r > j:
                        z[r] -= l_val[p] * zj
        # U v = z
        for j in range(m - 1, -1, -1):
            if z[j] != 0.0:
                diag = 0.0
                for p in range(u_ptr[j], u_ptr[j + 1]):
                    if u_idx[p] == j:
                        diag = u_val[p]
                zj = z[j] / diag
                z[j] = zj
                for p in range(u_ptr[j], u_ptr[j + 1]):
                    r = u_idx[p]
                    if r < j:
                        z[r] -= u_val[p] * zj
        for k in range(m):
            Binv[k, i] = z[perm_c[k]]
    return Binv
