"""Brute-force vertex enumeration for small boxed LPs."""

from itertools import combinations

import numpy as np


def random_lp(rng, feasible=True):
    """Boxed LP with n <= 6 variables and at most 8 rows (some equalities)."""
    n = int(rng.integers(1, 7))
    m_ub = int(rng.integers(0, 8))
    m_eq = int(rng.integers(0, min(n, 8 - m_ub) + 1)) if n > 1 else 0
    m_eq = min(m_eq, 2)
    lb = rng.uniform(-5, 0, n)
    ub = lb + rng.uniform(0.5, 6, n)
    x0 = rng.uniform(lb, ub)
    A_ub = rng.normal(size=(m_ub, n))
    A_eq = rng.normal(size=(m_eq, n))
    b_ub = A_ub @ x0 + rng.uniform(0, 2, m_ub)
    b_eq = A_eq @ x0
    if not feasible and m_ub:
        # push one row's right-hand side below anything the box can reach
        reach = np.sum(np.minimum(A_ub[0] * lb, A_ub[0] * ub))
        b_ub[0] = reach - 1.0
    c = rng.normal(size=n)
    return dict(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub)


def vertex_min(c, A_ub, b_ub, A_eq, b_eq, lb, ub, tol=1e-9):
    """Minimum of c.x over all feasible basic solutions, or None if none is feasible."""
    n = c.size
    G = np.vstack([A_ub, np.eye(n), -np.eye(n)])
    h = np.concatenate([b_ub, ub, -lb])
    k = n - A_eq.shape[0]
    best = None
    combos = list(combinations(range(G.shape[0]), k))
    combos = np.array(combos, dtype=int).reshape(len(combos), k)
    M = np.concatenate([np.broadcast_to(A_eq, (len(combos),) + A_eq.shape), G[combos]], axis=1)
    r = np.concatenate([np.broadcast_to(b_eq, (len(combos), b_eq.size)), h[combos]], axis=1)
    ok = np.abs(np.linalg.det(M)) > 1e-10
    if not ok.any():
        return None
    X = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    feas = np.all(X @ G.T <= h + tol * (1 + np.abs(h)), axis=1)
    if A_eq.shape[0]:
        feas &= np.all(np.abs(X @ A_eq.T - b_eq) <= 1e-7, axis=1)
    if feas.any():
        best = float(np.min(X[feas] @ c))
    return best
