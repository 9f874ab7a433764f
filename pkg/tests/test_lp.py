import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lp_oracle import random_lp, vertex_min
from mpctune.lp import LpInputError, LpProblem, LpStatus, solve, write_lp_file


def test_single_variable_upper_bound():
    s = solve(LpProblem(c=[-1.0], A_ub=[[1.0]], b_ub=[1.0]))
    assert s.status is LpStatus.OPTIMAL
    assert s.x[0] == pytest.approx(1.0)
    assert s.objective == pytest.approx(-1.0)


def test_contradictory_bounds_are_infeasible():
    s = solve(LpProblem(c=[1.0], A_ub=[[-1.0], [1.0]], b_ub=[-2.0, 1.0]))
    assert s.status is LpStatus.INFEASIBLE
    assert s.x is None


def test_unbounded_direction():
    s = solve(LpProblem(c=[-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0]))
    assert s.status is LpStatus.UNBOUNDED


def test_free_variables_and_equalities():
    # min x + y  s.t.  x - y = 1, x + y >= -3, both free
    p = LpProblem(c=[1.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[1.0], A_ub=[[-1.0, -1.0]], b_ub=[3.0],
                  lb=[-np.inf, -np.inf], ub=[np.inf, np.inf])
    s = solve(p)
    assert s.status is LpStatus.OPTIMAL
    assert s.objective == pytest.approx(-3.0)
    np.testing.assert_allclose(s.x, [-1.0, -2.0], atol=1e-9)


def test_no_rows_box_only():
    s = solve(LpProblem(c=[1.0, -2.0, 0.0], lb=[-1, 0, 0], ub=[3, 4, 1]))
    assert s.status is LpStatus.OPTIMAL
    assert s.objective == pytest.approx(-9.0)


def test_input_validation():
    with pytest.raises(LpInputError):
        LpProblem(c=[1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
    with pytest.raises(LpInputError):
        LpProblem(c=[1.0], lb=[2.0], ub=[1.0])
    with pytest.raises(LpInputError):
        LpProblem(c=[np.nan])
    with pytest.raises(LpInputError):
        LpProblem(c=[1.0], A_eq=[[1.0]], b_eq=[1.0, 2.0])
    with pytest.raises(ValueError):
        solve(LpProblem(c=[1.0]), backend="cplex")


def test_degenerate_problem_terminates():
    # Beale's cycling example (classic degenerate LP)
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    s = solve(LpProblem(c=c, A_ub=A, b_ub=[0.0, 0.0, 1.0]))
    assert s.status is LpStatus.OPTIMAL
    assert s.objective == pytest.approx(-0.05)


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(60):
        kw = random_lp(rng)
        ref = vertex_min(**kw)
        s = solve(LpProblem(**kw))
        assert ref is not None
        assert s.status is LpStatus.OPTIMAL
        assert s.objective == pytest.approx(ref, abs=1e-6)


def test_detects_infeasible_instances():
    rng = np.random.default_rng(8)
    for _ in range(30):
        kw = random_lp(rng, feasible=False)
        if kw["A_ub"].shape[0] == 0:
            continue
        assert vertex_min(**kw) is None
        assert solve(LpProblem(**kw)).status is LpStatus.INFEASIBLE


def test_agrees_with_highs_backend():
    rng = np.random.default_rng(9)
    for _ in range(30):
        p = LpProblem(**random_lp(rng))
        a, b = solve(p), solve(p, backend="highs")
        assert a.status is b.status is LpStatus.OPTIMAL
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_beats_every_sampled_feasible_point(seed):
    rng = np.random.default_rng(seed)
    kw = random_lp(rng)
    s = solve(LpProblem(**kw))
    assert s.status is LpStatus.OPTIMAL
    pts = rng.uniform(kw["lb"], kw["ub"], size=(2000, kw["c"].size))
    if kw["A_eq"].shape[0] == 0:
        ok = np.all(pts @ kw["A_ub"].T <= kw["b_ub"], axis=1)
        for x in pts[ok]:
            assert s.objective <= kw["c"] @ x + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_tightening_a_bound_never_lowers_the_minimum(seed, frac):
    rng = np.random.default_rng(seed)
    kw = random_lp(rng)
    base = solve(LpProblem(**kw))
    j = int(rng.integers(kw["c"].size))
    ub = kw["ub"].copy()
    ub[j] = kw["lb"][j] + frac * (ub[j] - kw["lb"][j])
    tight = solve(LpProblem(**{**kw, "ub": ub}))
    if tight.status is LpStatus.OPTIMAL:
        assert tight.objective >= base.objective - 1e-9 * max(1.0, abs(base.objective))
    else:
        assert tight.status is LpStatus.INFEASIBLE


def test_deterministic():
    rng = np.random.default_rng(10)
    p = LpProblem(**random_lp(rng))
    a, b = solve(p), solve(p)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.iterations == b.iterations


def test_residuals_within_tolerance():
    rng = np.random.default_rng(12)
    for _ in range(40):
        p = LpProblem(**random_lp(rng))
        s = solve(p)
        assert p.max_residual(s.x) <= 1e-7
        assert s.objective == pytest.approx(float(p.c @ s.x), rel=1e-9, abs=1e-12)


def parse_lp_file(text):
    """Minimal reader for the subset of the LP format the writer emits."""
    sec, obj, rows, bounds = None, {}, [], {}

    def terms(expr):
        out = {}
        for sign, coef, name in re.findall(r"([+-]?)\s*(\d[\d.]*(?:[eE][+-]?\d+)?)\s+(\w+)", expr):
            out[name] = float(coef) * (-1 if sign == "-" else 1)
        return out

    for line in text.splitlines():
        line = line.strip()
        if line in ("Minimize", "Subject To", "Bounds", "End"):
            sec = line
            continue
        if sec == "Minimize":
            obj = terms(line.split(":", 1)[1])
        elif sec == "Subject To":
            tag, body = line.split(":", 1)
            op = "<=" if "<=" in body else "="
            lhs, rhs = body.split(op)
            rows.append((tag, terms(lhs), op, float(rhs)))
        elif sec == "Bounds":
            if line.endswith("free"):
                bounds[line.split()[0]] = (-np.inf, np.inf)
            elif " = " in line:
                name, v = line.split(" = ")
                bounds[name] = (float(v), float(v))
            else:
                lo, name, hi = line.replace("<=", " ").split()
                bounds[name] = (float(lo), float(hi))
    return obj, rows, bounds


def test_lp_file_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    kw = random_lp(rng)
    n = kw["c"].size
    kw["lb"][0] = -np.inf
    p = LpProblem(**kw, var_names=[f"v[{j}]" for j in range(n)],
                  eq_names=[f"eq[{i}]" for i in range(kw["A_eq"].shape[0])],
                  ub_names=[f"ub[{i}]" for i in range(kw["A_ub"].shape[0])])
    path = tmp_path / "p.lp"
    write_lp_file(p, path)
    obj, rows, bounds = parse_lp_file(path.read_text())
    names = [f"v_{j}_" for j in range(n)]
    c = np.array([obj.get(v, 0.0) for v in names])
    np.testing.assert_array_equal(c, p.c)
    assert len(rows) == p.m
    A = np.array([[r[1].get(v, 0.0) for v in names] for r in rows]).reshape(p.m, n)
    np.testing.assert_array_equal(A, np.vstack([p.A_eq, p.A_ub]))
    assert all(re.fullmatch(r"\w+", r[0]) for r in rows)
    lo = np.array([bounds[v][0] for v in names])
    np.testing.assert_array_equal(lo, p.lb)
