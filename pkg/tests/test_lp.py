"""LP wrapper tests, checked against a vertex-enumeration oracle on 2-D
problems (the oracle is independent of the solver under test)."""

import itertools

import numpy as np
import pytest

from patchunlearn import LpProblem, solve_lp
from patchunlearn.lp import EQ, GEQ, LEQ


def vertex_oracle_2d(c, rows, rhs, box=5.0):
    """Enumerate all vertices of {Ax <= b} ∩ [-box, box]^2 and return the
    minimum of c.x, or None if no feasible vertex exists."""
    rows = list(rows) + [np.array([1.0, 0.0]), np.array([-1.0, 0.0]),
                         np.array([0.0, 1.0]), np.array([0.0, -1.0])]
    rhs = list(rhs) + [box, box, box, box]
    best = None
    for i, j in itertools.combinations(range(len(rows)), 2):
        A = np.array([rows[i], rows[j]])
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, np.array([rhs[i], rhs[j]]))
        if all(r @ x <= s + 1e-9 for r, s in zip(rows, rhs)):
            val = float(c @ x)
            if best is None or val < best:
                best = val
    return best


def test_simple_min():
    sol = solve_lp(LpProblem(c=[1.0, 1.0], constraints=[
        (np.array([1.0, 0.0]), GEQ, 1.0),
        (np.array([0.0, 1.0]), GEQ, 2.0)]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(3.0, abs=1e-9)


def test_sense_max():
    sol = solve_lp(LpProblem(c=[1.0], sense="max",
                             bounds=[(0.0, 7.0)]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(7.0, abs=1e-9)


def test_infeasible():
    sol = solve_lp(LpProblem(c=[1.0], constraints=[
        (np.array([1.0]), LEQ, 0.0),
        (np.array([1.0]), GEQ, 1.0)]))
    assert sol.status == "infeasible"


def test_unbounded():
    sol = solve_lp(LpProblem(c=[-1.0], constraints=[
        (np.array([1.0]), GEQ, 0.0)]))
    assert sol.status == "unbounded"


def test_equality_constraint():
    sol = solve_lp(LpProblem(c=[1.0, 0.0], constraints=[
        (np.array([1.0, 1.0]), EQ, 2.0)], bounds=[(0, None), (0, None)]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(0.0, abs=1e-9)


def test_validation_errors():
    with pytest.raises(ValueError):
        LpProblem(c=[1.0], sense="mid")
    with pytest.raises(ValueError):
        LpProblem(c=[1.0], constraints=[(np.array([1.0, 2.0]), LEQ, 0.0)])
    with pytest.raises(ValueError):
        LpProblem(c=[1.0], bounds=[(2.0, 1.0)])


def test_against_vertex_oracle_200_cases():
    rng = np.random.default_rng(1234)
    checked = 0
    while checked < 200:
        m = int(rng.integers(2, 8))
        rows = [rng.normal(size=2) for _ in range(m)]
        rhs = [float(rng.normal(loc=1.0)) for _ in range(m)]
        c = rng.normal(size=2)
        oracle = vertex_oracle_2d(c, rows, rhs)
        sol = solve_lp(LpProblem(
            c=c, constraints=[(r, LEQ, s) for r, s in zip(rows, rhs)],
            bounds=[(-5.0, 5.0), (-5.0, 5.0)]))
        if oracle is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.value == pytest.approx(oracle, abs=1e-6)
        checked += 1
