"""Dense linear-program solving used by the geometry and patching layers.

Problems here are small (at most a few thousand rows over at most
feature_dim + L + 1 variables), so a single dense front-end over scipy's
HiGHS solver is enough.  The wrapper keeps an explicit status vocabulary
and re-checks feasibility of reported optima so a silent solver hiccup
cannot masquerade as a correct answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog as _scipy_linprog

FEASIBILITY_TOL = 1e-7

LEQ = "<="
EQ = "=="
GEQ = ">="


class LpError(RuntimeError):
    """The backend failed to classify the problem; never guess a status."""


@dataclass
class LpProblem:
    """min/max c.x subject to row constraints and per-variable bounds."""

    c: np.ndarray
    sense: str = "min"                       # "min" or "max"
    constraints: list = field(default_factory=list)  # (row, relation, rhs)
    bounds: list | None = None               # per-variable (lo, hi), None = free

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.sense not in ("min", "max"):
            raise ValueError(f"bad sense {self.sense!r}")
        n = self.c.shape[0]
        for i, (row, rel, rhs) in enumerate(self.constraints):
            row = np.asarray(row, dtype=np.float64)
            if row.shape != (n,):
                raise ValueError(f"constraint {i} has dimension {row.shape}, "
                                 f"expected ({n},)")
            if rel not in (LEQ, EQ, GEQ):
                raise ValueError(f"constraint {i}: bad relation {rel!r}")
            self.constraints[i] = (row, rel, float(rhs))
        if self.bounds is not None:
            if len(self.bounds) != n:
                raise ValueError("bounds length must match variable count")
            for lo, hi in self.bounds:
                if lo is not None and hi is not None and lo > hi:
                    raise ValueError(f"bound lo {lo} > hi {hi}")


@dataclass
class LpSolution:
    status: str                  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    value: float | None = None


def _check_feasible(p: LpProblem, x: np.ndarray) -> bool:
    for row, rel, rhs in p.constraints:
        v = float(row @ x)
        if rel == LEQ and v > rhs + FEASIBILITY_TOL:
            return False
        if rel == GEQ and v < rhs - FEASIBILITY_TOL:
            return False
        if rel == EQ and abs(v - rhs) > FEASIBILITY_TOL:
            return False
    if p.bounds is not None:
        for xi, (lo, hi) in zip(x, p.bounds):
            if lo is not None and xi < lo - FEASIBILITY_TOL:
                return False
            if hi is not None and xi > hi + FEASIBILITY_TOL:
                return False
    return True


def solve_lp(p: LpProblem) -> LpSolution:
    """Solve the LP, returning an explicit status.

    Optimal solutions are feasible within 1e-7 and within 1e-6 relative
    objective of the true optimum (HiGHS default tolerances are tighter).
    """
    n = p.c.shape[0]
    sign = 1.0 if p.sense == "min" else -1.0
    c = sign * p.c

    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for row, rel, rhs in p.constraints:
        if rel == LEQ:
            a_ub.append(row)
            b_ub.append(rhs)
        elif rel == GEQ:
            a_ub.append(-row)
            b_ub.append(-rhs)
        else:
            a_eq.append(row)
            b_eq.append(rhs)

    bounds = p.bounds if p.bounds is not None else [(None, None)] * n
    res = _scipy_linprog(
        c,
        A_ub=np.asarray(a_ub) if a_ub else None,
        b_ub=np.asarray(b_ub) if b_ub else None,
        A_eq=np.asarray(a_eq) if a_eq else None,
        b_eq=np.asarray(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        x = np.asarray(res.x, dtype=np.float64)
        if not _check_feasible(p, x):
            raise LpError("solver returned an infeasible 'optimal' point")
        return LpSolution(status="optimal", x=x, value=float(p.c @ x))
    if res.status == 2:
        return LpSolution(status="infeasible")
    if res.status == 3:
        return LpSolution(status="unbounded")
    raise LpError(f"LP solve failed: {res.message}")
