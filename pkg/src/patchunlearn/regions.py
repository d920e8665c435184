"""Exact linear-region extraction and polytope queries for CPWL models.

A ReLU network is affine on the polytope of inputs sharing one activation
pattern.  ``region_of`` recovers that polytope exactly by propagating affine
expressions (one row per neuron) through the network and emitting one
half-space per ReLU gate, oriented by the gate's sign at the anchor point.
The same machinery accepts patched models: anything with ``base``,
``featuremap`` and ``patches`` attributes whose patches know how to trace
themselves (see patching.PatchNetwork.affine_trace) remains CPWL and is
handled transparently.

Regions are always intersected with a bounding box of the feature domain so
every LP over them is bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LEQ, LpProblem, solve_lp
from .network import MlpNetwork, ShapeError

ANCHOR_TOL = 1e-9


class EmptyRegionError(RuntimeError):
    """The region is numerically empty (infeasible LP)."""


class DegenerateRegionError(RuntimeError):
    """Hit-and-run could not move; the region is lower-dimensional."""


@dataclass(frozen=True)
class LinearRegion:
    """Half-space intersection {x : A x <= b} around an anchor point."""

    A: np.ndarray            # (m, d)
    b: np.ndarray            # (m,)
    anchor: np.ndarray       # (d,)
    domain_box: tuple        # (lo, hi) arrays, each (d,)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        if A.shape[1] == 0:  # no constraints at all
            A = A.reshape(0, self.anchor.shape[0])
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        anchor = np.asarray(self.anchor, dtype=np.float64)
        lo, hi = self.domain_box
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if A.shape[0] != b.shape[0]:
            raise ShapeError("A and b row counts differ")
        if A.shape[0] and A.shape[1] != anchor.shape[0]:
            raise ShapeError("constraint dimension != anchor dimension")
        slack = b - A @ anchor if A.shape[0] else np.zeros(0)
        if slack.size and slack.min() < -ANCHOR_TOL:
            raise ValueError(
                f"anchor violates constraint {int(np.argmin(slack))} "
                f"by {-slack.min():.3e}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "domain_box", (lo, hi))

    @property
    def n_constraints(self) -> int:
        return int(self.A.shape[0])

    @property
    def dim(self) -> int:
        return int(self.anchor.shape[0])

    def contains(self, x: np.ndarray, tol: float = ANCHOR_TOL) -> np.ndarray:
        """Exact membership test for one point or a batch (n, d)."""
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.domain_box
        in_box = np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)
        if self.n_constraints == 0:
            return in_box
        slack = self.b - x @ self.A.T
        return in_box & np.all(slack >= -tol, axis=-1)


@dataclass(frozen=True)
class RegionAffineMap:
    """The affine output map g(x) = W x + v valid on one linear region."""

    W: np.ndarray  # (L, d)
    v: np.ndarray  # (L,)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W.T + self.v


class _ConstraintCollector:
    """Accumulates one half-space per ReLU gate during a trace."""

    def __init__(self, dim: int):
        self.dim = dim
        self.rows: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.gates = 0

    def add_gates(self, W: np.ndarray, c: np.ndarray, active: np.ndarray):
        """Record gates with pre-activation affine rows W x + c.

        Active gates (value >= 0) contribute -W x <= c; inactive gates
        contribute W x <= -c, so the anchor always satisfies its own region.
        """
        W = np.atleast_2d(W)
        c = np.atleast_1d(c)
        sign = np.where(active, -1.0, 1.0)
        self.rows.append(sign[:, None] * W)
        self.rhs.append(-sign * c)
        self.gates += W.shape[0]

    def stack(self):
        if not self.rows:
            return np.zeros((0, self.dim)), np.zeros(0)
        return np.vstack(self.rows), np.concatenate(self.rhs)


def _trace_mlp(net: MlpNetwork, z: np.ndarray, collector: _ConstraintCollector):
    """Affine propagation through an MLP at z; returns (value, W, v)."""
    d = z.shape[0]
    W = np.eye(d)
    v = np.zeros(d)
    a = z
    for layer in net.layers[:-1]:
        preW = layer.weight @ W
        prev = layer.weight @ v + layer.bias
        preval = layer.weight @ a + layer.bias
        if not np.all(np.isfinite(preval)):
            raise ValueError("non-finite activation during region trace")
        active = preval >= 0.0
        collector.add_gates(preW, prev, active)
        mask = active.astype(np.float64)
        W = mask[:, None] * preW
        v = mask * prev
        a = np.maximum(preval, 0.0)
    last = net.layers[-1]
    return last.weight @ a + last.bias, last.weight @ W, last.weight @ v + last.bias


def _trace_model(model, z: np.ndarray, collector: _ConstraintCollector):
    """Trace an MlpNetwork or a patched model at a feature-space point."""
    if isinstance(model, MlpNetwork):
        return _trace_mlp(model, z, collector)
    if hasattr(model, "base") and hasattr(model, "patches"):
        val, W, v = _trace_mlp(model.base, z, collector)
        for patch in model.patches:
            pval, pW, pv = patch.affine_trace(z, collector)
            val = val + pval
            W = W + pW
            v = v + pv
        return val, W, v
    raise TypeError(f"cannot trace model of type {type(model).__name__}")


def region_of(model, x_u: np.ndarray, domain_box) -> LinearRegion:
    """Linear region of the CPWL ``model`` around feature point ``x_u``.

    One constraint per ReLU gate, oriented by the gate's sign at the anchor
    (pre-activation exactly 0 counts as active).  The box is not part of the
    constraint list; LPs and membership tests intersect with it separately.
    """
    x_u = np.asarray(x_u, dtype=np.float64)
    lo, hi = (np.asarray(domain_box[0], dtype=np.float64),
              np.asarray(domain_box[1], dtype=np.float64))
    collector = _ConstraintCollector(x_u.shape[0])
    _trace_model(model, x_u, collector)
    A, b = collector.stack()
    return LinearRegion(A=A, b=b, anchor=x_u, domain_box=(lo, hi))


def region_affine_map(model, region: LinearRegion) -> RegionAffineMap:
    """Affine output map of ``model`` on ``region`` (exact on the region)."""
    collector = _ConstraintCollector(region.dim)
    _, W, v = _trace_model(model, region.anchor, collector)
    return RegionAffineMap(W=W, v=v)


def prune_parallel(region: LinearRegion, decimals: int = 12) -> LinearRegion:
    """Exact pruning: among parallel same-direction constraints keep the
    tightest; drop vacuous zero rows.  Never changes the feasible set."""
    best: dict[tuple, tuple[np.ndarray, float]] = {}
    for row, rhs in zip(region.A, region.b):
        norm = np.linalg.norm(row)
        if norm < 1e-14:
            continue  # 0.x <= b with b >= 0 (anchor-feasible), vacuous
        unit = row / norm
        key = tuple(np.round(unit, decimals))
        scaled = rhs / norm
        if key not in best or scaled < best[key][1]:
            best[key] = (unit, scaled)
    if not best:
        A = np.zeros((0, region.dim))
        b = np.zeros(0)
    else:
        A = np.vstack([u for u, _ in best.values()])
        b = np.array([s for _, s in best.values()])
    return LinearRegion(A=A, b=b, anchor=region.anchor,
                        domain_box=region.domain_box)


def max_affine_over_region(region: LinearRegion, w: np.ndarray,
                           c: float = 0.0) -> float:
    """max of w.x + c over region ∩ domain_box (always finite)."""
    lo, hi = region.domain_box
    problem = LpProblem(
        c=np.asarray(w, dtype=np.float64),
        sense="max",
        constraints=[(row, LEQ, rhs) for row, rhs in zip(region.A, region.b)],
        bounds=[(float(l), float(h)) for l, h in zip(lo, hi)],
    )
    sol = solve_lp(problem)
    if sol.status == "infeasible":
        raise EmptyRegionError("region is numerically empty")
    assert sol.status == "optimal"  # box bounds rule out unboundedness
    return float(sol.value + c)


def sample_region(region: LinearRegion, n: int, seed: int,
                  max_steps: int = 10_000) -> np.ndarray:
    """Hit-and-run samples inside region ∩ domain_box, anchored at the
    region anchor.  Deterministic given the seed."""
    if n == 0:
        return np.zeros((0, region.dim))
    rng = np.random.default_rng(seed)
    lo, hi = region.domain_box
    x = region.anchor.astype(np.float64).copy()
    # Anchors may sit exactly on the box edge; nudge membership tolerance.
    samples = []
    steps = 0
    while len(samples) < n:
        if steps >= max_steps:
            raise DegenerateRegionError(
                f"hit-and-run stalled after {max_steps} steps "
                f"({len(samples)}/{n} samples)")
        steps += 1
        u = rng.standard_normal(region.dim)
        u /= np.linalg.norm(u)
        t_lo, t_hi = -np.inf, np.inf
        if region.n_constraints:
            au = region.A @ u
            slack = region.b - region.A @ x
            pos = au > 1e-14
            neg = au < -1e-14
            if pos.any():
                t_hi = min(t_hi, np.min(slack[pos] / au[pos]))
            if neg.any():
                t_lo = max(t_lo, np.max(slack[neg] / au[neg]))
        for j in range(region.dim):
            if u[j] > 1e-14:
                t_hi = min(t_hi, (hi[j] - x[j]) / u[j])
                t_lo = max(t_lo, (lo[j] - x[j]) / u[j])
            elif u[j] < -1e-14:
                t_hi = min(t_hi, (lo[j] - x[j]) / u[j])
                t_lo = max(t_lo, (hi[j] - x[j]) / u[j])
        t_lo = min(t_lo, 0.0)
        t_hi = max(t_hi, 0.0)
        if t_hi - t_lo < 1e-13:
            continue  # direction blocked; try another
        x = x + rng.uniform(t_lo, t_hi) * u
        # Clamp tiny numeric overshoot back into the box.
        x = np.clip(x, lo, hi)
        if region.contains(x, tol=1e-12):
            samples.append(x.copy())
        else:
            x = region.anchor.astype(np.float64).copy()
    return np.array(samples)


def region_purity(region: LinearRegion, features: np.ndarray) -> list[int]:
    """Indices of dataset points lying inside the region (exact test)."""
    features = np.asarray(features, dtype=np.float64)
    mask = region.contains(features)
    return [int(i) for i in np.nonzero(mask)[0]]
