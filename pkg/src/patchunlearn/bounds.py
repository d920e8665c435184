"""Linear bound propagation for certified perturbation radii.

Backward substitution with the triangle relaxation for unstable ReLU gates
(upper line through the two kink endpoints, zero slope below) gives sound
per-neuron pre-activation bounds over an input box.  On top of that we
binary-search the largest symmetric radius within which the predicted label
provably cannot change, and build the *relaxed* region whose constraints
come only from gates that keep their sign across the whole box.

Only plain MLPs are handled here: class-mode unlearning computes radii on
the original (unpatched) network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MlpNetwork, forward, predict
from .regions import LinearRegion, _ConstraintCollector, _trace_mlp


@dataclass(frozen=True)
class BoxBounds:
    """Sound pre-activation and logit bounds over the box center ± radius."""

    center: np.ndarray
    radius: np.ndarray            # per-dimension, symmetric
    lowers: tuple                 # per hidden layer, (width,)
    uppers: tuple
    logit_lower: np.ndarray
    logit_upper: np.ndarray

    def stable_mask(self) -> np.ndarray:
        """Concatenated per-gate flags: True where the sign cannot flip."""
        flags = [
            (l >= 0.0) | (u <= 0.0)
            for l, u in zip(self.lowers, self.uppers)
        ]
        return np.concatenate(flags) if flags else np.zeros(0, dtype=bool)


def _relax(l: np.ndarray, u: np.ndarray):
    """Per-neuron linear relaxation slopes/intercepts for ReLU."""
    upper_slope = np.zeros_like(l)
    upper_bias = np.zeros_like(l)
    lower_slope = np.zeros_like(l)
    active = l >= 0.0
    unstable = (l < 0.0) & (u > 0.0)
    upper_slope[active] = 1.0
    lower_slope[active] = 1.0
    if np.any(unstable):
        li, ui = l[unstable], u[unstable]
        s = ui / (ui - li)
        upper_slope[unstable] = s
        upper_bias[unstable] = -s * li
        # fixed zero lower slope for unstable gates: slightly looser than an
        # adaptive choice, but keeps bounds monotone in the box radius (the
        # chord over a wider interval dominates the chord over a narrower
        # one, whereas slope switching can tighten a bound as the box grows)
    return upper_slope, upper_bias, lower_slope


def _backward(net: MlpNetwork, lowers, uppers, spec_W, spec_b,
              center, radius):
    """Sound bounds of spec_W @ a_t + spec_b where a_t is the output of the
    first t hidden layers (t = len(lowers)); concretized over the box."""
    uW = spec_W.copy()
    ub = spec_b.copy()
    lW = spec_W.copy()
    lb = spec_b.copy()
    for i in range(len(lowers) - 1, -1, -1):
        su, eu, sl = _relax(lowers[i], uppers[i])
        pos, neg = np.maximum(uW, 0.0), np.minimum(uW, 0.0)
        ub = ub + pos @ eu
        uW = pos * su + neg * sl
        pos, neg = np.maximum(lW, 0.0), np.minimum(lW, 0.0)
        lb = lb + neg @ eu
        lW = pos * sl + neg * su
        layer = net.layers[i]
        ub = ub + uW @ layer.bias
        uW = uW @ layer.weight
        lb = lb + lW @ layer.bias
        lW = lW @ layer.weight
    upper = ub + uW @ center + np.abs(uW) @ radius
    lower = lb + lW @ center - np.abs(lW) @ radius
    return lower, upper


def preactivation_bounds(net: MlpNetwork, center: np.ndarray,
                         radius) -> BoxBounds:
    """Per-neuron and per-logit bounds over the box center ± radius."""
    center = np.asarray(center, dtype=np.float64)
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64),
                             center.shape).copy()
    if np.any(radius < 0):
        raise ValueError("radius must be nonnegative")
    lowers: list[np.ndarray] = []
    uppers: list[np.ndarray] = []
    for j, layer in enumerate(net.layers[:-1]):
        l, u = _backward(net, lowers, uppers, layer.weight, layer.bias,
                         center, radius)
        lowers.append(l)
        uppers.append(u)
    last = net.layers[-1]
    ll, lu = _backward(net, lowers, uppers, last.weight, last.bias,
                       center, radius)
    return BoxBounds(center=center, radius=radius,
                     lowers=tuple(lowers), uppers=tuple(uppers),
                     logit_lower=ll, logit_upper=lu)


def certified_margins(net: MlpNetwork, center: np.ndarray, radius,
                      y: int) -> np.ndarray:
    """Certified lower bounds of logit_y - logit_l for every l != y."""
    center = np.asarray(center, dtype=np.float64)
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64),
                             center.shape).copy()
    bb = preactivation_bounds(net, center, radius)
    last = net.layers[-1]
    L = net.output_dim
    spec = np.tile(last.weight[y], (L, 1)) - last.weight
    spec_b = np.full(L, last.bias[y]) - last.bias
    lower, _ = _backward(net, list(bb.lowers), list(bb.uppers),
                         spec, spec_b, center, radius)
    lower[y] = np.inf
    return lower


def robust_radius(net: MlpNetwork, x_c: np.ndarray, y: int,
                  tol: float = 1e-3, domain_box=None) -> float:
    """Largest certified symmetric radius keeping the label at ``y``.

    Binary search to relative tolerance ``tol`` over [0, box diameter];
    sound (certified) but possibly conservative.
    """
    x_c = np.asarray(x_c, dtype=np.float64)
    if predict(net, x_c) != y:
        raise ValueError(f"point is not classified as {y}; nothing to certify")
    if np.min(certified_margins(net, x_c, 0.0, y)) <= 0.0:
        return 0.0  # zero-margin tie at the point itself
    if domain_box is not None:
        lo, hi = domain_box
        diameter = float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))
    else:
        diameter = max(1.0, 2.0 * float(np.linalg.norm(x_c)))
    lo_r, hi_r = 0.0, diameter
    if np.min(certified_margins(net, x_c, hi_r, y)) > 0.0:
        return hi_r
    while hi_r - lo_r > tol * max(hi_r, tol):
        mid = 0.5 * (lo_r + hi_r)
        if np.min(certified_margins(net, x_c, mid, y)) > 0.0:
            lo_r = mid
        else:
            hi_r = mid
    return lo_r


def relaxed_region(net: MlpNetwork, x_c: np.ndarray, radius,
                   domain_box, ball_scale: float | None = None
                   ) -> LinearRegion:
    """Region from sign-stable gates only: a superset of the point region.

    Gates whose pre-activation can change sign inside the box contribute no
    constraint; at radius 0 every gate is stable and the result matches
    region_of exactly.  When ``ball_scale`` is given (and the radius is
    positive) the region is additionally clipped to the sup-norm ball of
    radius ``ball_scale * radius`` around ``x_c``: the stable-gate polytope
    alone can stretch far past anything the radius certifies, and the clip
    keeps the erasure's collateral footprint proportional to it.
    """
    x_c = np.asarray(x_c, dtype=np.float64)
    bb = preactivation_bounds(net, x_c, radius)
    stable = bb.stable_mask()
    collector = _ConstraintCollector(x_c.shape[0])
    _trace_mlp(net, x_c, collector)
    A, b = collector.stack()
    A, b = A[stable], b[stable]
    r = float(np.max(np.broadcast_to(radius, x_c.shape)))
    if ball_scale is not None and r > 0.0:
        eye = np.eye(x_c.shape[0])
        A = np.vstack([A, eye, -eye])
        b = np.concatenate([b, x_c + ball_scale * r,
                            -(x_c - ball_scale * r)])
    lo, hi = (np.asarray(domain_box[0], dtype=np.float64),
              np.asarray(domain_box[1], dtype=np.float64))
    return LinearRegion(A=A, b=b, anchor=x_c, domain_box=(lo, hi))
