"""Patch construction: support gadgets, confusion offsets, assembly.

A patch is an additive logit correction with two ingredients:

* a *confusion* map m(x) = C x + d, LP-optimized so that inside a chosen
  linear region the patched logits rank a wrong target label first while
  the worst-case magnitude of m is minimal;
* one or more *support* gadgets, ReLU constructions that evaluate to 1
  inside a region, 0 outside a 1/lambda band, confining the correction.

The gated combination ReLU(m + H*sigma - H) - ReLU(-m + H*sigma - H)
equals m where sigma = 1 and is exactly zero where sigma = 0, provided H
upper-bounds |m| everywhere the model can be queried.  We therefore take H
over the whole feature bounding box, not just the source region: an affine
m can exceed any region-local bound elsewhere, and a too-small H would
leak nonzero corrections outside the supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import EQ, GEQ, LEQ, LpProblem, solve_lp
from .network import (FeatureMap, MlpNetwork, ShapeError, forward,
                      _net_from_dict, _net_to_dict, load_model, save_model)
from .regions import (LinearRegion, RegionAffineMap, _ConstraintCollector,
                      max_affine_over_region)

DEFAULT_LAMBDA = 1e4
DEFAULT_MARGIN = 1e-3


class PatchBoundError(ValueError):
    """H does not dominate |m| over the domain box; locality would leak."""


class ConfusionError(RuntimeError):
    """No confusion map could be produced for the requested flip."""


def bump(t, lam: float):
    """ReLU(lam*t + 1) - ReLU(lam*t): 1 for t >= 0, 0 for t <= -1/lam."""
    s = lam * np.asarray(t, dtype=np.float64)
    return np.maximum(s + 1.0, 0.0) - np.maximum(s, 0.0)


@dataclass(frozen=True)
class SupportNetwork:
    """Indicator gadget for a half-space intersection {A x <= b}."""

    A: np.ndarray        # (N, d), copied from a (possibly relaxed) region
    b: np.ndarray        # (N,)
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ShapeError("support A/b row mismatch")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_constraints(self) -> int:
        return int(self.A.shape[0])

    @classmethod
    def from_region(cls, region: LinearRegion,
                    lam: float = DEFAULT_LAMBDA) -> "SupportNetwork":
        return cls(A=region.A.copy(), b=region.b.copy(), lam=lam)

    def with_lambda(self, lam: float) -> "SupportNetwork":
        return SupportNetwork(A=self.A, b=self.b, lam=lam)


def support_eval(s: SupportNetwork, x: np.ndarray) -> float | np.ndarray:
    """Support value in [0, 1]; vectorized over a batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    if s.n_constraints == 0:
        # Empty constraint set: the region is the whole box, always inside.
        return np.ones(x.shape[:-1]) if x.ndim > 1 else 1.0
    slack = s.b - x @ s.A.T
    total = bump(slack, s.lam).sum(axis=-1) - (s.n_constraints - 1)
    # In exact arithmetic the sum of N bump values is at most N, so the
    # result is at most 1; the minimum removes float summation drift.
    val = np.minimum(np.maximum(total, 0.0), 1.0)
    return float(val) if x.ndim == 1 else val


@dataclass(frozen=True)
class ConfusionNetwork:
    """Affine logit offset m(x) = C x + d steering predictions to a
    wrong target label on its source region."""

    C: np.ndarray            # (L, d)
    d: np.ndarray            # (L,)
    target_label: int        # the wrong label the patch installs
    source_label: int        # the label being unlearned

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        if C.shape[0] != d.shape[0]:
            raise ShapeError("confusion C/d row mismatch")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("confusion entries must be finite")
        if self.target_label == self.source_label:
            raise ValueError("target label must differ from source label")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.C.T + self.d


def optimize_confusion(affine_map: RegionAffineMap, region: LinearRegion,
                       y_u: int, y_hat: int, margin: float = DEFAULT_MARGIN,
                       mode: str = "constant") -> ConfusionNetwork:
    """Worst-case-minimal m making y_hat the top label on the region.

    ``constant`` mode fixes C = 0 and solves one small LP after reducing
    each class constraint to a region maximum; it is always feasible on a
    bounded region.  ``affine`` mode optimizes the full C, d via the robust
    counterpart of the semi-infinite program (one dual block per
    region+box constraint family instead of vertex enumeration).
    """
    if y_hat == y_u:
        raise ValueError("y_hat must differ from y_u")
    W, v = affine_map.W, affine_map.v
    L, dim = W.shape
    if mode == "constant":
        return _optimize_constant(W, v, region, y_u, y_hat, margin)
    if mode == "affine":
        return _optimize_affine(W, v, region, y_u, y_hat, margin)
    raise ValueError(f"unknown confusion mode {mode!r}")


def _optimize_constant(W, v, region, y_u, y_hat, margin) -> ConfusionNetwork:
    L = W.shape[0]
    gaps = np.zeros(L)
    for l in range(L):
        if l == y_hat:
            continue
        gaps[l] = max_affine_over_region(
            region, W[l] - W[y_hat], float(v[l] - v[y_hat]))
    # Variables: d_0..d_{L-1}, t.  min t s.t. d_hat - d_l >= margin + gap_l,
    # |d_k| <= t.
    n = L + 1
    c = np.zeros(n)
    c[-1] = 1.0
    cons = []
    for l in range(L):
        if l == y_hat:
            continue
        row = np.zeros(n)
        row[y_hat] = 1.0
        row[l] = -1.0
        cons.append((row, GEQ, margin + gaps[l]))
    for k in range(L):
        row = np.zeros(n)
        row[k] = 1.0
        row[-1] = -1.0
        cons.append((row, LEQ, 0.0))
        row = np.zeros(n)
        row[k] = -1.0
        row[-1] = -1.0
        cons.append((row, LEQ, 0.0))
    sol = solve_lp(LpProblem(c=c, sense="min", constraints=cons,
                             bounds=[(None, None)] * L + [(0.0, None)]))
    if sol.status != "optimal":
        raise ConfusionError(f"confusion LP status {sol.status}")
    d = sol.x[:L]
    # Snap a zero-objective solution to exact zeros (already-flipped case).
    if sol.x[-1] <= 1e-12:
        d = np.zeros(L)
    return ConfusionNetwork(C=np.zeros((L, region.dim)), d=d,
                            target_label=y_hat, source_label=y_u)


def _region_rows_with_box(region: LinearRegion):
    """Region constraints plus explicit box rows, for dualization."""
    lo, hi = region.domain_box
    d = region.dim
    eye = np.eye(d)
    A = np.vstack([region.A, eye, -eye]) if region.n_constraints else \
        np.vstack([eye, -eye])
    b = np.concatenate([region.b, hi, -lo]) if region.n_constraints else \
        np.concatenate([hi, -lo])
    return A, b


def _optimize_affine(W, v, region, y_u, y_hat, margin) -> ConfusionNetwork:
    # Robust LP over variables C (L*d), d (L), t, plus one nonnegative dual
    # block per semi-infinite constraint family.  For each family
    # "for all x in P = {Ax<=b}: r.x + s >= 0" (r, s linear in C, d) strong
    # duality gives: exists mu >= 0 with A^T mu = -r and b^T mu <= s.
    A, b = _region_rows_with_box(region)
    m = A.shape[0]
    L, dim = W.shape
    n_cd = L * dim + L
    families = []  # (r_coeff builder, s builder) encoded inline below

    others = [l for l in range(L) if l != y_hat]
    n_fam = len(others) + 2 * L
    n = n_cd + 1 + n_fam * m  # + t + duals

    def c_idx(k, j):
        return k * dim + j

    d_idx = lambda k: L * dim + k
    t_idx = n_cd
    mu_idx = lambda f, i: n_cd + 1 + f * m + i

    cons = []
    # Class-ranking families: r = (W_hat - W_l) + (C_hat - C_l),
    # s = (v_hat - v_l) + (d_hat - d_l) - margin.
    for f, l in enumerate(others):
        for j in range(dim):
            row = np.zeros(n)
            row[c_idx(y_hat, j)] = 1.0
            row[c_idx(l, j)] = -1.0
            for i in range(m):
                row[mu_idx(f, i)] = A[i, j]
            cons.append((row, EQ, -(W[y_hat, j] - W[l, j])))
        row = np.zeros(n)
        for i in range(m):
            row[mu_idx(f, i)] = b[i]
        row[d_idx(y_hat)] = -1.0
        row[d_idx(l)] = 1.0
        cons.append((row, LEQ, float(v[y_hat] - v[l]) - margin))
    # Objective families: for each k and each sign s in {+1,-1}:
    # for all x: t - s*(C_k.x + d_k) >= 0  ->  r = -s*C_k, s-term = t - s*d_k.
    for k in range(L):
        for si, sgn in enumerate((1.0, -1.0)):
            f = len(others) + 2 * k + si
            for j in range(dim):
                row = np.zeros(n)
                row[c_idx(k, j)] = -sgn
                for i in range(m):
                    row[mu_idx(f, i)] = A[i, j]
                cons.append((row, EQ, 0.0))
            row = np.zeros(n)
            for i in range(m):
                row[mu_idx(f, i)] = b[i]
            row[t_idx] = -1.0
            row[d_idx(k)] = sgn
            cons.append((row, LEQ, 0.0))

    obj = np.zeros(n)
    obj[t_idx] = 1.0
    bounds = [(None, None)] * n_cd + [(0.0, None)] + [(0.0, None)] * (n_fam * m)
    sol = solve_lp(LpProblem(c=obj, sense="min", constraints=cons,
                             bounds=bounds))
    if sol.status != "optimal":
        raise ConfusionError(f"robust confusion LP status {sol.status}")
    C = sol.x[:L * dim].reshape(L, dim)
    dvec = sol.x[L * dim:n_cd]
    if sol.x[t_idx] <= 1e-12:
        C = np.zeros((L, dim))
        dvec = np.zeros(L)
    return ConfusionNetwork(C=C, d=dvec, target_label=y_hat, source_label=y_u)


def compute_H(confusion: ConfusionNetwork, domain_box) -> float:
    """max over the box, over coordinates, of |C_k.x + d_k| (closed form)."""
    lo = np.asarray(domain_box[0], dtype=np.float64)
    hi = np.asarray(domain_box[1], dtype=np.float64)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    per_coord = np.abs(confusion.C @ mid + confusion.d) + \
        np.abs(confusion.C) @ half
    return float(per_coord.max()) if per_coord.size else 0.0


@dataclass(frozen=True)
class PatchNetwork:
    """Gated combination of one confusion map and >= 1 support gadgets."""

    confusion: ConfusionNetwork
    supports: tuple[SupportNetwork, ...]
    H: float

    def __post_init__(self):
        supports = tuple(self.supports)
        if not supports:
            raise ValueError("patch needs at least one support")
        if not self.H >= 0:
            raise ValueError("H must be nonnegative")
        object.__setattr__(self, "supports", supports)
        object.__setattr__(self, "H", float(self.H))

    @property
    def out_dim(self) -> int:
        return self.confusion.d.shape[0]

    @property
    def gate_count(self) -> int:
        n = sum(2 * s.n_constraints + 1 for s in self.supports)
        n += len(self.supports) - 1          # max chain
        n += 2 * self.out_dim                # output gates
        return n

    def sigma(self, x: np.ndarray) -> float | np.ndarray:
        vals = [support_eval(s, x) for s in self.supports]
        out = vals[0]
        for v in vals[1:]:
            out = np.maximum(out, v)
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        sig = np.asarray(self.sigma(x))
        m = self.confusion(x)
        gate = self.H * sig - self.H
        if x.ndim > 1:
            gate = gate[..., None]
        return np.maximum(m + gate, 0.0) - np.maximum(-m + gate, 0.0)

    # -- exact CPWL trace (used by region extraction on patched models) ----

    def affine_trace(self, z: np.ndarray, collector: _ConstraintCollector):
        """Local affine map of the patch at z, registering every ReLU gate
        with the collector.  Mirrors __call__ arithmetically."""
        lam_sig = []  # (val, w, c) per support
        for s in self.supports:
            N = s.n_constraints
            slack = s.b - s.A @ z
            g2_val = s.lam * slack
            g1_val = g2_val + 1.0
            g_w = -s.lam * s.A                      # shared rows
            act1 = g1_val >= 0.0
            act2 = g2_val >= 0.0
            collector.add_gates(g_w, s.lam * s.b + 1.0, act1)
            collector.add_gates(g_w, s.lam * s.b, act2)
            coeff = act1.astype(np.float64) - act2.astype(np.float64)
            sw = coeff @ g_w
            sc = float(act1 @ (s.lam * s.b + 1.0) - act2 @ (s.lam * s.b)) \
                - (N - 1)
            sval = float(np.maximum(g1_val, 0).sum()
                         - np.maximum(g2_val, 0).sum()) - (N - 1)
            outer_active = sval >= 0.0
            collector.add_gates(sw[None, :], np.array([sc]),
                                np.array([outer_active]))
            if outer_active:
                lam_sig.append((max(sval, 0.0), sw, sc))
            else:
                lam_sig.append((0.0, np.zeros_like(sw), 0.0))

        # sigma = max over supports via b + ReLU(a - b) chaining
        sig_val, sig_w, sig_c = lam_sig[0]
        for val, w, c in lam_sig[1:]:
            d_val = sig_val - val
            d_w = sig_w - w
            d_c = sig_c - c
            active = d_val >= 0.0
            collector.add_gates(d_w[None, :], np.array([d_c]),
                                np.array([active]))
            if active:
                sig_val, sig_w, sig_c = val + max(d_val, 0.0), w + d_w, c + d_c
            else:
                sig_val, sig_w, sig_c = val, w, c

        C, dv, H = self.confusion.C, self.confusion.d, self.H
        m_val = C @ z + dv
        gate_w = H * sig_w
        gate_c = H * sig_c - H
        gate_val = H * sig_val - H

        u_val = m_val + gate_val
        u_W = C + gate_w[None, :]
        u_c = dv + gate_c
        act_u = u_val >= 0.0
        collector.add_gates(u_W, u_c, act_u)

        w_val = -m_val + gate_val
        w_W = -C + gate_w[None, :]
        w_c = -dv + gate_c
        act_w = w_val >= 0.0
        collector.add_gates(w_W, w_c, act_w)

        mu = act_u.astype(np.float64)
        mw = act_w.astype(np.float64)
        out_val = np.maximum(u_val, 0.0) - np.maximum(w_val, 0.0)
        out_W = mu[:, None] * u_W - mw[:, None] * w_W
        out_v = mu * u_c - mw * w_c
        return out_val, out_W, out_v


def assemble_patch(confusion: ConfusionNetwork,
                   supports: list[SupportNetwork] | tuple,
                   H: float, domain_box=None) -> PatchNetwork:
    """Build a patch, verifying H dominates |m| over the box when given."""
    if domain_box is not None:
        needed = compute_H(confusion, domain_box)
        if H + 1e-12 < needed:
            raise PatchBoundError(
                f"H={H} is below the domain-wide bound {needed} of |m|")
    return PatchNetwork(confusion=confusion, supports=tuple(supports), H=H)


@dataclass(frozen=True)
class PatchedModel:
    """Base network plus an ordered list of patches summed onto the logits."""

    base: MlpNetwork
    featuremap: FeatureMap = field(default_factory=FeatureMap)
    patches: tuple[PatchNetwork, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        for p in self.patches:
            if p.out_dim != self.base.output_dim:
                raise ShapeError("patch output dim != network output dim")

    def with_patches(self, new_patches) -> "PatchedModel":
        return PatchedModel(base=self.base, featuremap=self.featuremap,
                            patches=self.patches + tuple(new_patches))


def patched_forward(pm: PatchedModel, x: np.ndarray) -> np.ndarray:
    """Logits of the patched model on raw inputs (vector or batch)."""
    z = pm.featuremap.apply(x)
    logits = forward(pm.base, z)
    for patch in pm.patches:
        logits = logits + patch(z)
    return logits


def patched_predict(pm: PatchedModel, x: np.ndarray) -> int | np.ndarray:
    logits = patched_forward(pm, x)
    labels = np.argmax(logits, axis=-1)
    return int(labels) if logits.ndim == 1 else labels


def logits_of(model, x: np.ndarray) -> np.ndarray:
    """Uniform forward for MlpNetwork or PatchedModel."""
    if isinstance(model, PatchedModel):
        return patched_forward(model, x)
    return forward(model, x)


def predict_of(model, x: np.ndarray) -> int | np.ndarray:
    logits = logits_of(model, x)
    labels = np.argmax(logits, axis=-1)
    return int(labels) if logits.ndim == 1 else labels


# --- patched-model serialization -------------------------------------------

def _patch_to_dict(p: PatchNetwork) -> dict:
    return {
        "confusion": {
            "C": p.confusion.C.tolist(),
            "d": p.confusion.d.tolist(),
            "target_label": p.confusion.target_label,
            "source_label": p.confusion.source_label,
        },
        "supports": [
            {"A": s.A.tolist(), "b": s.b.tolist(), "lam": s.lam}
            for s in p.supports
        ],
        "H": p.H,
    }


def _patch_from_dict(obj: dict) -> PatchNetwork:
    conf = obj["confusion"]
    confusion = ConfusionNetwork(
        C=np.array(conf["C"], dtype=np.float64),
        d=np.array(conf["d"], dtype=np.float64),
        target_label=int(conf["target_label"]),
        source_label=int(conf["source_label"]),
    )
    supports = tuple(
        SupportNetwork(A=np.array(s["A"], dtype=np.float64),
                       b=np.array(s["b"], dtype=np.float64),
                       lam=float(s["lam"]))
        for s in obj["supports"]
    )
    return PatchNetwork(confusion=confusion, supports=supports,
                        H=float(obj["H"]))


def save_patched_model(pm: PatchedModel, path) -> None:
    save_model(pm.base, pm.featuremap, path,
               extra={"patches": [_patch_to_dict(p) for p in pm.patches]})


def load_patched_model(path) -> PatchedModel:
    net, fm = load_model(path)
    import json
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    patches = tuple(_patch_from_dict(p) for p in doc.get("patches", []))
    return PatchedModel(base=net, featuremap=fm, patches=patches)
