"""Unlearning orchestration: single point, clustered multipoint, whole class.

The single-point path patches the exact linear region of the target.  The
multipoint path iterates: cluster the residual set, optimize one confusion
map per cluster at a representative member, give every member whose label
flips its own support region, append the patches, and stop once the flipped
fraction exceeds the requested degree.  The class path replaces clustering
with a distance-central member and widens supports via certified
perturbation radii so the erasure generalizes over the class.

Determinism: every random draw goes through generators derived from the
request seed, so identical (model, request, seed) produce bit-identical
patch lists.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import relaxed_region, robust_radius
from .network import MlpNetwork
from .patching import (DEFAULT_LAMBDA, DEFAULT_MARGIN, PatchedModel,
                       SupportNetwork, assemble_patch, compute_H, logits_of,
                       optimize_confusion, predict_of)
from .regions import (LinearRegion, prune_parallel, region_affine_map,
                      region_of, region_purity)

LAMBDA_MAX = 1e8


class RequestError(ValueError):
    """The unlearning request is internally inconsistent."""


@dataclass
class UnlearnRequest:
    mode: str                     # "single" | "multipoint" | "class"
    features: np.ndarray          # (n, d) feature-space points of D_U
    labels: np.ndarray            # (n,)
    domain_box: tuple             # (lo, hi) feature bounding box
    y_unlearn: int | None = None  # class mode only
    delta: float = 0.9
    k: int = 1
    lam: float = DEFAULT_LAMBDA
    lam_max: float = LAMBDA_MAX
    margin: float = DEFAULT_MARGIN
    seed: int = 0
    max_iterations: int = 50
    confusion_mode: str = "constant"
    # class mode: relaxed supports are clipped to a sup-norm ball of
    # relax_scale times the certified radius around each member
    relax_scale: float = 5.3
    # training features used for purity reporting and band checks
    reference_features: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features,
                                                 dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.mode not in ("single", "multipoint", "class"):
            raise RequestError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.delta <= 1.0:
            raise RequestError("delta must be in (0, 1]")
        if self.k < 1:
            raise RequestError("cluster count must be >= 1")
        if self.max_iterations < 1:
            raise RequestError("max_iterations must be >= 1")
        if self.features.shape[0] != self.labels.shape[0]:
            raise RequestError("features/labels length mismatch")
        if self.mode == "class":
            if self.y_unlearn is None:
                raise RequestError("class mode requires y_unlearn")
            if not np.all(self.labels == self.y_unlearn):
                raise RequestError(
                    "class mode requires every label to equal y_unlearn")


@dataclass
class IterationRecord:
    index: int
    clusters: int
    flipped: int            # cumulative flipped count after this iteration
    success_fraction: float
    seconds: float


@dataclass
class UnlearnReport:
    status: str = "converged"     # "converged" | "no-op" | "non-convergence"
    iterations: int = 0
    records: list[IterationRecord] = field(default_factory=list)
    final_flip_rate: float = 0.0
    patch_count: int = 0
    residual_indices: list[int] = field(default_factory=list)
    already_unlearned: list[int] = field(default_factory=list)
    purity_violations: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def success_fractions(self) -> list[float]:
        return [r.success_fraction for r in self.records]


def kmeans(points: np.ndarray, k: int, seed: int,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ plus Lloyd iterations to an assignment fixpoint.

    Centroids are snapped to the nearest member of their cluster so each
    representative is an actual data point (regions only exist at points).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    rng = np.random.default_rng(seed)
    # k-means++ seeding
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [((points - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
            continue
        centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    assign = np.full(n, -1, dtype=np.int64)
    for _round in range(max_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(dists, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    # snap to nearest member
    snapped = centers.copy()
    for c in range(k):
        members = np.nonzero(assign == c)[0]
        if len(members):
            d2 = ((points[members] - centers[c]) ** 2).sum(axis=1)
            snapped[c] = points[members[np.argmin(d2)]]
    return assign, snapped


def _as_patched(model) -> PatchedModel:
    if isinstance(model, PatchedModel):
        return model
    if isinstance(model, MlpNetwork):
        return PatchedModel(base=model)
    raise TypeError(f"cannot unlearn on {type(model).__name__}")


def _extract_region(model: PatchedModel, z: np.ndarray,
                    domain_box) -> LinearRegion:
    region = region_of(model if model.patches else model.base, z, domain_box)
    if model.patches:
        region = prune_parallel(region)
    return region


def _escalate_lambda(supports: list[SupportNetwork], reference: np.ndarray,
                     lam: float, lam_max: float):
    """Raise lambda until no reference point sits strictly inside any
    support's transition band.  Returns (supports, lam, leftover_count).

    The slack matrices b - A x are lambda-independent, so they are computed
    once and only the cheap bump arithmetic is repeated per level."""
    from .patching import bump
    if reference is None or len(reference) == 0:
        return supports, lam, 0
    slacks = [s.b - reference @ s.A.T for s in supports]
    while True:
        in_band = np.zeros(len(reference), dtype=bool)
        for s, slack in zip(supports, slacks):
            total = bump(slack, lam).sum(axis=1) - (s.n_constraints - 1)
            val = np.maximum(total, 0.0)
            in_band |= (val > 0.0) & (val < 1.0)
        count = int(in_band.sum())
        if count == 0 or lam >= lam_max:
            return [s.with_lambda(lam) for s in supports], lam, count
        lam = min(lam * 10.0, lam_max)


def _pick_target(rng, n_classes: int, y: int) -> int:
    others = [l for l in range(n_classes) if l != y]
    return int(rng.choice(others))


def unlearn_single(model, x_u: np.ndarray, y_u: int,
                   request: UnlearnRequest) -> tuple[PatchedModel,
                                                     UnlearnReport]:
    """One guaranteed prediction flip via a single exact-region patch."""
    t0 = time.perf_counter()
    current = _as_patched(model)
    x_u = np.asarray(x_u, dtype=np.float64)
    report = UnlearnReport()
    if predict_of(current, x_u) != y_u:
        report.status = "no-op"
        report.warnings.append(
            f"point is already classified as {predict_of(current, x_u)}, "
            f"not {y_u}; nothing to unlearn")
        report.final_flip_rate = 1.0
        return current, report

    rng = np.random.default_rng(request.seed)
    n_classes = current.base.output_dim
    y_hat = _pick_target(rng, n_classes, y_u)

    region = _extract_region(current, x_u, request.domain_box)
    gmap = region_affine_map(current if current.patches else current.base,
                            region)
    confusion = optimize_confusion(gmap, region, y_u, y_hat,
                                   margin=request.margin,
                                   mode=request.confusion_mode)
    h_bound = compute_H(confusion, request.domain_box)
    support = SupportNetwork.from_region(region, lam=request.lam)

    ref = request.reference_features
    if ref is not None and len(ref):
        inside = region_purity(region, ref)
        # the anchor's own row, when present in the reference set, is not a
        # violation -- but only one row is "own": an exact duplicate shares
        # every region and must be flagged
        shared = []
        own_seen = False
        for i in inside:
            if not own_seen and np.array_equal(ref[i], x_u):
                own_seen = True
            else:
                shared.append(i)
        if shared:
            report.purity_violations["region_0"] = shared
            report.warnings.append(
                f"{len(shared)} other reference point(s) share the target's "
                f"region; preservation excludes them")
        supports, lam, leftover = _escalate_lambda(
            [support], ref, request.lam, request.lam_max)
        support = supports[0]
        if leftover:
            report.warnings.append(
                f"{leftover} reference point(s) remain in the transition "
                f"band at lambda={lam:g}")

    patch = assemble_patch(confusion, [support], h_bound,
                           domain_box=request.domain_box)
    current = current.with_patches([patch])

    flipped = predict_of(current, x_u) != y_u
    report.status = "converged" if flipped else "non-convergence"
    report.iterations = 1
    report.final_flip_rate = 1.0 if flipped else 0.0
    report.patch_count = 1
    report.records.append(IterationRecord(
        index=0, clusters=1, flipped=int(flipped),
        success_fraction=float(flipped),
        seconds=time.perf_counter() - t0))
    report.timings["unlearn"] = time.perf_counter() - t0
    return current, report


def _build_cluster_patch(current, geometry, centroid, centroid_label, y_hat,
                         member_idx, feats, labels, request, report,
                         support_region_fn):
    """Shared per-cluster work: confusion at the representative, one
    support per flipped member.  Returns (patch | None, failed indices).

    ``geometry`` is the network whose linear regions are cut (the base
    network in the clustered modes: a patch is zero outside its own
    support bands no matter what model it lands on, and flips are checked
    against the deployed logits below, so base-network geometry keeps
    region sizes constant across iterations instead of inheriting every
    earlier patch's gates)."""
    region = region_of(geometry, centroid, request.domain_box)
    gmap = region_affine_map(geometry, region)
    confusion = optimize_confusion(gmap, region, centroid_label, y_hat,
                                   margin=request.margin,
                                   mode=request.confusion_mode)
    supports = []
    failed = []
    member_logits = logits_of(current, feats[member_idx])
    member_m = confusion(feats[member_idx])
    trial = np.argmax(member_logits + member_m, axis=-1)
    for j, i in enumerate(member_idx):
        if trial[j] != labels[i]:
            supports.append(support_region_fn(i))
        else:
            failed.append(int(i))
    if not supports:
        return None, failed
    lam = request.lam
    ref = request.reference_features
    if ref is not None and len(ref):
        supports, lam, leftover = _escalate_lambda(
            supports, ref, request.lam, request.lam_max)
        if leftover:
            report.warnings.append(
                f"{leftover} reference point(s) remain in a transition band "
                f"at lambda={lam:g}")
    h_bound = compute_H(confusion, request.domain_box)
    patch = assemble_patch(confusion, supports, h_bound,
                           domain_box=request.domain_box)
    return patch, failed


def unlearn_multipoint(model, request: UnlearnRequest
                       ) -> tuple[PatchedModel, UnlearnReport]:
    """Iterative clustered unlearning down to the requested degree delta."""
    if request.mode != "multipoint":
        raise RequestError("request mode must be 'multipoint'")
    t0 = time.perf_counter()
    current = _as_patched(model)
    feats, labels = request.features, request.labels
    n_total = len(labels)
    report = UnlearnReport()
    rng = np.random.default_rng(request.seed)
    n_classes = current.base.output_dim

    preds = np.argmax(logits_of(current, feats), axis=-1)
    remaining = [int(i) for i in np.nonzero(preds == labels)[0]]
    report.already_unlearned = [int(i) for i in np.nonzero(preds != labels)[0]]

    if not remaining:
        report.status = "converged"
        report.final_flip_rate = 1.0
        report.timings["unlearn"] = time.perf_counter() - t0
        return current, report

    converged = False
    for it in range(request.max_iterations):
        it_start = time.perf_counter()
        k_eff = min(request.k, len(remaining))
        assign, centroids = kmeans(feats[remaining], k_eff,
                                   seed=request.seed * 100003 + it)
        new_patches = []
        for c in range(k_eff):
            member_idx = [remaining[j] for j in np.nonzero(assign == c)[0]]
            if not member_idx:
                continue
            centroid = centroids[c]
            # the snapped centroid is a member; recover its label
            local = feats[member_idx]
            ci = int(np.argmin(((local - centroid) ** 2).sum(axis=1)))
            centroid_label = int(labels[member_idx[ci]])
            y_hat = _pick_target(rng, n_classes, centroid_label)
            patch, _failed = _build_cluster_patch(
                current, current.base, centroid, centroid_label, y_hat,
                member_idx, feats, labels, request, report,
                support_region_fn=lambda i: SupportNetwork.from_region(
                    region_of(current.base, feats[i], request.domain_box),
                    lam=request.lam))
            if patch is not None:
                new_patches.append(patch)
        current = current.with_patches(new_patches)
        # residual accounting on the deployed model: only true flips count
        rem_feats = feats[remaining]
        rem_preds = np.argmax(logits_of(current, rem_feats), axis=-1)
        remaining = [i for i, p in zip(remaining, rem_preds)
                     if p == labels[i]]
        fraction = 1.0 - len(remaining) / n_total
        report.records.append(IterationRecord(
            index=it, clusters=k_eff,
            flipped=n_total - len(remaining),
            success_fraction=fraction,
            seconds=time.perf_counter() - it_start))
        if fraction > request.delta:
            converged = True
            break
        if not remaining:
            converged = True
            break

    report.iterations = len(report.records)
    report.patch_count = len(current.patches) - len(_as_patched(model).patches)
    final_preds = np.argmax(logits_of(current, feats), axis=-1)
    report.final_flip_rate = float(np.mean(final_preds != labels))
    report.residual_indices = [int(i) for i in
                               np.nonzero(final_preds == labels)[0]]
    report.status = "converged" if converged else "non-convergence"
    report.timings["unlearn"] = time.perf_counter() - t0
    return current, report


def unlearn_class(model, request: UnlearnRequest
                  ) -> tuple[PatchedModel, UnlearnReport]:
    """Whole-class erasure with certified-radius-relaxed supports."""
    if request.mode != "class":
        raise RequestError("request mode must be 'class'")
    t0 = time.perf_counter()
    current = _as_patched(model)
    base = current.base
    feats, labels = request.features, request.labels
    y_un = int(request.y_unlearn)
    n_total = len(labels)
    report = UnlearnReport()
    rng = np.random.default_rng(request.seed)
    n_classes = base.output_dim

    preds = np.argmax(logits_of(current, feats), axis=-1)
    remaining = [int(i) for i in np.nonzero(preds == labels)[0]]
    report.already_unlearned = [int(i) for i in np.nonzero(preds != labels)[0]]
    if not remaining:
        report.status = "converged"
        report.final_flip_rate = 1.0
        report.timings["unlearn"] = time.perf_counter() - t0
        return current, report

    ref = request.reference_features

    def relaxed_support(i: int) -> SupportNetwork:
        x = feats[i]
        try:
            rho = robust_radius(base, x, y_un, tol=1e-3,
                                domain_box=request.domain_box)
        except ValueError:
            rho = 0.0  # base already mispredicts; fall back to exact region
        region = relaxed_region(base, x, rho, request.domain_box,
                                ball_scale=request.relax_scale)
        return SupportNetwork.from_region(region, lam=request.lam)

    converged = False
    for it in range(request.max_iterations):
        it_start = time.perf_counter()
        # distance-central member of the residual set
        rem_feats = feats[remaining]
        d2 = ((rem_feats[:, None, :] - rem_feats[None, :, :]) ** 2).sum(axis=2)
        ci = int(np.argmin(np.sqrt(d2).sum(axis=1)))
        centroid = rem_feats[ci]
        y_hat = _pick_target(rng, n_classes, y_un)
        patch, _failed = _build_cluster_patch(
            current, base, centroid, y_un, y_hat, remaining, feats, labels,
            request, report, support_region_fn=relaxed_support)
        if patch is not None:
            current = current.with_patches([patch])
        rem_preds = np.argmax(logits_of(current, feats[remaining]), axis=-1)
        remaining = [i for i, p in zip(remaining, rem_preds)
                     if p == labels[i]]
        fraction = 1.0 - len(remaining) / n_total
        report.records.append(IterationRecord(
            index=it, clusters=1,
            flipped=n_total - len(remaining),
            success_fraction=fraction,
            seconds=time.perf_counter() - it_start))
        if fraction > request.delta or not remaining:
            converged = True
            break

    report.iterations = len(report.records)
    report.patch_count = len(current.patches) - len(_as_patched(model).patches)
    final_preds = np.argmax(logits_of(current, feats), axis=-1)
    report.final_flip_rate = float(np.mean(final_preds != labels))
    report.residual_indices = [int(i) for i in
                               np.nonzero(final_preds == labels)[0]]
    report.status = "converged" if converged else "non-convergence"
    report.timings["unlearn"] = time.perf_counter() - t0
    return current, report


def run_request(model, request: UnlearnRequest
                ) -> tuple[PatchedModel, UnlearnReport]:
    """Dispatch on request mode."""
    if request.mode == "single":
        if len(request.labels) != 1:
            raise RequestError("single mode takes exactly one point")
        return unlearn_single(model, request.features[0],
                              int(request.labels[0]), request)
    if request.mode == "multipoint":
        return unlearn_multipoint(model, request)
    return unlearn_class(model, request)
