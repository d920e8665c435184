"""Region geometry tests.

The property suite checks, over many random networks and anchors, that
every sampled region point reproduces the anchor's activation pattern
(soundness) and that the region's affine map reproduces the network output
(faithfulness).  Both oracles -- direct forward evaluation and pattern
comparison -- are independent of the constraint propagation under test.
"""

import numpy as np
import pytest

from patchunlearn import (DegenerateRegionError, LinearRegion,
                          activation_pattern, forward,
                          max_affine_over_region, prune_parallel,
                          region_affine_map, region_of, region_purity,
                          sample_region)

from conftest import random_net, unit_box


def test_region_contains_anchor():
    rng = np.random.default_rng(0)
    net = random_net(rng, in_dim=3)
    x = rng.normal(size=3)
    region = region_of(net, x, unit_box(3))
    assert region.contains(x)
    assert region.n_constraints == net.gate_count


def test_anchor_violation_rejected():
    with pytest.raises(ValueError, match="violates"):
        LinearRegion(A=np.array([[1.0, 0.0]]), b=np.array([-1.0]),
                     anchor=np.zeros(2), domain_box=unit_box(2))


def test_region_soundness_and_faithfulness_200_cases():
    rng = np.random.default_rng(42)
    cases = 0
    while cases < 200:
        net = random_net(rng)
        d = net.input_dim
        x = rng.uniform(-0.8, 0.8, size=d)
        region = region_of(net, x, unit_box(d))
        try:
            pts = sample_region(region, 10, seed=int(rng.integers(2**31)))
        except DegenerateRegionError:
            continue
        pat = activation_pattern(net, x)
        gmap = region_affine_map(net, region)
        for p in pts:
            assert activation_pattern(net, p) == pat
            np.testing.assert_allclose(gmap(p), forward(net, p),
                                       atol=1e-8, rtol=0)
        # anchor itself must satisfy its constraints to 1e-9
        if region.n_constraints:
            assert np.min(region.b - region.A @ x) >= -1e-9
        cases += 1


def test_region_of_boundary_anchor():
    # anchor with a pre-activation of exactly zero: still its own region
    from patchunlearn import AffineLayer, MlpNetwork
    net = MlpNetwork((
        AffineLayer(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2)),
        AffineLayer(np.array([[1.0, 1.0]]), np.zeros(1)),
    ))
    x = np.array([0.0, 0.5])
    region = region_of(net, x, unit_box(2))
    assert region.contains(x)


def test_purity_anchor_only():
    rng = np.random.default_rng(5)
    net = random_net(rng, in_dim=2)
    x = rng.uniform(-0.5, 0.5, size=2)
    region = region_of(net, x, unit_box(2))
    idx = region_purity(region, x[None, :])
    assert idx == [0]


def test_purity_excludes_violators():
    region = LinearRegion(A=np.array([[1.0, 0.0]]), b=np.array([0.0]),
                          anchor=np.array([-0.5, 0.0]),
                          domain_box=unit_box(2))
    pts = np.array([[-0.5, 0.0], [0.5, 0.0]])  # second violates by 0.5
    assert region_purity(region, pts) == [0]


def test_max_affine_over_region_against_sampling():
    rng = np.random.default_rng(10)
    for _ in range(50):
        net = random_net(rng)
        d = net.input_dim
        x = rng.uniform(-0.8, 0.8, size=d)
        region = region_of(net, x, unit_box(d))
        w = rng.normal(size=d)
        c = float(rng.normal())
        lp_max = max_affine_over_region(region, w, c)
        try:
            pts = sample_region(region, 50, seed=int(rng.integers(2**31)))
        except DegenerateRegionError:
            continue
        sampled = float(np.max(pts @ w + c))
        assert lp_max >= sampled - 1e-7
        assert lp_max >= float(w @ x + c) - 1e-9


def test_prune_parallel_preserves_feasible_set():
    rng = np.random.default_rng(20)
    for _ in range(50):
        net = random_net(rng)
        d = net.input_dim
        x = rng.uniform(-0.8, 0.8, size=d)
        region = region_of(net, x, unit_box(d))
        pruned = prune_parallel(region)
        assert pruned.n_constraints <= region.n_constraints
        pts = rng.uniform(-1, 1, size=(200, d))
        np.testing.assert_array_equal(region.contains(pts),
                                      pruned.contains(pts))


def test_sample_region_deterministic():
    rng = np.random.default_rng(30)
    net = random_net(rng, in_dim=3)
    x = rng.uniform(-0.5, 0.5, size=3)
    region = region_of(net, x, unit_box(3))
    a = sample_region(region, 20, seed=77)
    b = sample_region(region, 20, seed=77)
    np.testing.assert_array_equal(a, b)


def test_sample_degenerate_region_raises():
    region = LinearRegion(A=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                          b=np.zeros(2), anchor=np.zeros(2),
                          domain_box=unit_box(2))
    # x_0 pinned to exactly 0: hit-and-run can still move along x_1, so
    # shrink the box to make the region a single point
    region = LinearRegion(A=np.array([[1.0, 0.0], [-1.0, 0.0],
                                      [0.0, 1.0], [0.0, -1.0]]),
                          b=np.zeros(4), anchor=np.zeros(2),
                          domain_box=unit_box(2))
    with pytest.raises(DegenerateRegionError):
        sample_region(region, 5, seed=0, max_steps=50)


def test_patched_model_region(blob_model, blob_data, blob_box):
    """Region extraction through a patched model: sampled points keep the
    patched prediction constant and the affine map matches patched logits."""
    from patchunlearn import UnlearnRequest, predict_of, run_request
    from patchunlearn.patching import patched_forward
    train, _ = blob_data
    i = 17
    x, y = train.features[i], int(train.labels[i])
    pm, _ = run_request(blob_model, UnlearnRequest(
        mode="single", features=x[None], labels=[y], domain_box=blob_box,
        seed=0, reference_features=train.features))
    j = int(np.argmax(train.labels != y))  # some other point
    z = train.features[j]
    region = region_of(pm, z, blob_box)
    gmap = region_affine_map(pm, region)
    np.testing.assert_allclose(gmap(z), patched_forward(pm, z), atol=1e-8)
    pts = sample_region(region, 10, seed=3)
    for p in pts:
        np.testing.assert_allclose(gmap(p), patched_forward(pm, p), atol=1e-7)
