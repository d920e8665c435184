"""Forget one training point by patching its exact linear region.

Walks through the whole single-point pipeline by hand so every step is
visible: extract the region's half-spaces, synthesize the minimal logit
offset that flips the prediction there, wrap it in the ReLU support
gadget, and verify that every other training point is untouched --
exactly, not approximately.

Run:  python3 demos/01_single_point.py
"""

import numpy as np

from patchunlearn import (UnlearnRequest, domain_box_for, forward, gen_blobs,
                          patched_forward, predict, predict_of, region_of,
                          run_request, train_mlp)

train, test = gen_blobs(3, 250, dim=24, spread=0.9, seed=11)
train = train.subset(range(600))
net = train_mlp(train, [16, 16], epochs=50, lr=0.02, seed=1)
box = domain_box_for(train)

i = 42
x, y = train.features[i], int(train.labels[i])
print(f"target point #{i}: true/predicted class {y}")

# The network is affine inside the activation region of x.  Every ReLU gate
# contributes one half-space; the region is their intersection.
region = region_of(net, x, box)
print(f"region: {region.A.shape[0]} half-spaces before pruning")

pm, report = run_request(net, UnlearnRequest(
    mode="single", features=x[None], labels=[y], domain_box=box,
    seed=0, reference_features=train.features))
print(f"status={report.status}  patches={report.patch_count}")
print(f"prediction after patch: {predict_of(pm, x)}  (was {y})")

# Exactness check: the patch is gated to the region, so logits elsewhere
# are bit-identical, not just argmax-identical.
others = [j for j in range(len(train)) if j != i]
sigma = np.asarray(pm.patches[-1].sigma(train.features[others]))
outside = sigma == 0.0
same = np.array_equal(
    patched_forward(pm, train.features[others])[outside],
    forward(net, train.features[others])[outside])
print(f"{int(outside.sum())}/{len(others)} other points outside the "
      f"support band; logits identical there: {same}")

flipped = int((predict_of(pm, train.features[others])
               != predict(net, train.features[others])).sum())
print(f"prediction changes among the other {len(others)} points: {flipped}")
