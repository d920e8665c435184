"""Forget a batch of training points with clustered region patches.

One patch per point does not scale, so the batch is k-means clustered and
each cluster gets a single confusion offset optimized over all member
regions at once.  Points the patch fails to flip are retried in the next
round against the already-patched model, until a target fraction delta of
the batch is forgotten.

Run:  python3 demos/02_multipoint.py
"""

import numpy as np

from patchunlearn import (UnlearnRequest, accuracy, domain_box_for,
                          gen_blobs, run_request, train_mlp, unlearn_metrics)

train, test = gen_blobs(3, 250, dim=24, spread=0.9, seed=11)
train = train.subset(range(600))
net = train_mlp(train, [16, 16], epochs=50, lr=0.02, seed=1)
box = domain_box_for(train)

rng = np.random.default_rng(5)
du = sorted(int(i) for i in rng.choice(len(train), 30, replace=False))

for k in (1, 3, 5):
    pm, report = run_request(net, UnlearnRequest(
        mode="multipoint", features=train.features[du],
        labels=train.labels[du], domain_box=box, k=k, delta=0.9, seed=2,
        reference_features=train.features))
    curve = " -> ".join(f"{r.success_fraction:.2f}" for r in report.records)
    print(f"k={k}: {report.status} in {report.iterations} iteration(s), "
          f"{report.patch_count} patches, flip curve {curve}")

# Full before/after scorecard for the last run
d_u = train.subset(du)
d_r = train.subset([i for i in range(len(train)) if i not in set(du)])
m = unlearn_metrics(net, pm, d_u, d_r, test)
for name, before, after, delta in m.rows():
    print(f"  {name:6s} {before:6.2f} -> {after:6.2f}  ({delta:+.2f})")
print(f"test accuracy on untouched model: {accuracy(net, test):.2f}")
