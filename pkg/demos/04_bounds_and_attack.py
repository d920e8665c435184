"""Certified robustness bounds and the loss-threshold membership attack.

Two sanity instruments that back the unlearning pipeline: interval-style
logit bounds (used to widen regions in class removal) and a simple
membership-inference attack (did unlearning actually remove the
membership signal?).

Run:  python3 demos/04_bounds_and_attack.py
"""

import numpy as np

from patchunlearn import (UnlearnRequest, certified_margins, domain_box_for,
                          gen_blobs, mean_training_loss, mia_recall, predict,
                          robust_radius, run_request, train_mlp)

train, test = gen_blobs(3, 250, dim=24, spread=0.9, seed=11)
train = train.subset(range(600))
net = train_mlp(train, [16, 16], epochs=50, lr=0.02, seed=1)
box = domain_box_for(train)

# --- certified margins and robust radii ------------------------------------
print("certified robustness (first 5 training points):")
for i in range(5):
    x, y = train.features[i], int(train.labels[i])
    if predict(net, x) != y:
        continue
    r = robust_radius(net, x, y, domain_box=box)
    margins = certified_margins(net, x, r, y)
    print(f"  #{i}: class {y}, certified radius {r:.4f}, "
          f"worst margin at that radius {margins.min():.4f}")

# The bounds are sound: margins must stay positive strictly inside the
# certified radius, and shrink monotonically as the radius grows.
x, y = train.features[0], int(train.labels[0])
for r in (0.0, 0.05, 0.1, 0.2):
    print(f"  radius {r:.2f}: min certified margin "
          f"{certified_margins(net, x, r, y).min():+.4f}")

# --- membership inference before and after unlearning -----------------------
rng = np.random.default_rng(5)
du = sorted(int(i) for i in rng.choice(len(train), 30, replace=False))
pm, _ = run_request(net, UnlearnRequest(
    mode="multipoint", features=train.features[du],
    labels=train.labels[du], domain_box=box, k=3, delta=0.9, seed=2,
    reference_features=train.features))

tau = mean_training_loss(net, train)
d_u = train.subset(du)
print(f"\nloss-threshold attack (tau = mean training loss = {tau:.4f}):")
print(f"  recall on forgotten set, original model: "
      f"{mia_recall(net, d_u, tau):.1f}%")
print(f"  recall on forgotten set, patched model:  "
      f"{mia_recall(pm, d_u, tau):.1f}%")
print(f"  recall on test set (non-members), original: "
      f"{mia_recall(net, test, tau):.1f}%")
