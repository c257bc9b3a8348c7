"""Show the adaptive wing loss surface and focal batch weighting.

Run:  python3 demos/03_adaptive_losses.py
"""
import numpy as np

from heatmark import (
    BatchAttributes,
    LossParams,
    awing,
    awing_branches,
    focal_factor,
    sample_weight,
    total_loss,
)

p = LossParams()
print(f"params: omega={p.omega} epsilon={p.epsilon} alpha={p.alpha} "
      f"theta={p.theta} beta={p.beta}")

# The loss is nonlinear near the target and linear past theta. The target
# value y also bends the curve: high-value pixels get a steeper well.
print("\n|y - yhat|   awing(y=0)   awing(y=1)")
for d in (0.0, 0.1, 0.25, 0.5, 1.0, 2.0):
    print(f"  {d:<9} {awing(0.0, d):>10.4f} {awing(1.0, d):>11.4f}")

core, linear = awing_branches(0.5, 0.5 + p.theta)
print(f"\nbranch values at the crossover: core {core!r}, linear {linear!r}")

# Focal weighting: rare attribute classes get upweighted so each class
# contributes as if it filled the whole batch.
flags = np.zeros((8, 6), dtype=int)
flags[:2, 0] = 1   # pose on 2 of 8
flags[:5, 4] = 1   # occlusion on 5 of 8
batch = BatchAttributes(flags)
print(f"\nbatch of {batch.n_samples}: pose factor {focal_factor(batch, 0)}, "
      f"occlusion factor {focal_factor(batch, 4)}")
print("per-sample weights:", [float(sample_weight(batch, i)) for i in range(4)])

rng = np.random.default_rng(0)
target_lm = rng.uniform(size=(1, 4, 16, 16))
target_bd = rng.uniform(size=(1, 2, 16, 16))
pred_lm = target_lm + rng.normal(0, 0.05, target_lm.shape)
pred_bd = target_bd + rng.normal(0, 0.05, target_bd.shape)
one = BatchAttributes(np.array([[1, 0, 0, 0, 0, 0]]))
value = total_loss(target_lm, pred_lm, target_bd, pred_bd, one, p)
print(f"\ntotal loss on a noisy single-sample batch: {value:.4f}")
