"""Run the landmark-to-boundary propagation module end to end.

Run:  python3 demos/05_propagation_forward.py
"""
import tempfile
from pathlib import Path

import numpy as np

from heatmark import (
    attention_hourglass,
    default_boundary_scheme,
    forward_module,
    init_propagation_weights,
    load_weights,
    save_weights,
)

scheme = default_boundary_scheme()
weights = init_propagation_weights(scheme, n_features=64, width=16, depth=3, seed=7)
n_params = sum(w.size for w in weights.params.values())
print(f"initialized {len(weights.params)} tensors, {n_params} parameters")

rng = np.random.default_rng(3)
features = rng.uniform(size=(64, 32, 32))
landmarks = rng.uniform(size=(98, 32, 32))

boundaries, modulated = forward_module(features, landmarks, weights, scheme)
print(f"boundaries: {boundaries.shape}, range "
      f"[{boundaries.min():.3f}, {boundaries.max():.3f}]")
print(f"modulated features: {modulated.shape}")

att = attention_hourglass(features, boundaries, weights)
print(f"attention: {att.shape}, range [{att.min():.4f}, {att.max():.4f}] "
      "(sigmoid keeps it inside (0, 1))")

# Same seed, same bits. The forward pass has no hidden state.
again, _ = forward_module(features, landmarks, weights, scheme)
print(f"repeat forward identical: {np.array_equal(boundaries, again)}")

with tempfile.TemporaryDirectory() as d:
    save_weights(weights, Path(d))
    reloaded = load_weights(Path(d))
    rb, _ = forward_module(features, landmarks, reloaded, scheme)
    # Storage is float32, so the round trip quantizes the weights a little.
    print(f"after save/load round trip, max boundary drift: "
          f"{np.abs(rb - boundaries).max():.2e}")
