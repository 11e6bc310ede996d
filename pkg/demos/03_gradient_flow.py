r"""
Gradient flow at initialization
===============================

For freshly initialized networks, compare how much gradient reaches the first
stage relative to the last stage, with and without fast-forward branches.
The ratio uses the L2 norm of each stage's first 3x3 convolution gradient.

Takes about a minute on one CPU core.
"""

import numpy as np

from ffnet import diagnostics

summary = diagnostics.flow_experiment(stage_count=6, seeds=20, batch_size=8)
print(summary.format())

# %%
# Per-stage norms for one seed.
ff, ab = summary.profiles[0]
for i, (a, b) in enumerate(zip(ff.norms, ab.norms), 1):
    print(f"stage {i}: ffnet {a:9.4f}   ablation {b:9.4f}")
print("median ratios:", np.median(summary.r_ffnet), np.median(summary.r_ablation))
