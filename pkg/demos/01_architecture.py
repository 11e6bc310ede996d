r"""
FFNet architecture as data
==========================

Build the six-stage network for 32x32 RGB inputs, walk its inferred shapes,
and compare parameter count and gradient-path depth with the ablation twin
that has no fast-forward branches.
"""

from ffnet import graph

ffnet = graph.build_ffnet((3, 32, 32), num_classes=10, stages=6)
twin = graph.build_ffnet((3, 32, 32), num_classes=10, stages=6, ablation=True)

# %%
# Each stage trims 4 pixels from both branches, so the spatial extent
# drops 32 -> 28 -> ... -> 8 and the classifier sees 8*8*128 features.
print(ffnet.stage_extents())
for name, shape in graph.infer_shapes(ffnet)[:7]:
    print(f"{name:16s} {shape}")
print("flatten width", ffnet.flatten_width)

# %%
# Parameter budget.  The FC1 layer dominates: 8192*400 weights.
for spec in (ffnet, twin):
    pc = graph.count_params(spec)
    print(f"{'ablation' if spec.ablation else 'ffnet':9s} {pc.total:>9,d} params  {pc.size_mb:6.2f} MB")

# %%
# The fast-forward branch gives every stage a one-layer bypass, so the
# shortest route from input to loss crosses 6 + 3 parameterized layers
# instead of 18 + 3.
print("ffnet    shortest/longest", graph.gradient_path_depth(ffnet))
print("ablation shortest/longest", graph.gradient_path_depth(twin))
