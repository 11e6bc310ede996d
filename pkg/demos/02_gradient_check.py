r"""
Finite-difference gradient check
================================

Check every parameter gradient of a small two-stage network against central
differences in float64, then break one adjoint on purpose and watch the
check fail.
"""

from ffnet import diagnostics, graph

spec = graph.build_ffnet((3, 10, 10), num_classes=2, stages=2, branch_width=4, fc_sizes=(16, 8))
report = diagnostics.gradcheck(spec, seed=0, tolerance=1e-4)
print(report.format())

# %%
# Negate the concat backward.  The deep and fast-forward halves of the
# gradient now point the wrong way.
with graph.inject_backward_fault("concat"):
    broken = diagnostics.gradcheck(spec, seed=0, tolerance=1e-4)
print("with injected fault:", "PASS" if broken.passed else "FAIL", f"(max {broken.max_error:.2e})")
