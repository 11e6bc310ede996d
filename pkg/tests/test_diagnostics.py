import numpy as np
import pytest

from ffnet import diagnostics, graph


def tiny(stages=2, hw=10, ablation=False):
    return graph.build_ffnet((3, hw, hw), 2, stages, ablation, branch_width=4, fc_sizes=(16, 8))


def test_gradcheck_passes_on_tiny_ffnet():
    report = diagnostics.gradcheck(tiny(), seed=0, tolerance=1e-4)
    assert report.passed, report.format()
    assert report.checked == graph.count_params(tiny()).total
    assert report.passed == (report.max_error < report.tolerance)


def test_gradcheck_is_pure():
    a = diagnostics.gradcheck(tiny(stages=1), seed=3, tolerance=1e-4)
    b = diagnostics.gradcheck(tiny(stages=1), seed=3, tolerance=1e-4)
    assert a.errors == b.errors


@pytest.mark.parametrize("kind", ["conv", "fc", "relu", "concat"])
def test_gradcheck_catches_sign_flip(kind):
    spec = tiny()
    with graph.inject_backward_fault(kind):
        report = diagnostics.gradcheck(spec, seed=0, tolerance=1e-4)
    assert not report.passed
    assert diagnostics.gradcheck(spec, seed=0, tolerance=1e-4).passed


def test_unknown_fault_kind():
    with pytest.raises(ValueError):
        with graph.inject_backward_fault("pool"):
            pass


def test_gradcheck_zero_weights_zero_input():
    spec = tiny(stages=1)
    params = graph.init_params(spec, 0, init="zeros")
    report = diagnostics.gradcheck(spec, params=params, x=np.zeros((2, 3, 10, 10)), labels=[0, 1])
    assert report.passed


def test_gradcheck_sampling():
    spec = graph.build_ffnet((3, 10, 10), 2, 2)
    report = diagnostics.gradcheck(spec, seed=0, max_per_tensor=5)
    assert report.passed
    assert report.checked <= 5 * len(graph.init_params(spec, 0, init="zeros").values)


def test_relative_error_floor():
    assert diagnostics.relative_error(0.0, 0.0) == 0.0
    assert diagnostics.relative_error(1.0, 0.5) == 0.5


def test_flow_profile_basic():
    spec = tiny(stages=3, hw=14)
    params = graph.init_params(spec, 0)
    x, y = diagnostics.flow_batch(spec.input_shape, 2, 4, seed=0)
    prof = diagnostics.flow_profile(spec, params, x, y)
    assert len(prof.norms) == 3 and all(np.isfinite(v) and v >= 0 for v in prof.norms)
    again = diagnostics.flow_profile(spec, graph.init_params(spec, 0), x, y)
    assert again.norms == prof.norms
    assert prof.to_csv().splitlines()[0] == "stage,norm"
    assert all(g is None for g in params.grads.values())


def test_flow_profile_zero_loss_gradient():
    spec = tiny(stages=2)
    params = graph.init_params(spec, 0)
    x, _ = diagnostics.flow_batch(spec.input_shape, 2, 3, seed=0)
    prof = diagnostics.flow_profile(spec, params, x, grad_logits=np.zeros((3, 2), np.float32))
    assert prof.norms == [0.0, 0.0]


def test_flow_experiment_single_stage_is_degenerate():
    s = diagnostics.flow_experiment(1, seeds=3, batch_size=2, input_shape=(3, 8, 8), num_classes=2,
                                    branch_width=4, fc_sizes=(8, 4))
    assert s.r_ffnet == [1.0] * 3 and s.r_ablation == [1.0] * 3
    assert s.fraction == 0.0


def test_flow_experiment_is_reproducible():
    kw = dict(input_shape=(3, 16, 16), num_classes=4, branch_width=8, fc_sizes=(16, 8))
    a = diagnostics.flow_experiment(3, seeds=4, batch_size=4, **kw)
    b = diagnostics.flow_experiment(3, seeds=4, batch_size=4, **kw)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "seed,r_ffnet,r_ablation"
    assert "fraction" in a.format()


def test_ratio_with_dead_last_stage():
    assert diagnostics.FlowProfile([1.0, 0.0], "ffnet", 0).ratio == float("inf")
    assert np.isnan(diagnostics.FlowProfile([0.0, 0.0], "ffnet", 0).ratio)
