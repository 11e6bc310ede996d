"""Gradient verification and gradient-flow probes.

``gradcheck`` compares backpropagated gradients with central finite
differences in float64.  ``flow_profile`` records, per stage, the L2 norm of
the gradient of that stage's first deep convolution; ``flow_experiment``
compares the early/late norm ratio of freshly initialized FFNets against
their ablation twins.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import graph, layers
from .errors import GradientError
from .graph import NetworkSpec, ParamStore

FD_EPS = 1e-4


def relative_error(analytic, numeric, floor: float = 1e-12):
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f, x: np.ndarray, eps: float = FD_EPS, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    ``index`` restricts the estimate to those flat positions; other entries
    are left at zero.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    positions = range(flat.size) if index is None else index
    for i in positions:
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float
    checked: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def format(self) -> str:
        lines = [f"{'parameter':<24} {'max rel err':>12}"]
        lines += [f"{name:<24} {err:12.3e}" for name, err in self.errors.items()]
        lines.append(f"checked {self.checked} coordinates, global max {self.max_error:.3e}, "
                     f"tolerance {self.tolerance:g}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def gradcheck(spec: NetworkSpec, seed: int = 0, tolerance: float = 1e-4, batch_size: int = 2,
              params: ParamStore | None = None, x: np.ndarray | None = None, labels=None,
              max_per_tensor: int | None = None, eps: float = FD_EPS) -> GradCheckReport:
    """Whole-network finite-difference check in float64.

    Parameters come from ``init_params(spec, seed)`` and the batch from a
    generator seeded with ``seed`` unless given.  ``max_per_tensor`` samples
    that many coordinates per tensor (seeded) instead of checking them all.

    Central differences are only meaningful where no ReLU input crosses zero
    within the perturbation; wide networks with many units near zero can
    report large errors on early layers for that reason alone.
    """
    rng = np.random.default_rng([seed, 7])
    params = (graph.init_params(spec, seed) if params is None else params).astype(np.float64)
    if x is None:
        x = rng.standard_normal((batch_size, *spec.input_shape))
    x = np.asarray(x, dtype=np.float64)
    if labels is None:
        labels = rng.integers(0, spec.num_classes, size=x.shape[0])

    def loss_fn():
        logits, _ = graph.forward(spec, params, x)
        return layers.softmax_xent(logits, labels)[0]

    graph.loss_and_grads(spec, params, x, labels)
    analytic = {k: g.copy() for k, g in params.grads.items()}
    errors, checked = {}, 0
    for name, value in params.values.items():
        index = None
        if max_per_tensor is not None and value.size > max_per_tensor:
            index = np.sort(rng.choice(value.size, size=max_per_tensor, replace=False))
        numeric = numeric_gradient(loss_fn, value, eps, index)
        a = analytic[name].reshape(-1)
        n = numeric.reshape(-1)
        if index is not None:
            a, n = a[index], n[index]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
            raise GradientError(f"non-finite gradient in {name}")
        errors[name] = float(relative_error(a, n).max(initial=0.0))
        checked += a.size
    return GradCheckReport(errors, tolerance, checked)


@dataclass
class FlowProfile:
    norms: list[float]
    tag: str
    seed: int

    @property
    def ratio(self) -> float:
        """First-stage norm over last-stage norm; ``inf``/``nan`` if the last is zero."""
        first, last = self.norms[0], self.norms[-1]
        if last == 0:
            return float("inf") if first > 0 else float("nan")
        return first / last

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["stage", "norm"])
        for i, v in enumerate(self.norms, 1):
            wr.writerow([i, repr(v)])
        return buf.getvalue()


def flow_profile(spec: NetworkSpec, params: ParamStore, x: np.ndarray, labels=None,
                 grad_logits: np.ndarray | None = None, tag: str = "", seed: int = 0) -> FlowProfile:
    """One forward/backward pass; per-stage norm of the first deep conv's weight gradient.

    The loss is softmax cross-entropy on ``labels`` unless ``grad_logits`` is
    supplied directly.
    """
    logits, trace = graph.forward(spec, params, x, capture=True)
    if grad_logits is None:
        _, grad_logits = layers.softmax_xent(logits, labels)
    graph.backward(spec, params, trace, grad_logits)
    norms = [float(np.linalg.norm(params.grads[f"stage{i}.deep1.weight"].astype(np.float64)))
             for i in range(1, len(spec.stages) + 1)]
    params.zero_grads()
    if not all(np.isfinite(v) for v in norms):
        raise GradientError("non-finite gradient norm")
    return FlowProfile(norms, tag or ("ablation" if spec.ablation else "ffnet"), seed)


@dataclass
class FlowSummary:
    seeds: list[int]
    r_ffnet: list[float]
    r_ablation: list[float]
    profiles: list[tuple[FlowProfile, FlowProfile]] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        """Share of seeds where the FFNet ratio strictly exceeds the ablation's."""
        wins = sum(f > a for f, a in zip(self.r_ffnet, self.r_ablation))
        return wins / len(self.seeds)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["seed", "r_ffnet", "r_ablation"])
        for s, f, a in zip(self.seeds, self.r_ffnet, self.r_ablation):
            wr.writerow([s, repr(f), repr(a)])
        return buf.getvalue()

    def format(self) -> str:
        lines = [f"{'seed':>6} {'r_ffnet':>12} {'r_ablation':>12}"]
        lines += [f"{s:>6} {f:12.5g} {a:12.5g}" for s, f, a in zip(self.seeds, self.r_ffnet, self.r_ablation)]
        lines.append(f"fraction r_ffnet > r_ablation: {self.fraction:.3f} ({len(self.seeds)} seeds)")
        return "\n".join(lines)


def flow_batch(input_shape, num_classes: int, batch_size: int, seed: int):
    rng = np.random.default_rng([seed, 11])
    x = rng.standard_normal((batch_size, *input_shape)).astype(np.float32)
    return x, rng.integers(0, num_classes, size=batch_size)


def flow_experiment(stage_count: int = 6, seeds=20, batch_size: int = 8, input_shape=(3, 32, 32),
                    num_classes: int = 10, **arch) -> FlowSummary:
    """FFNet vs ablation twin at initialization, one seed at a time.

    For each seed both networks are initialized from that seed and see the
    same standard-normal batch with uniform random labels.  ``seeds`` is a
    count (seeds ``0..seeds-1``) or an explicit sequence.
    """
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    ff_spec = graph.build_ffnet(input_shape, num_classes, stage_count, ablation=False, **arch)
    ab_spec = graph.build_ffnet(input_shape, num_classes, stage_count, ablation=True, **arch)
    summary = FlowSummary(seed_list, [], [])
    for seed in seed_list:
        x, y = flow_batch(input_shape, num_classes, batch_size, seed)
        pf = flow_profile(ff_spec, graph.init_params(ff_spec, seed), x, y, seed=seed)
        pa = flow_profile(ab_spec, graph.init_params(ab_spec, seed), x, y, seed=seed)
        summary.r_ffnet.append(pf.ratio)
        summary.r_ablation.append(pa.ratio)
        summary.profiles.append((pf, pa))
    return summary
