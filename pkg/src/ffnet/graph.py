"""Fast-forwarding networks: architecture description, shape inference,
parameter accounting, and whole-network forward/backward.

A stage maps its input ``S1`` through two parallel branches::

    deep:  conv3x3(p=0) -> relu -> conv3x3(p=0) -> relu -> conv3x3(p=1) -> relu   (S2C1..S2C3)
    ff:    conv5x5(p=0) -> relu                                                  (B2C1)
    S2 = concat(S2C3, B2C1)        # deep channels first

Both branches shrink the spatial extent by 4.  The ablation twin drops the
``ff`` branch, so its stages emit ``branch_width`` channels instead of
``2 * branch_width``.  After the last stage the activations are flattened and
fed through ``fc1 -> relu -> fc2 -> relu -> out``.
"""
from __future__ import annotations

import contextlib
import hashlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import layers
from .errors import GradientError, ShapeError
from .layers import ConvSpec, LayerParams
from .tensor import check_rank4, concat_channels, make_rng

DEFAULT_FC_SIZES = (400, 100)
DEFAULT_BRANCH_WIDTH = 64
DEFAULT_STAGES = 6


@dataclass(frozen=True)
class StageSpec:
    in_channels: int
    branch_width: int
    deep: tuple[ConvSpec, ConvSpec, ConvSpec]
    ff: ConvSpec | None

    @classmethod
    def build(cls, in_channels: int, branch_width: int = DEFAULT_BRANCH_WIDTH, ablation: bool = False):
        deep = (
            ConvSpec(3, in_channels, branch_width, pad=0),
            ConvSpec(3, branch_width, branch_width, pad=0),
            ConvSpec(3, branch_width, branch_width, pad=1),
        )
        ff = None if ablation else ConvSpec(5, in_channels, branch_width, pad=0)
        return cls(in_channels, branch_width, deep, ff)

    @property
    def out_channels(self) -> int:
        return self.branch_width * (1 if self.ff is None else 2)

    def deep_extent(self, n: int) -> int:
        for conv in self.deep:
            n = conv.out_extent(n)
            if n < 1:
                return n
        return n

    def out_extent(self, n: int) -> int:
        """Spatial extent of ``S2`` for input extent ``n`` (<= 0 when invalid)."""
        d = self.deep_extent(n)
        if self.ff is not None:
            f = self.ff.out_extent(n)
            if d >= 1 and f != d:
                raise ShapeError(f"branch extents disagree: deep {d}, fast-forward {f}")
        return d


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    stages: tuple[StageSpec, ...]
    fc_sizes: tuple[int, ...]
    num_classes: int
    ablation: bool = False

    def __post_init__(self):
        _validate(self)

    @property
    def branch_width(self) -> int:
        return self.stages[0].branch_width

    def stage_extents(self) -> list[int]:
        """Spatial extents ``[N_in, N_1, ..., N_last]`` (square inputs assumed for the trace)."""
        n = self.input_shape[1]
        trace = [n]
        for st in self.stages:
            n = st.out_extent(n)
            trace.append(n)
        return trace

    def final_hw(self) -> tuple[int, int]:
        h, w = self.input_shape[1:]
        for st in self.stages:
            h, w = st.out_extent(h), st.out_extent(w)
        return h, w

    @property
    def flatten_width(self) -> int:
        h, w = self.final_hw()
        return self.stages[-1].out_channels * h * w

    def canonical_text(self) -> str:
        """Flat ``key = value`` description; the basis of :meth:`fingerprint`."""
        c, h, w = self.input_shape
        lines = [
            f"input = {c}x{h}x{w}",
            f"stages = {len(self.stages)}",
            f"branch_width = {self.branch_width}",
            f"fc = {','.join(str(s) for s in self.fc_sizes)}",
            f"classes = {self.num_classes}",
            f"ablation = {int(self.ablation)}",
        ]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).digest()


def _validate(spec: NetworkSpec) -> None:
    c, h, w = spec.input_shape
    if min(c, h, w) < 1:
        raise ShapeError(f"invalid input shape {spec.input_shape}")
    if not spec.stages:
        raise ShapeError("network needs at least one stage")
    if spec.num_classes < 1 or any(s < 1 for s in spec.fc_sizes):
        raise ShapeError("fc sizes and class count must be >= 1")
    in_ch = c
    for i, st in enumerate(spec.stages, 1):
        if st.in_channels != in_ch:
            raise ShapeError(f"stage {i} expects {st.in_channels} channels, previous emits {in_ch}")
        if (st.ff is None) != spec.ablation:
            raise ShapeError(f"stage {i} branch layout disagrees with ablation={spec.ablation}")
        for ext in (h, w):
            n = ext
            for conv in st.deep:
                n = conv.out_extent(n)
                if n < 1:
                    raise ShapeError(f"input {c}x{spec.input_shape[1]}x{spec.input_shape[2]} too small: "
                                     f"stage {i} deep branch reaches extent {n}")
            if st.ff is not None and st.ff.out_extent(ext) < 1:
                raise ShapeError(f"input too small: stage {i} fast-forward branch reaches "
                                 f"extent {st.ff.out_extent(ext)}")
        h, w = st.out_extent(h), st.out_extent(w)
        in_ch = st.out_channels


def build_ffnet(input_shape=(3, 32, 32), num_classes: int = 10, stages: int = DEFAULT_STAGES,
                ablation: bool = False, branch_width: int = DEFAULT_BRANCH_WIDTH,
                fc_sizes=DEFAULT_FC_SIZES) -> NetworkSpec:
    """FFNet (or its ablation twin) with default widths."""
    if stages < 1:
        raise ShapeError("stage count must be >= 1")
    c = input_shape[0]
    specs = []
    for _ in range(stages):
        st = StageSpec.build(c, branch_width, ablation)
        specs.append(st)
        c = st.out_channels
    return NetworkSpec(tuple(int(d) for d in input_shape), tuple(specs), tuple(int(s) for s in fc_sizes),
                       int(num_classes), bool(ablation))


# -- static analysis ---------------------------------------------------------

def conv_layers(spec: NetworkSpec) -> Iterator[tuple[str, ConvSpec]]:
    for i, st in enumerate(spec.stages, 1):
        for j, conv in enumerate(st.deep, 1):
            yield f"stage{i}.deep{j}", conv
        if st.ff is not None:
            yield f"stage{i}.ff", st.ff


def fc_layers(spec: NetworkSpec) -> list[tuple[str, int, int]]:
    """``(name, in_width, out_width)`` for the classifier head."""
    names = [f"fc{i}" for i in range(1, len(spec.fc_sizes) + 1)] + ["out"]
    widths = [spec.flatten_width, *spec.fc_sizes, spec.num_classes]
    return [(name, widths[i], widths[i + 1]) for i, name in enumerate(names)]


def infer_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Per-node output shapes (batch dimension omitted), in execution order."""
    out = []
    h, w = spec.input_shape[1:]
    for i, st in enumerate(spec.stages, 1):
        dh, dw = h, w
        for j, conv in enumerate(st.deep, 1):
            dh, dw = conv.out_extent(dh), conv.out_extent(dw)
            out.append((f"stage{i}.deep{j}", (conv.out_channels, dh, dw)))
        if st.ff is not None:
            fh, fw = st.ff.out_extent(h), st.ff.out_extent(w)
            out.append((f"stage{i}.ff", (st.ff.out_channels, fh, fw)))
            out.append((f"stage{i}.concat", (st.out_channels, dh, dw)))
        h, w = dh, dw
    out.append(("flatten", (spec.flatten_width,)))
    for name, _, width in fc_layers(spec):
        out.append((name, (width,)))
    return out


@dataclass
class ParamCount:
    table: list[tuple[str, int]]
    total: int

    @property
    def size_bytes(self) -> int:
        return 4 * self.total

    @property
    def size_mb(self) -> float:
        return self.size_bytes / 1e6


def count_params(spec: NetworkSpec) -> ParamCount:
    table = [(name, conv.param_count) for name, conv in conv_layers(spec)]
    table += [(name, d_in * d_out + d_out) for name, d_in, d_out in fc_layers(spec)]
    return ParamCount(table, sum(c for _, c in table))


def stage_graph(spec: NetworkSpec) -> tuple[list[str], list[tuple[str, str, int]]]:
    """DAG of the network: nodes and ``(src, dst, parameterized_layers)`` edges."""
    nodes = ["input"]
    edges = []
    prev = "input"
    for i, st in enumerate(spec.stages, 1):
        node = f"stage{i}.out"
        nodes.append(node)
        edges.append((prev, node, len(st.deep)))
        if st.ff is not None:
            edges.append((prev, node, 1))
        prev = node
    head = len(spec.fc_sizes) + 1
    nodes.append("loss")
    edges.append((prev, "loss", head))
    return nodes, edges


def gradient_path_depth(spec: NetworkSpec) -> tuple[int, int]:
    """Fewest and most parameterized layers on any input-to-loss path."""
    nodes, edges = stage_graph(spec)
    shortest = {"input": 0}
    longest = {"input": 0}
    for node in nodes[1:]:  # nodes are topologically ordered
        incoming = [(src, wgt) for src, dst, wgt in edges if dst == node]
        shortest[node] = min(shortest[s] + wgt for s, wgt in incoming)
        longest[node] = max(longest[s] + wgt for s, wgt in incoming)
    return shortest["loss"], longest["loss"]


# -- parameters --------------------------------------------------------------

@dataclass
class ParamStore:
    """Named parameter tensors with parallel gradient and momentum buffers.

    Tensor names are ``<layer>.weight`` and ``<layer>.bias``.  A gradient
    entry of ``None`` means "not computed since the last update".
    """
    values: dict[str, np.ndarray]
    grads: dict[str, np.ndarray | None] = field(default_factory=dict)
    momentum: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, v in self.values.items():
            self.grads.setdefault(name, None)
            self.momentum.setdefault(name, np.zeros_like(v))
        if not (self.values.keys() == self.grads.keys() == self.momentum.keys()):
            raise ValueError("parameter, gradient and momentum keys differ")

    def layer(self, name: str) -> LayerParams:
        return LayerParams(self.values[name + ".weight"], self.values.get(name + ".bias"))

    def set_layer_grads(self, name: str, grad_w, grad_b) -> None:
        self.grads[name + ".weight"] = grad_w
        if grad_b is not None:
            self.grads[name + ".bias"] = grad_b

    def zero_grads(self) -> None:
        for name in self.grads:
            self.grads[name] = None

    @property
    def dtype(self):
        return next(iter(self.values.values())).dtype

    def total_elements(self) -> int:
        return sum(v.size for v in self.values.values())

    def astype(self, dtype) -> "ParamStore":
        return ParamStore(
            {k: v.astype(dtype) for k, v in self.values.items()},
            {k: None if g is None else g.astype(dtype) for k, g in self.grads.items()},
            {k: m.astype(dtype) for k, m in self.momentum.items()},
        )

    def copy(self) -> "ParamStore":
        return self.astype(self.dtype)


def init_params(spec: NetworkSpec, seed: int = 0, dtype=np.float32, init: str = "he") -> ParamStore:
    """Gaussian weights with std ``sqrt(2 / fan_in)`` (He) and zero biases.

    ``init="zeros"`` gives an all-zero store.  Layers are filled in
    :func:`conv_layers` then :func:`fc_layers` order from one generator.
    """
    rng = make_rng(seed)
    values = {}
    shapes = [(name, conv.weight_shape) for name, conv in conv_layers(spec)]
    shapes += [(name, (d_out, d_in, 1, 1)) for name, d_in, d_out in fc_layers(spec)]
    for name, wshape in shapes:
        fan_in = int(np.prod(wshape[1:]))
        if init == "he":
            w = rng.standard_normal(wshape) * np.sqrt(2.0 / fan_in)
        elif init == "zeros":
            w = np.zeros(wshape)
        else:
            raise ValueError(f"unknown init {init!r}")
        values[name + ".weight"] = w.astype(dtype)
        values[name + ".bias"] = np.zeros((1, wshape[0], 1, 1), dtype=dtype)
    return ParamStore(values)


# -- execution ---------------------------------------------------------------

@dataclass
class StageTrace:
    s1: np.ndarray
    s2c1: np.ndarray
    s2c2: np.ndarray
    s2c3: np.ndarray
    b2c1: np.ndarray | None
    s2: np.ndarray


@dataclass
class NetworkTrace:
    stages: list[StageTrace]
    head_inputs: list[np.ndarray]  # input to each FC layer, post-relu

    def __iter__(self):
        return iter(self.stages)

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i):
        return self.stages[i]


_FAULTS: set[str] = set()


@contextlib.contextmanager
def inject_backward_fault(kind: str):
    """Negate the backward output of every layer of ``kind`` while active.

    ``kind`` is one of ``"conv"``, ``"fc"``, ``"relu"``, ``"concat"``.  Test
    hook for checking that gradient verification catches broken adjoints.
    """
    if kind not in {"conv", "fc", "relu", "concat"}:
        raise ValueError(f"unknown fault kind {kind!r}")
    _FAULTS.add(kind)
    try:
        yield
    finally:
        _FAULTS.discard(kind)


def _neg(kind: str, *arrays):
    if kind not in _FAULTS:
        return arrays if len(arrays) > 1 else arrays[0]
    out = tuple(None if a is None else -a for a in arrays)
    return out if len(out) > 1 else out[0]


def _stage_forward(prefix: str, st: StageSpec, params: ParamStore, s1: np.ndarray) -> StageTrace:
    acts = []
    h = s1
    for j, conv in enumerate(st.deep, 1):
        h = layers.relu(layers.conv2d_forward(h, conv, params.layer(f"{prefix}.deep{j}")))
        acts.append(h)
    b2c1 = None
    s2 = acts[-1]
    if st.ff is not None:
        b2c1 = layers.relu(layers.conv2d_forward(s1, st.ff, params.layer(f"{prefix}.ff")))
        s2 = concat_channels(acts[-1], b2c1)
    return StageTrace(s1, acts[0], acts[1], acts[2], b2c1, s2)


def forward(spec: NetworkSpec, params: ParamStore, x: np.ndarray, capture: bool = False):
    """Run the network; returns ``(logits, trace)`` with ``trace`` ``None`` unless captured."""
    n, c, h, w = check_rank4(x, "network input")
    if (c, h, w) != tuple(spec.input_shape):
        raise ShapeError(f"input {(c, h, w)} does not match network input {spec.input_shape}")
    x = x.astype(params.dtype, copy=False)
    traces = []
    for i, st in enumerate(spec.stages, 1):
        tr = _stage_forward(f"stage{i}", st, params, x)
        x = tr.s2
        if capture:
            traces.append(tr)
    head_inputs = []
    a = x.reshape(n, -1)
    head = fc_layers(spec)
    for k, (name, _, _) in enumerate(head):
        head_inputs.append(a)
        a = layers.fc_forward(a, params.layer(name))
        if k < len(head) - 1:
            a = layers.relu(a)
    return a, (NetworkTrace(traces, head_inputs) if capture else None)


def backward(spec: NetworkSpec, params: ParamStore, trace: NetworkTrace | None,
             grad_logits: np.ndarray, need_input_grad: bool = False):
    """Write parameter gradients into ``params.grads``.

    Returns the gradient with respect to the network input when
    ``need_input_grad`` is set, otherwise ``None``.
    """
    if trace is None or len(trace.stages) != len(spec.stages):
        raise GradientError("backward needs the trace of a capture=True forward pass")
    head = fc_layers(spec)
    g = grad_logits
    for k in range(len(head) - 1, -1, -1):
        name = head[k][0]
        x_in = trace.head_inputs[k]
        gi, gw, gb = layers.fc_backward(x_in, params.layer(name), g)
        gi, gw, gb = _neg("fc", gi, gw, gb)
        params.set_layer_grads(name, gw, gb)
        g = gi
        if k > 0:
            g = _neg("relu", layers.relu_backward(x_in, g))
    last = trace.stages[-1].s2
    g = g.reshape(last.shape)
    for i in range(len(spec.stages), 0, -1):
        st = spec.stages[i - 1]
        tr = trace.stages[i - 1]
        want_in = i > 1 or need_input_grad
        w = st.branch_width
        if st.ff is not None:
            g_deep = np.ascontiguousarray(g[:, :w])
            g_ff = np.ascontiguousarray(g[:, w:])
            g_deep, g_ff = _neg("concat", g_deep, g_ff)
        else:
            g_deep, g_ff = g, None
        outs = [tr.s2c1, tr.s2c2, tr.s2c3]
        ins = [tr.s1, tr.s2c1, tr.s2c2]
        gd = g_deep
        for j in (3, 2, 1):
            gd = _neg("relu", layers.relu_backward(outs[j - 1], gd))
            gi, gw, gb = layers.conv2d_backward(ins[j - 1], st.deep[j - 1], params.layer(f"stage{i}.deep{j}"),
                                                gd, need_input_grad=(j > 1 or want_in))
            gi, gw, gb = _neg("conv", gi, gw, gb)
            params.set_layer_grads(f"stage{i}.deep{j}", gw, gb)
            gd = gi
        if g_ff is not None:
            gf = _neg("relu", layers.relu_backward(tr.b2c1, g_ff))
            gi, gw, gb = layers.conv2d_backward(tr.s1, st.ff, params.layer(f"stage{i}.ff"), gf,
                                                need_input_grad=want_in)
            gi, gw, gb = _neg("conv", gi, gw, gb)
            params.set_layer_grads(f"stage{i}.ff", gw, gb)
            if want_in:
                gd = gd + gi
        g = gd
    return g if need_input_grad else None


def loss_and_grads(spec: NetworkSpec, params: ParamStore, x: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Forward, softmax cross-entropy, backward.  Returns ``(loss, logits)``."""
    logits, trace = forward(spec, params, x, capture=True)
    loss, grad = layers.softmax_xent(logits, labels)
    backward(spec, params, trace, grad)
    return loss, logits
