"""Forward and backward passes for convolution, ReLU, fully-connected and
softmax cross-entropy layers.

Convolution is cross-correlation (no kernel flip) computed by im2col
followed by a matrix multiply.  Two multiply kernels exist:

``"blas"``
    ``numpy.matmul``; fast, summation order left to the BLAS library.
``"ordered"``
    accumulates the im2col products one patch element at a time in
    ``(channel, row, col)`` order, giving the same rounding as a plain
    nested loop.  Slow; used to cross-check the blocked path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelError, ShapeError
from .tensor import check_rank4


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    in_channels: int
    out_channels: int
    stride: int = 1
    pad: int = 0
    has_bias: bool = True

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ValueError(f"invalid conv geometry {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"invalid channel counts {self}")

    def out_extent(self, n: int) -> int:
        """Output extent along one spatial axis; may be <= 0 for bad inputs."""
        return (n + 2 * self.pad - self.kernel) // self.stride + 1

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    @property
    def param_count(self) -> int:
        k = self.kernel
        return k * k * self.in_channels * self.out_channels + (self.out_channels if self.has_bias else 0)


@dataclass
class LayerParams:
    """Weights ``(out, in, k, k)`` (``k = 1`` for FC) and bias ``(1, out, 1, 1)``."""
    weight: np.ndarray
    bias: np.ndarray | None = None


# -- im2col -----------------------------------------------------------------

def im2col(x: np.ndarray, kernel: int, stride: int = 1, pad: int = 0) -> tuple[np.ndarray, int, int]:
    """Unroll patches into the columns of a ``(c*k*k, n*oh*ow)`` matrix.

    Rows are ordered ``(c, ky, kx)``, matching ``weight.reshape(out, -1)``;
    columns are ordered ``(n, oy, ox)``.
    """
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kernel * kernel, n * oh * ow)
    return cols, oh, ow


def col2im(cols: np.ndarray, x_shape, kernel: int, stride: int, pad: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back into an image."""
    n, c, h, w = x_shape
    patches = cols.reshape(c, kernel, kernel, n, oh, ow)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ky in range(kernel):
        y_end = ky + stride * (oh - 1) + 1
        for kx in range(kernel):
            x_end = kx + stride * (ow - 1) + 1
            out[:, :, ky:y_end:stride, kx:x_end:stride] += patches[:, ky, kx].transpose(1, 0, 2, 3)
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


def _ordered_matmul(wmat: np.ndarray, cols: np.ndarray) -> np.ndarray:
    out = np.zeros((wmat.shape[0], cols.shape[1]), dtype=cols.dtype)
    for k in range(cols.shape[0]):
        out += wmat[:, k, None] * cols[None, k, :]
    return out


def _to_nchw(mat: np.ndarray, n: int, oh: int, ow: int) -> np.ndarray:
    """``(channels, n*oh*ow)`` -> ``(n, channels, oh, ow)``."""
    return np.ascontiguousarray(mat.reshape(-1, n, oh, ow).transpose(1, 0, 2, 3))


def _from_nchw(t: np.ndarray) -> np.ndarray:
    return t.transpose(1, 0, 2, 3).reshape(t.shape[1], -1)


# -- convolution -------------------------------------------------------------

def conv_output_hw(spec: ConvSpec, h: int, w: int) -> tuple[int, int]:
    oh, ow = spec.out_extent(h), spec.out_extent(w)
    if oh < 1 or ow < 1:
        raise ShapeError(f"{spec.kernel}x{spec.kernel} conv (s={spec.stride}, p={spec.pad}) "
                         f"on {h}x{w} gives empty output {oh}x{ow}")
    return oh, ow


def conv2d_forward(x: np.ndarray, spec: ConvSpec, params: LayerParams, kernel: str = "blas") -> np.ndarray:
    n, c, h, w = check_rank4(x, "conv input")
    if c != spec.in_channels:
        raise ShapeError(f"conv expects {spec.in_channels} input channels, got {c}")
    if params.weight.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {params.weight.shape} != {spec.weight_shape}")
    conv_output_hw(spec, h, w)
    cols, oh, ow = im2col(x, spec.kernel, spec.stride, spec.pad)
    wmat = params.weight.reshape(spec.out_channels, -1)
    if kernel == "blas":
        out = wmat @ cols
    elif kernel == "ordered":
        out = _ordered_matmul(wmat, cols)
    else:
        raise ValueError(f"unknown matmul kernel {kernel!r}")
    if spec.has_bias:
        out += params.bias.reshape(-1, 1)
    return _to_nchw(out, n, oh, ow)


def conv2d_backward(x: np.ndarray, spec: ConvSpec, params: LayerParams, grad_out: np.ndarray,
                    need_input_grad: bool = True):
    """Return ``(grad_in, grad_w, grad_b)`` for a convolution applied to ``x``.

    ``grad_in`` is ``None`` when ``need_input_grad`` is false; ``grad_b`` is
    ``None`` for bias-free layers.
    """
    n, c, h, w = check_rank4(x, "conv input")
    oh, ow = conv_output_hw(spec, h, w)
    if grad_out.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output "
                         f"{(n, spec.out_channels, oh, ow)}")
    cols, _, _ = im2col(x, spec.kernel, spec.stride, spec.pad)
    gmat = _from_nchw(grad_out)
    grad_w = (gmat @ cols.T).reshape(spec.weight_shape)
    grad_b = gmat.sum(axis=1).reshape(1, -1, 1, 1) if spec.has_bias else None
    grad_in = None
    if need_input_grad:
        if spec.pad <= spec.kernel - 1:
            grad_in = _conv_transpose(grad_out, params.weight, spec, h, w)
        else:
            gcols = params.weight.reshape(spec.out_channels, -1).T @ gmat
            grad_in = col2im(gcols, x.shape, spec.kernel, spec.stride, spec.pad, oh, ow)
    return grad_in, grad_w, grad_b


def _conv_transpose(grad_out: np.ndarray, weight: np.ndarray, spec: ConvSpec, h: int, w: int) -> np.ndarray:
    """Input gradient as a full correlation of the (dilated) output gradient
    with the flipped, channel-swapped kernel.  Requires ``pad <= kernel - 1``."""
    n, o, oh, ow = grad_out.shape
    k, s = spec.kernel, spec.stride
    lead = k - 1 - spec.pad
    # rows/cols of the padded input never covered by a window
    tail_h = h + 2 * spec.pad - k - (oh - 1) * s
    tail_w = w + 2 * spec.pad - k - (ow - 1) * s
    g = np.zeros((n, o, lead + (oh - 1) * s + 1 + lead + tail_h, lead + (ow - 1) * s + 1 + lead + tail_w),
                 dtype=grad_out.dtype)
    g[:, :, lead:lead + (oh - 1) * s + 1:s, lead:lead + (ow - 1) * s + 1:s] = grad_out
    cols, gh, gw = im2col(g, k)
    wflip = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(spec.in_channels, -1)
    return _to_nchw(wflip @ cols, n, gh, gw)


# -- relu --------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where ``x > 0``; the subgradient at 0 is taken as 0.

    ``x`` may be either the ReLU input or its output: both have the same
    positive support.
    """
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu grad shape {grad_out.shape} != input {x.shape}")
    return np.where(x > 0, grad_out, np.zeros((), dtype=grad_out.dtype))


# -- fully connected ---------------------------------------------------------

def _as_rows(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def fc_forward(x: np.ndarray, params: LayerParams) -> np.ndarray:
    """Affine map of each batch row; ``x`` is flattened to ``(n, d)``."""
    rows = _as_rows(x)
    out_dim, in_dim = params.weight.shape[:2]
    if rows.shape[1] != in_dim:
        raise ShapeError(f"fc expects input width {in_dim}, got {rows.shape[1]}")
    y = rows @ params.weight.reshape(out_dim, in_dim).T
    if params.bias is not None:
        y += params.bias.reshape(1, out_dim)
    return y


def fc_backward(x: np.ndarray, params: LayerParams, grad_out: np.ndarray, need_input_grad: bool = True):
    """Return ``(grad_in, grad_w, grad_b)``; ``grad_in`` has ``x``'s shape."""
    rows = _as_rows(x)
    out_dim, in_dim = params.weight.shape[:2]
    if grad_out.shape != (rows.shape[0], out_dim):
        raise ShapeError(f"fc grad_out shape {grad_out.shape} != {(rows.shape[0], out_dim)}")
    grad_w = (grad_out.T @ rows).reshape(params.weight.shape)
    grad_b = grad_out.sum(axis=0).reshape(1, out_dim, 1, 1) if params.bias is not None else None
    grad_in = None
    if need_input_grad:
        grad_in = (grad_out @ params.weight.reshape(out_dim, in_dim)).reshape(x.shape)
    return grad_in, grad_w, grad_b


# -- loss --------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient ``(softmax - onehot) / n``."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (n, classes), got {logits.shape}")
    n, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelError(f"labels must lie in [0, {classes})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    rows = np.arange(n)
    loss = float(-log_p[rows, labels].mean())
    grad = np.exp(log_p)
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)
