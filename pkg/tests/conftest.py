import numpy as np
import pytest

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def naive_conv2d(x, weight, bias, stride=1, pad=0):
    """Six nested loops; each output accumulates in (c, ky, kx) order, then adds bias."""
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.empty((n, o, oh, ow), dtype=x.dtype)
    zero = x.dtype.type(0)
    for b in range(n):
        for f in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = zero
                    for ch in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                acc = acc + xp[b, ch, i * stride + ky, j * stride + kx] * weight[f, ch, ky, kx]
                    out[b, f, i, j] = acc + bias[0, f, 0, 0] if bias is not None else acc
    return out


def finite_diff(f, x, eps=1e-4):
    """Central differences of scalar f() w.r.t. every entry of x (mutated in place, restored)."""
    g = np.zeros(x.shape)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * eps)
    return g


def max_rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)).max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
