import struct

import numpy as np
import pytest

from ffnet import checkpoint, data, graph, trainer
from ffnet.errors import FormatError, IncompatibleSpecError
from ffnet.trainer import TrainConfig


def tiny(stages=2):
    return graph.build_ffnet((3, 10, 10), 2, stages, branch_width=4, fc_sizes=(8, 6))


def test_round_trip_forward_bitwise(tmp_path):
    spec = tiny()
    params = graph.init_params(spec, 3)
    params.momentum["fc1.weight"][:] = 0.25
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, spec, params, iteration=17, seed=2**40 + 12345)
    ck = checkpoint.load_checkpoint(path, spec)
    assert ck.iteration == 17 and ck.seed == 2**40 + 12345
    assert ck.fingerprint == spec.fingerprint()
    assert list(ck.params.values) == list(params.values)
    x = np.random.default_rng(0).standard_normal((3, 3, 10, 10)).astype(np.float32)
    assert graph.forward(spec, ck.params, x)[0].tobytes() == graph.forward(spec, params, x)[0].tobytes()
    assert np.array_equal(ck.params.momentum["fc1.weight"], params.momentum["fc1.weight"])


def test_header_layout(tmp_path):
    spec = tiny()
    params = graph.init_params(spec, 0)
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, spec, params, iteration=5)
    raw = path.read_bytes()
    assert raw[:4] == b"FFNT"
    assert struct.unpack_from("<IQ", raw, 4) == (1, 5)
    assert raw[16:48] == spec.fingerprint()
    (count,) = struct.unpack_from("<I", raw, 48)
    assert count == 2 * len(params.values) + 1
    (nlen,) = struct.unpack_from("<H", raw, 52)
    name = raw[54:54 + nlen].decode()
    assert name == "stage1.deep1.weight"
    rank = raw[54 + nlen]
    dims = struct.unpack_from(f"<{rank}I", raw, 55 + nlen)
    assert dims == (4, 3, 3, 3)
    payload = np.frombuffer(raw, "<f4", count=108, offset=55 + nlen + 4 * rank)
    assert np.array_equal(payload.reshape(dims), params.values[name])
    assert b"stage1.deep1.weight.m" in raw


def test_wrong_magic(tmp_path):
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, tiny(), graph.init_params(tiny(), 0))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(raw)
    with pytest.raises(FormatError):
        checkpoint.load_checkpoint(path)


def test_wrong_version(tmp_path):
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, tiny(), graph.init_params(tiny(), 0))
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 2)
    path.write_bytes(raw)
    with pytest.raises(FormatError):
        checkpoint.load_checkpoint(path)


def test_incompatible_spec(tmp_path):
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, tiny(2), graph.init_params(tiny(2), 0))
    with pytest.raises(IncompatibleSpecError):
        checkpoint.load_checkpoint(path, tiny(1))


def test_truncated(tmp_path):
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, tiny(), graph.init_params(tiny(), 0))
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(OSError):
        checkpoint.load_checkpoint(path)


def test_resume_reproduces_uninterrupted_run(tmp_path):
    spec = tiny()
    d = data.synthetic_dataset("noise", 10, 2, seed=0, image_shape=(3, 10, 10))
    full_cfg = TrainConfig(max_iterations=12, eval_interval=2, batch_size=4, seed=7)
    full = trainer.train(spec, d, full_cfg)

    half = trainer.train(spec, d, TrainConfig(max_iterations=5, eval_interval=2, batch_size=4, seed=7))
    path = tmp_path / "c.ffnt"
    checkpoint.save_checkpoint(path, spec, half.params, half.iteration, seed=7)
    ck = checkpoint.load_checkpoint(path, spec)
    rest = trainer.train(spec, d, full_cfg, ck.params, ck.iteration)
    assert trainer.format_metrics(half.rows + rest.rows) == full.metrics_csv()
    assert all(np.array_equal(rest.params.values[k], full.params.values[k]) for k in full.params.values)
