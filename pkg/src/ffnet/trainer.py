"""SGD with momentum, the training loop, evaluation and metrics logging."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import graph, layers
from .data import Dataset, augment, ten_crop
from .errors import GradientError, ShapeError
from .graph import NetworkSpec, ParamStore

log = logging.getLogger(__name__)

METRICS_HEADER = ("iteration", "split", "loss", "accuracy")

# Stream tags mixed into per-iteration generator seeds.
_PERM_STREAM = 1
_AUGMENT_STREAM = 2


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    max_iterations: int = 1000
    eval_interval: int = 100
    seed: int = 0
    lr_schedule: str = "fixed"   # "fixed" or "step"
    lr_gamma: float = 0.1
    lr_step: int = 10000
    augment: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.max_iterations < 0 or self.eval_interval < 1:
            raise ValueError("max_iterations must be >= 0 and eval_interval >= 1")
        if self.lr_schedule not in ("fixed", "step"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")

    def lr_at(self, iteration: int) -> float:
        """Learning rate for the 0-based ``iteration``."""
        if self.lr_schedule == "step":
            return self.lr * self.lr_gamma ** (iteration // self.lr_step)
        return self.lr


@dataclass
class MetricsRow:
    iteration: int
    split: str
    loss: float
    accuracy: float


def sgd_step(params: ParamStore, cfg: TrainConfig, lr: float | None = None) -> ParamStore:
    """``v <- momentum*v - lr*(g + weight_decay*w); w <- w + v``, then clear gradients."""
    missing = [k for k, g in params.grads.items() if g is None]
    if missing:
        raise GradientError(f"no gradient for {len(missing)} parameter(s), e.g. {missing[0]}")
    lr = cfg.lr if lr is None else lr
    dtype = params.dtype
    mom, wd, lr = dtype.type(cfg.momentum), dtype.type(cfg.weight_decay), dtype.type(lr)
    for name, w in params.values.items():
        v = params.momentum[name]
        v *= mom
        v -= lr * (params.grads[name] + wd * w)
        w += v
    params.zero_grads()
    return params


# -- batching ----------------------------------------------------------------

class _BatchSampler:
    """Epoch-wise shuffled batches; the permutation for epoch ``e`` is seeded by ``(seed, e)``.

    Batch ``t`` covers global sample positions ``[t*bs, (t+1)*bs)``, so any
    batch can be reproduced from ``(seed, t)`` alone.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n, self.bs, self.seed = n, batch_size, seed
        self._perms: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            if len(self._perms) > 4:
                self._perms.pop(min(self._perms))
            rng = np.random.default_rng([self.seed, _PERM_STREAM, epoch])
            self._perms[epoch] = rng.permutation(self.n)
        return self._perms[epoch]

    def positions(self, t: int) -> np.ndarray:
        return np.arange(t * self.bs, (t + 1) * self.bs)

    def indices(self, t: int) -> np.ndarray:
        pos = self.positions(t)
        return np.array([self._perm(p // self.n)[p % self.n] for p in pos])


def _augment_batch(images: np.ndarray, positions: np.ndarray, seed: int) -> np.ndarray:
    return np.stack([
        augment(img, np.random.default_rng([seed, _AUGMENT_STREAM, int(p)]))
        for img, p in zip(images, positions)
    ])


# -- evaluation --------------------------------------------------------------

def accuracy_from_probs(probs: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def predict_proba(spec: NetworkSpec, params: ParamStore, images: np.ndarray, ten_crop_mode: bool = False,
                  batch_size: int = 256, pad_mode: str = "constant") -> np.ndarray:
    """Class probabilities; ten-crop mode averages the softmax of the 10 views."""
    out = []
    for start in range(0, len(images), batch_size):
        x = images[start:start + batch_size]
        if ten_crop_mode:
            views = ten_crop(x, mode=pad_mode)
            probs = sum(layers.softmax(graph.forward(spec, params, v)[0]) for v in views) / len(views)
        else:
            probs = layers.softmax(graph.forward(spec, params, x)[0])
        out.append(probs)
    return np.concatenate(out)


def evaluate(spec: NetworkSpec, params: ParamStore, data: Dataset, ten_crop: bool = False,
             batch_size: int = 256) -> tuple[float, float]:
    """Return ``(mean cross-entropy, accuracy)`` over ``data``."""
    probs = predict_proba(spec, params, data.images, ten_crop, batch_size).astype(np.float64)
    p_true = probs[np.arange(len(data)), data.labels]
    loss = float(-np.mean(np.log(np.maximum(p_true, np.finfo(np.float64).tiny)))) + 0.0
    return loss, accuracy_from_probs(probs, data.labels)


# -- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    params: ParamStore
    rows: list[MetricsRow]
    losses: list[float] = field(default_factory=list)   # batch loss of every iteration run
    iteration: int = 0

    def metrics_csv(self) -> str:
        return format_metrics(self.rows)


def format_metrics(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(METRICS_HEADER)
    for r in rows:
        wr.writerow([r.iteration, r.split, repr(float(r.loss)), repr(float(r.accuracy))])
    return buf.getvalue()


def train(spec: NetworkSpec, data: Dataset, cfg: TrainConfig, params: ParamStore | None = None,
          start_iteration: int = 0, val: Dataset | None = None, metrics_path=None) -> TrainResult:
    """Run iterations ``start_iteration+1 .. cfg.max_iterations``.

    One iteration is one batch.  Every ``eval_interval`` iterations a
    ``train`` row (loss and accuracy of that iteration's batch, before the
    update) and, if ``val`` is given, a ``val`` row are logged.  The batch
    order and augmentation depend only on ``(cfg.seed, iteration)``, so a run
    resumed from a checkpoint continues exactly as the uninterrupted one.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.image_shape != tuple(spec.input_shape):
        raise ShapeError(f"dataset images {data.image_shape} do not match network input {spec.input_shape}")
    if params is None:
        params = graph.init_params(spec, cfg.seed)
    sampler = _BatchSampler(len(data), cfg.batch_size, cfg.seed)
    rows: list[MetricsRow] = []
    losses: list[float] = []
    out = open(metrics_path, "w", encoding="utf-8", newline="") if metrics_path else None
    try:
        if out:
            out.write(format_metrics([]))
        for t in range(start_iteration, cfg.max_iterations):
            idx = sampler.indices(t)
            x = data.images[idx]
            if cfg.augment:
                x = _augment_batch(x, sampler.positions(t), cfg.seed)
            y = data.labels[idx]
            loss, logits = graph.loss_and_grads(spec, params, x, y)
            if not np.isfinite(loss):
                raise GradientError(f"non-finite loss at iteration {t + 1}")
            losses.append(loss)
            it = t + 1
            new_rows = []
            if it % cfg.eval_interval == 0:
                new_rows.append(MetricsRow(it, "train", loss, accuracy_from_probs(logits, y)))
            sgd_step(params, cfg, cfg.lr_at(t))
            if new_rows and val is not None:
                vloss, vacc = evaluate(spec, params, val)
                new_rows.append(MetricsRow(it, "val", vloss, vacc))
            for r in new_rows:
                log.info("iter %d %s loss %.6f acc %.4f", r.iteration, r.split, r.loss, r.accuracy)
            rows.extend(new_rows)
            if out and new_rows:
                out.write(format_metrics(new_rows).split("\n", 1)[1])
                out.flush()
    finally:
        if out:
            out.close()
    return TrainResult(params, rows, losses, max(cfg.max_iterations, start_iteration))
