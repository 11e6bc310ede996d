r"""
Training on a synthetic dataset
===============================

Train a two-stage FFNet on a small separable dataset, evaluate it with and
without ten-crop averaging, and resume training from a checkpoint.
"""

import tempfile
from pathlib import Path

from ffnet import checkpoint, data, graph, trainer

shape = (3, 16, 16)
train_set = data.synthetic_dataset("separable", 64, 4, seed=0, image_shape=shape)
train_set, val_set = data.split_validation(train_set, 16)
spec = graph.build_ffnet(shape, num_classes=4, stages=2)
cfg = trainer.TrainConfig(batch_size=16, lr=1e-3, max_iterations=40, eval_interval=10, seed=1)

# %%
# Train for 20 iterations, checkpoint, then continue to 40.
cfg.max_iterations = 20
first = trainer.train(spec, train_set, cfg, val=val_set)
ck_path = Path(tempfile.mkdtemp()) / "ffnet.ckpt"
checkpoint.save_checkpoint(ck_path, spec, first.params, first.iteration, seed=cfg.seed)

cfg.max_iterations = 40
ck = checkpoint.load_checkpoint(ck_path, spec)
second = trainer.train(spec, train_set, cfg, ck.params, ck.iteration, val=val_set)
print(trainer.format_metrics(first.rows + second.rows))

# %%
# Plain versus ten-crop evaluation on the held-out samples.
print("plain    loss %.4f acc %.3f" % trainer.evaluate(spec, second.params, val_set))
print("ten-crop loss %.4f acc %.3f" % trainer.evaluate(spec, second.params, val_set, ten_crop=True))
