"""Input fast-forwarding convolutional networks in NumPy."""
from .data import Dataset, load_cifar10, normalize, synthetic_dataset
from .graph import (NetworkSpec, ParamStore, StageSpec, backward, build_ffnet, count_params, forward,
                    gradient_path_depth, infer_shapes, init_params)
from .layers import ConvSpec, LayerParams
from .trainer import TrainConfig, evaluate, sgd_step, train

__version__ = "0.1.0"
