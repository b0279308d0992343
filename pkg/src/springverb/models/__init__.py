from typing import Dict, Type

import numpy as np

from .config import ModelConfig, ModelException, KINDS, CONV_KINDS, RECURRENT_KINDS
from .base import Model, render
from .tcn import TCN
from .wavenet import WaveNet
from .gcn import GCN
from .recurrent import LSTMModel, GRUModel

__all__ = [
    "ModelConfig", "ModelException", "Model", "render", "KINDS", "CONV_KINDS", "RECURRENT_KINDS",
    "TCN", "WaveNet", "GCN", "LSTMModel", "GRUModel",
    "MODELS", "build", "receptive_field", "parameter_count",
]

MODELS: Dict[str, Type[Model]] = {
    "tcn": TCN,
    "wavenet": WaveNet,
    "gcn": GCN,
    "lstm": LSTMModel,
    "gru": GRUModel,
}


def build(config: ModelConfig, seed: int) -> Model:
    """ Instantiate ``config`` with parameters drawn from ``default_rng(seed)``. """
    return MODELS[config.kind](config, np.random.default_rng(seed))


def receptive_field(config: ModelConfig) -> int:
    if config.is_recurrent:
        raise ModelException(f"{config.kind}: receptive field is unbounded (recurrent)")
    dilations = MODELS[config.kind].dilations(config)
    return 1 + (config.kernel_size - 1) * sum(dilations)


def parameter_count(config: ModelConfig) -> int:
    return MODELS[config.kind].count_parameters(config)
