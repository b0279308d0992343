import numpy as np

from ..nn import CausalConv1d, ModuleList, Module, gated_activation, FILM_HIDDEN
from ..tensor import Tensor, conv1d, pad_left
from .base import Model, conv_parameter_count, film_parameter_count
from .config import ModelConfig

__all__ = ["GCN"]


class GatedLayer(Module):
    """ Unpadded dilated conv to ``2C`` -> FiLM -> tanh/sigmoid gate ->
        left zero-pad -> 1x1 mixing conv -> residual sum.
    """

    def __init__(self, model: Model, dilation: int, rng: np.random.Generator) -> None:
        super().__init__()
        cfg = model.config
        channels = cfg.channels
        self.conv = CausalConv1d(channels, 2 * channels, cfg.kernel_size, rng, dilation=dilation)
        self.film = model.make_film(2 * channels, rng)
        self.mix = CausalConv1d(channels, channels, 1, rng)

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        conv = self.conv
        y = conv1d(x, conv.weight, conv.bias, dilation=conv.dilation)
        y = gated_activation(self.film(y, cond))
        y = pad_left(y, conv.receptive_field - 1)
        return self.mix(y) + x


class GCN(Model):
    kind = "gcn"

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(config)
        self.input = CausalConv1d(1, config.channels, 1, rng)
        self.layers = ModuleList([GatedLayer(self, d, rng) for d in self.dilations(config)])
        self.output = CausalConv1d(config.channels, 1, 1, rng)

    @staticmethod
    def dilations(cfg: ModelConfig) -> list:
        return [cfg.dilation_growth ** s
                for _ in range(cfg.n_blocks) for s in range(cfg.stacks_per_block)]

    @property
    def receptive_field(self) -> int:
        return 1 + sum(layer.conv.receptive_field - 1 for layer in self.layers)

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        x = self.input(x)
        for layer in self.layers:
            x = layer(x, cond)
        return self.output(x)

    @staticmethod
    def count_parameters(cfg: ModelConfig) -> int:
        c = cfg.channels
        per_layer = conv_parameter_count(c, 2 * c, cfg.kernel_size) \
            + film_parameter_count(cfg.cond_dim, 2 * c, FILM_HIDDEN) \
            + conv_parameter_count(c, c, 1)
        layers = cfg.n_blocks * cfg.stacks_per_block
        return conv_parameter_count(1, c, 1) + layers * per_layer + conv_parameter_count(c, 1, 1)
