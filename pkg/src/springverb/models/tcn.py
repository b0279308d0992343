import numpy as np

from ..nn import CausalConv1d, ModuleList, Module, PReLU, FILM_HIDDEN
from ..tensor import Tensor
from .base import Model, conv_parameter_count, film_parameter_count
from .config import ModelConfig

__all__ = ["TCN"]


class TCNBlock(Module):
    """ Dilated causal conv -> FiLM -> PReLU, plus the residual input. """

    def __init__(self, model: Model, in_channels: int, channels: int, dilation: int,
                 rng: np.random.Generator) -> None:
        super().__init__()
        cfg = model.config
        self.conv = CausalConv1d(in_channels, channels, cfg.kernel_size, rng, dilation=dilation)
        self.film = model.make_film(channels, rng)
        self.act = PReLU(channels)
        self.residual = CausalConv1d(in_channels, channels, 1, rng) \
            if in_channels != channels else None

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        y = self.act(self.film(self.conv(x), cond))
        skip = self.residual(x) if self.residual is not None else x
        return y + skip


class TCN(Model):
    kind = "tcn"

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(config)
        channels = config.channels
        self.blocks = ModuleList([
            TCNBlock(self, 1 if i == 0 else channels, channels, config.dilation_growth ** i, rng)
            for i in range(config.n_blocks)
        ])
        self.output = CausalConv1d(channels, 1, 1, rng)

    @property
    def receptive_field(self) -> int:
        return 1 + sum(block.conv.receptive_field - 1 for block in self.blocks)

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x, cond)
        return self.output(x)

    @staticmethod
    def count_parameters(cfg: ModelConfig) -> int:
        c = cfg.channels
        per_block = conv_parameter_count(c, c, cfg.kernel_size) \
            + film_parameter_count(cfg.cond_dim, c, FILM_HIDDEN) + c
        first = conv_parameter_count(1, c, cfg.kernel_size) \
            + film_parameter_count(cfg.cond_dim, c, FILM_HIDDEN) + c
        if c != 1:
            first += conv_parameter_count(1, c, 1)
        return first + (cfg.n_blocks - 1) * per_block + conv_parameter_count(c, 1, 1)

    @staticmethod
    def dilations(cfg: ModelConfig) -> list:
        return [cfg.dilation_growth ** i for i in range(cfg.n_blocks)]
