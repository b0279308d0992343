import numpy as np

from ..nn import CausalConv1d, ModuleList, FILM_HIDDEN
from ..tensor import Tensor
from .base import Model, conv_parameter_count, film_parameter_count
from .config import ModelConfig
from .tcn import TCNBlock

__all__ = ["WaveNet"]


class WaveNet(Model):
    """ Feed-forward WaveNet: ``n_blocks`` blocks of ``stacks_per_block`` stacks.

        Dilation restarts at 1 in every block and grows by ``dilation_growth``
        per stack. With ``use_skip`` every stack output is summed into the
        head, otherwise the head reads the last residual output only.
    """
    kind = "wavenet"

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(config)
        channels = config.channels
        self.input = CausalConv1d(1, channels, 1, rng)
        self.stacks = ModuleList([
            TCNBlock(self, channels, channels, d, rng) for d in self.dilations(config)
        ])
        self.output = CausalConv1d(channels, 1, 1, rng)

    @staticmethod
    def dilations(cfg: ModelConfig) -> list:
        return [cfg.dilation_growth ** s
                for _ in range(cfg.n_blocks) for s in range(cfg.stacks_per_block)]

    @property
    def receptive_field(self) -> int:
        return 1 + sum(stack.conv.receptive_field - 1 for stack in self.stacks)

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        x = self.input(x)
        skips = None
        for stack in self.stacks:
            x = stack(x, cond)
            if self.config.use_skip:
                skips = x if skips is None else skips + x
        return self.output(skips if skips is not None else x)

    @staticmethod
    def count_parameters(cfg: ModelConfig) -> int:
        c = cfg.channels
        per_stack = conv_parameter_count(c, c, cfg.kernel_size) \
            + film_parameter_count(cfg.cond_dim, c, FILM_HIDDEN) + c
        stacks = cfg.n_blocks * cfg.stacks_per_block
        return conv_parameter_count(1, c, 1) + stacks * per_stack + conv_parameter_count(c, 1, 1)
