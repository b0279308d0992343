import numpy as np

from ..nn import CausalConv1d, GRU, LSTM, max_pool1d, FILM_HIDDEN
from ..tensor import Tensor, broadcast_to
from .base import Model, conv_parameter_count, film_parameter_count
from .config import ModelConfig, ModelException

__all__ = ["LSTMModel", "GRUModel"]


def _hold(x: Tensor, factor: int, length: int) -> Tensor:
    """ Repeat every frame ``factor`` times and crop to ``length``. """
    if factor == 1:
        return x
    batch, channels, frames = x.shape
    held = broadcast_to(x.reshape(batch, channels, frames, 1), (batch, channels, frames, factor))
    held = held.reshape(batch, channels, frames * factor)
    return held[:, :, :length]


class RecurrentModel(Model):
    """ Causal conv -> ReLU -> causal max pool -> recurrent layer -> FiLM -> 1x1 conv.

        A strided pool is brought back to audio rate by holding each frame
        for ``pool_stride`` samples.
    """
    cell_type: type

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__(config)
        self.front = CausalConv1d(1, config.channels, config.kernel_size, rng)
        self.rnn = self.cell_type(config.channels, config.hidden_size, rng)
        self.film = self.make_film(config.hidden_size, rng)
        self.output = CausalConv1d(config.hidden_size, 1, 1, rng)

    @property
    def receptive_field(self) -> int:
        raise ModelException("receptive field is unbounded (recurrent)")

    def _features(self, x: Tensor, cond: Tensor) -> Tensor:
        cfg = self.config
        y = max_pool1d(self.front(x).relu(), cfg.pool_kernel, cfg.pool_stride)
        y = self.rnn(y)[0]
        y = _hold(self.film(y, cond), cfg.pool_stride, x.shape[-1])
        return self.output(y)

    @classmethod
    def count_parameters(cls, cfg: ModelConfig) -> int:
        c, h = cfg.channels, cfg.hidden_size
        return conv_parameter_count(1, c, cfg.kernel_size) \
            + cls.cell_type.gates * h * (c + h + 1) \
            + film_parameter_count(cfg.cond_dim, h, FILM_HIDDEN) \
            + conv_parameter_count(h, 1, 1)


class LSTMModel(RecurrentModel):
    kind = "lstm"
    cell_type = LSTM

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        y = self._features(x, cond)
        return y + x if self.config.use_skip else y


class GRUModel(RecurrentModel):
    kind = "gru"
    cell_type = GRU

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        return self._features(x, cond).tanh()
