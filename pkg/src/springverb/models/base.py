import logging
from typing import Optional

import numpy as np

from ..nn import FiLM, Module
from ..tensor import Tensor, ShapeError, get_default_dtype
from .config import ModelConfig, ModelException

__all__ = ["Model", "render", "film_parameter_count", "conv_parameter_count"]

logger = logging.getLogger(__name__)


def conv_parameter_count(c_in: int, c_out: int, kernel: int) -> int:
    return c_out * c_in * kernel + c_out


def film_parameter_count(cond_dim: int, channels: int, hidden: int) -> int:
    return cond_dim * hidden + hidden + hidden * 2 * channels + 2 * channels


class Model(Module):
    """ Audio-to-audio map ``[B, 1, T] -> [B, 1, T]`` conditioned on ``[B, cond_dim]``.

        Subclasses build their layers in ``__init__`` from ``config`` and a
        seeded generator, and implement ``_forward``.
    """
    kind: str = ""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        if config.kind != self.kind:
            raise ModelException(f"{type(self).__name__} cannot be built from a {config.kind} config")
        self.config = config

    @property
    def receptive_field(self) -> int:
        raise NotImplementedError

    @property
    def min_length(self) -> int:
        return 1 if self.config.is_recurrent else self.receptive_field

    def make_film(self, channels: int, rng: np.random.Generator) -> FiLM:
        return FiLM(self.config.cond_dim, channels, rng, use_batchnorm=self.config.use_batchnorm)

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> Tensor:
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f"model input must be [B, 1, T], got {x.shape}")
        batch, _, length = x.shape
        if length < self.min_length:
            raise ModelException(
                f"{self.kind} needs at least {self.min_length} samples "
                f"(receptive field), got {length}")
        if cond is None:
            cond = Tensor(np.zeros((batch, self.config.cond_dim)), dtype=x.dtype)
        if cond.shape != (batch, self.config.cond_dim):
            raise ShapeError(f"cond must be [{batch}, {self.config.cond_dim}], got {cond.shape}")
        return self._forward(x, cond)

    def _forward(self, x: Tensor, cond: Tensor) -> Tensor:
        raise NotImplementedError

    def __str__(self) -> str:
        return f"{self.kind}({self.parameter_count()} params)"


def render(model: Model, samples: np.ndarray, cond: Optional[np.ndarray] = None) -> np.ndarray:
    """ Run ``model`` once over a whole mono clip in eval mode.

        Clips shorter than the receptive field are left-padded with zeros and
        the padding is cropped from the result, so length is preserved.
    """
    samples = np.asarray(samples).reshape(-1)
    length = samples.shape[0]
    missing = max(0, model.min_length - length)
    if missing:
        samples = np.concatenate([np.zeros(missing, dtype=samples.dtype), samples])
    dtype = get_default_dtype()
    x = Tensor(samples.reshape(1, 1, -1), dtype=dtype)
    c = None if cond is None else Tensor(np.asarray(cond).reshape(1, -1), dtype=dtype)
    was_training = model.training
    model.eval()
    try:
        y = model(x, c).data.reshape(-1)
    finally:
        model.train(was_training)
    return y[missing:]
