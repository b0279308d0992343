import math
from typing import Optional

import numpy as np

from ..tensor import Tensor, ShapeError, conv1d, get_default_dtype, matmul
from .functional import batch_norm, causal_conv_block, film_affine, prelu
from .module import Module, uniform_parameter

__all__ = ["CausalConv1d", "Dense", "FiLM", "PReLU", "BatchNorm1d", "FILM_HIDDEN"]

FILM_HIDDEN = 16


class CausalConv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, dilation: int = 1, bias: bool = True) -> None:
        super().__init__()
        if min(in_channels, out_channels, kernel_size, dilation) < 1:
            raise ShapeError(
                f"conv dims must be positive: in={in_channels} out={out_channels} "
                f"kernel={kernel_size} dilation={dilation}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        bound = 1.0 / math.sqrt(in_channels * kernel_size)
        self.weight = uniform_parameter(rng, (out_channels, in_channels, kernel_size), bound)
        self.bias = uniform_parameter(rng, (out_channels,), bound) if bias else None

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * self.dilation

    def forward(self, x: Tensor) -> Tensor:
        if self.kernel_size == 1:
            return conv1d(x, self.weight, self.bias)
        return causal_conv_block(x, self.weight, self.dilation, self.bias)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.weight = uniform_parameter(rng, (out_features, in_features), bound)
        self.bias = uniform_parameter(rng, (out_features,), bound)

    def forward(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight.T) + self.bias


class BatchNorm1d(Module):
    """ Affine-free batch norm; FiLM supplies scale and shift. """

    def __init__(self, channels: int) -> None:
        super().__init__()
        dtype = get_default_dtype()
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        out, mean, var = batch_norm(x, self.running_mean, self.running_var, self.training)
        if self.training:
            self.running_mean = mean.astype(self.running_mean.dtype)
            self.running_var = var.astype(self.running_var.dtype)
        return out


class FiLM(Module):
    """ Feature-wise affine modulation generated from the conditioning vector.

        Generator: ``cond -> Dense(16) -> tanh -> Dense(2C)``, first ``C``
        outputs are the per-channel scales, the last ``C`` the shifts.
    """

    def __init__(self, cond_dim: int, channels: int, rng: np.random.Generator,
                 use_batchnorm: bool = False) -> None:
        super().__init__()
        self.cond_dim = cond_dim
        self.channels = channels
        self.generator_in = Dense(cond_dim, FILM_HIDDEN, rng)
        self.generator_out = Dense(FILM_HIDDEN, 2 * channels, rng)
        self.norm: Optional[BatchNorm1d] = BatchNorm1d(channels) if use_batchnorm else None

    def coefficients(self, cond: Tensor) -> tuple:
        if cond.ndim != 2 or cond.shape[1] != self.cond_dim:
            raise ShapeError(f"FiLM expects cond of shape [B, {self.cond_dim}], got {cond.shape}")
        params = self.generator_out(self.generator_in(cond).tanh())
        return params[:, :self.channels], params[:, self.channels:]

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeError(f"FiLM built for {self.channels} channels, got input {x.shape}")
        gamma, beta = self.coefficients(cond)
        if self.norm is not None:
            x = self.norm(x)
        return film_affine(x, gamma, beta)


class PReLU(Module):
    def __init__(self, channels: int, init: float = 0.25) -> None:
        super().__init__()
        self.weight = Tensor(np.full(channels, init), requires_grad=True, dtype=get_default_dtype())

    def forward(self, x: Tensor) -> Tensor:
        return prelu(x, self.weight)
