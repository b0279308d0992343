from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..tensor import Tensor, ShapeError, broadcast_to, conv1d, custom_op

__all__ = [
    "causal_conv_block", "film_affine", "batch_norm", "prelu", "gated_activation",
    "max_pool1d", "BN_MOMENTUM", "BN_EPS",
]

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def causal_conv_block(x: Tensor, weights: Tensor, dilation: int,
                      bias: Optional[Tensor] = None) -> Tensor:
    """ Length-preserving causal convolution, left pad ``dilation * (K - 1)``. """
    kernel = weights.shape[-1]
    return conv1d(x, weights, bias, dilation=dilation, left_pad=dilation * (kernel - 1))


def film_affine(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """ ``gamma[b, c] * x[b, c, t] + beta[b, c]``. """
    batch, channels = gamma.shape
    scale = broadcast_to(gamma.reshape(batch, channels, 1), x.shape)
    shift = broadcast_to(beta.reshape(batch, channels, 1), x.shape)
    return x * scale + shift


def batch_norm(x: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """ Per-channel normalization over batch and time, no affine part.

        Returns the output and the updated running statistics.
    """
    if training:
        mean = x.mean(axes=(0, 2), keepdims=True)
        centered = x - broadcast_to(mean, x.shape)
        var = centered.square().mean(axes=(0, 2), keepdims=True)
        out = centered / broadcast_to((var + BN_EPS).sqrt(), x.shape)
        count = x.shape[0] * x.shape[2]
        unbiased = var.data.reshape(-1) * (count / max(count - 1, 1))
        running_mean = (1 - BN_MOMENTUM) * running_mean + BN_MOMENTUM * mean.data.reshape(-1)
        running_var = (1 - BN_MOMENTUM) * running_var + BN_MOMENTUM * unbiased
        return out, running_mean, running_var
    scale = 1.0 / np.sqrt(running_var + BN_EPS)
    shift = np.broadcast_to(running_mean.reshape(1, -1, 1), x.shape)
    scale = np.broadcast_to(scale.reshape(1, -1, 1), x.shape)
    out = (x - Tensor(shift, dtype=x.dtype)) * Tensor(scale, dtype=x.dtype)
    return out, running_mean, running_var


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """ ``x`` where non-negative, ``slope * x`` otherwise; one slope per channel. """
    xd, sd = x.data, slope.data
    if sd.size == 1:
        s = sd.reshape(())
    elif x.ndim >= 2 and sd.size == x.shape[1]:
        s = sd.reshape((1, -1) + (1,) * (x.ndim - 2))
    else:
        raise ShapeError(f"prelu slope {slope.shape} does not match channels of {x.shape}")
    negative = xd < 0
    y = np.where(negative, s * xd, xd)

    def _backward(g):
        gx = np.where(negative, s * g, g)
        gs = np.where(negative, g * xd, 0.0)
        if sd.size == 1:
            gs = gs.sum().reshape(sd.shape)
        else:
            axes = tuple(i for i in range(xd.ndim) if i != 1)
            gs = gs.sum(axis=axes).reshape(sd.shape)
        return gx, gs.astype(sd.dtype)

    return custom_op("prelu", (x, slope), y.astype(xd.dtype), _backward)


def gated_activation(x: Tensor) -> Tensor:
    """ ``tanh(first half) * sigmoid(second half)`` along channels. """
    channels = x.shape[1]
    if channels % 2:
        raise ShapeError(f"gated activation needs an even channel count, got {channels}")
    half = channels // 2
    return x[:, :half].tanh() * x[:, half:].sigmoid()


def max_pool1d(x: Tensor, kernel: int, stride: int = 1) -> Tensor:
    """ Causal sliding max over the last axis, ``ceil(T / stride)`` outputs. """
    if kernel < 1 or stride < 1:
        raise ShapeError(f"kernel and stride must be >= 1, got {kernel}, {stride}")
    xd = x.data
    length = xd.shape[-1]
    lead = xd.shape[:-1]
    padded = np.concatenate([np.full(lead + (kernel - 1,), -np.inf, dtype=xd.dtype), xd], axis=-1)
    windows = sliding_window_view(padded, kernel, axis=-1)[..., ::stride, :]
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    positions = idx + (np.arange(idx.shape[-1]) * stride)

    def _backward(g):
        rows = int(np.prod(lead)) if lead else 1
        flat_pos = positions.reshape(rows, -1)
        gpad = np.zeros((rows, padded.shape[-1]), dtype=xd.dtype)
        np.add.at(gpad, (np.arange(rows)[:, None], flat_pos), g.reshape(rows, -1))
        return (gpad[:, kernel - 1:].reshape(lead + (length,)),)

    return custom_op("max_pool1d", (x,), y, _backward)
