import math
from typing import Optional, Tuple

import numpy as np

from ..tensor import Tensor, ShapeError, custom_op
from .module import Module, uniform_parameter

__all__ = ["LSTM", "GRU", "lstm_forward", "gru_forward"]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _initial_state(state: Optional[Tensor], batch: int, hidden: int, dtype) -> Tensor:
    if state is None:
        return Tensor(np.zeros((batch, hidden), dtype=dtype))
    if state.shape != (batch, hidden):
        raise ShapeError(f"initial state must be [{batch}, {hidden}], got {state.shape}")
    return state


def _check_input(x: Tensor, w_ih: Tensor, gates: int) -> Tuple[int, int, int]:
    if x.ndim != 3:
        raise ShapeError(f"recurrent input must be [B, C, T], got {x.shape}")
    hidden = w_ih.shape[0] // gates
    if w_ih.shape[1] != x.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, cell expects {w_ih.shape[1]}")
    return x.shape[0], hidden, x.shape[2]


def lstm_forward(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor,
                 h0: Optional[Tensor] = None, c0: Optional[Tensor] = None
                 ) -> Tuple[Tensor, Tensor, Tensor]:
    """ Unrolled LSTM over ``[B, C, T]``; gate blocks ordered (i, f, g, o).

        Returns the hidden sequence ``[B, H, T]`` and the final ``h``, ``c``.
        The whole unroll is one tape node whose backward runs full BPTT.
    """
    batch, hidden, steps = _check_input(x, w_ih, 4)
    h0 = _initial_state(h0, batch, hidden, x.dtype)
    c0 = _initial_state(c0, batch, hidden, x.dtype)

    xs = np.transpose(x.data, (2, 0, 1))
    W, U, b = w_ih.data, w_hh.data, bias.data
    projected = np.matmul(xs, W.T) + b
    H = hidden
    I, F, G, O, C, TC, Hs = (np.empty((steps, batch, H), dtype=projected.dtype) for _ in range(7))
    h, c = h0.data, c0.data
    for t in range(steps):
        a = projected[t] + h @ U.T
        I[t] = _sigmoid(a[:, :H])
        F[t] = _sigmoid(a[:, H:2 * H])
        G[t] = np.tanh(a[:, 2 * H:3 * H])
        O[t] = _sigmoid(a[:, 3 * H:])
        c = F[t] * c + I[t] * G[t]
        C[t] = c
        TC[t] = np.tanh(c)
        h = O[t] * TC[t]
        Hs[t] = h
    packed = np.concatenate([Hs, C], axis=2).transpose(1, 2, 0)

    def _backward(g):
        gh = np.transpose(g[:, :H, :], (2, 0, 1))
        gc = np.transpose(g[:, H:, :], (2, 0, 1))
        dh_next = np.zeros((batch, H), dtype=g.dtype)
        dc_next = np.zeros((batch, H), dtype=g.dtype)
        da_all = np.empty((steps, batch, 4 * H), dtype=g.dtype)
        for t in reversed(range(steps)):
            dh = gh[t] + dh_next
            dc = gc[t] + dc_next + dh * O[t] * (1.0 - TC[t] * TC[t])
            c_prev = C[t - 1] if t > 0 else c0.data
            da_all[t, :, :H] = dc * G[t] * I[t] * (1.0 - I[t])
            da_all[t, :, H:2 * H] = dc * c_prev * F[t] * (1.0 - F[t])
            da_all[t, :, 2 * H:3 * H] = dc * I[t] * (1.0 - G[t] * G[t])
            da_all[t, :, 3 * H:] = dh * TC[t] * O[t] * (1.0 - O[t])
            dh_next = da_all[t] @ U
            dc_next = dc * F[t]
        h_prev = np.concatenate([h0.data[None], Hs[:-1]], axis=0)
        dW = np.tensordot(da_all, xs, axes=([0, 1], [0, 1]))
        dU = np.tensordot(da_all, h_prev, axes=([0, 1], [0, 1]))
        db = da_all.sum(axis=(0, 1))
        dx = np.transpose(np.matmul(da_all, W), (1, 2, 0))
        return dx, dW, dU, db, dh_next, dc_next

    out = custom_op("lstm", (x, w_ih, w_hh, bias, h0, c0), packed, _backward)
    return out[:, :H, :], out[:, :H, -1], out[:, H:, -1]


def gru_forward(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor,
                h0: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    """ Unrolled GRU; gate blocks ordered (z, r, n), ``n = tanh(Wx + r*(Uh) + b)``. """
    batch, hidden, steps = _check_input(x, w_ih, 3)
    h0 = _initial_state(h0, batch, hidden, x.dtype)

    xs = np.transpose(x.data, (2, 0, 1))
    W, U, b = w_ih.data, w_hh.data, bias.data
    projected = np.matmul(xs, W.T) + b
    H = hidden
    Z, R, N, HN, Hs = (np.empty((steps, batch, H), dtype=projected.dtype) for _ in range(5))
    h = h0.data
    for t in range(steps):
        uh = h @ U.T
        Z[t] = _sigmoid(projected[t, :, :H] + uh[:, :H])
        R[t] = _sigmoid(projected[t, :, H:2 * H] + uh[:, H:2 * H])
        HN[t] = uh[:, 2 * H:]
        N[t] = np.tanh(projected[t, :, 2 * H:] + R[t] * HN[t])
        h = (1.0 - Z[t]) * N[t] + Z[t] * h
        Hs[t] = h
    h_prev = np.concatenate([h0.data[None], Hs[:-1]], axis=0)

    def _backward(g):
        gh = np.transpose(g, (2, 0, 1))
        dh_next = np.zeros((batch, H), dtype=g.dtype)
        dx_gates = np.empty((steps, batch, 3 * H), dtype=g.dtype)
        dh_gates = np.empty((steps, batch, 3 * H), dtype=g.dtype)
        for t in reversed(range(steps)):
            dh = gh[t] + dh_next
            dn = dh * (1.0 - Z[t])
            dz = dh * (h_prev[t] - N[t])
            dan = dn * (1.0 - N[t] * N[t])
            daz = dz * Z[t] * (1.0 - Z[t])
            dar = dan * HN[t] * R[t] * (1.0 - R[t])
            dx_gates[t, :, :H] = daz
            dx_gates[t, :, H:2 * H] = dar
            dx_gates[t, :, 2 * H:] = dan
            dh_gates[t, :, :H] = daz
            dh_gates[t, :, H:2 * H] = dar
            dh_gates[t, :, 2 * H:] = dan * R[t]
            dh_next = dh * Z[t] + dh_gates[t] @ U
        dW = np.tensordot(dx_gates, xs, axes=([0, 1], [0, 1]))
        dU = np.tensordot(dh_gates, h_prev, axes=([0, 1], [0, 1]))
        db = dx_gates.sum(axis=(0, 1))
        dx = np.transpose(np.matmul(dx_gates, W), (1, 2, 0))
        return dx, dW, dU, db, dh_next

    out = custom_op("gru", (x, w_ih, w_hh, bias, h0), Hs.transpose(1, 2, 0), _backward)
    return out, out[:, :, -1]


class _RecurrentCell(Module):
    gates: int

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator) -> None:
        super().__init__()
        if input_size < 1 or hidden_size < 1:
            raise ShapeError(f"recurrent dims must be positive: {input_size}, {hidden_size}")
        self.input_size = input_size
        self.hidden_size = hidden_size
        bound = 1.0 / math.sqrt(hidden_size)
        g = self.gates * hidden_size
        self.weight_ih = uniform_parameter(rng, (g, input_size), bound)
        self.weight_hh = uniform_parameter(rng, (g, hidden_size), bound)
        self.bias = uniform_parameter(rng, (g,), bound)


class LSTM(_RecurrentCell):
    gates = 4

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator) -> None:
        super().__init__(input_size, hidden_size, rng)
        bias = self.bias.numpy()
        bias[hidden_size:2 * hidden_size] = 1.0
        self.bias.assign(bias)

    def forward(self, x: Tensor, h0: Optional[Tensor] = None,
                c0: Optional[Tensor] = None) -> Tuple[Tensor, Tensor, Tensor]:
        return lstm_forward(x, self.weight_ih, self.weight_hh, self.bias, h0, c0)


class GRU(_RecurrentCell):
    gates = 3

    def forward(self, x: Tensor, h0: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        return gru_forward(x, self.weight_ih, self.weight_hh, self.bias, h0)
