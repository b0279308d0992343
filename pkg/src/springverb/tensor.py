import logging
from contextlib import contextmanager
from contextvars import ContextVar
from typing import (
    Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union,
)

import numpy as np

from .exceptions import SpringverbException

__all__ = [
    "Tensor", "Tape", "ShapeError", "TapeError",
    "set_default_dtype", "get_default_dtype", "default_dtype",
    "elementwise", "reduce", "matmul", "conv1d", "backward", "custom_op",
    "reshape", "transpose", "broadcast_to", "concat", "pad_left", "clamp_min", "as_tensor",
]

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

LOG_FLOOR = 1e-12

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype: type = np.float32
_active_tape: ContextVar[Optional["Tape"]] = ContextVar("springverb_tape", default=None)


class ShapeError(SpringverbException):
    pass


class TapeError(SpringverbException):
    pass


def set_default_dtype(name: Union[str, type]) -> None:
    """ Select the floating precision of newly created tensors. """
    global _default_dtype
    _default_dtype = _resolve_dtype(name)


def get_default_dtype() -> type:
    return _default_dtype


@contextmanager
def default_dtype(name: Union[str, type]) -> Iterator[type]:
    previous = _default_dtype
    set_default_dtype(name)
    try:
        yield _default_dtype
    finally:
        set_default_dtype(previous)


def _resolve_dtype(name: Union[str, type, np.dtype]) -> type:
    if isinstance(name, str):
        if name not in _DTYPES:
            raise ValueError(f"Unsupported precision {name!r}, expected one of {sorted(_DTYPES)}")
        return _DTYPES[name]
    dtype = np.dtype(name).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"Unsupported precision {np.dtype(name)}")
    return dtype


class Node:
    __slots__ = ("name", "inputs", "output", "backward", "tape")

    def __init__(self, name: str, inputs: Tuple["Tensor", ...],
                 output: "Tensor", backward: BackwardFn, tape: "Tape") -> None:
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.tape = tape


class Tensor:
    """ Dense float array with an optional link into the recording tape.

        Data is read-only once wrapped; only leaves may have their storage
        swapped through ``assign`` (the optimizer does that between steps).
    """
    __slots__ = ("_data", "requires_grad", "grad", "_node", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Union[str, type]] = None,
        name: Optional[str] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data._data
        dtype = _resolve_dtype(dtype) if dtype is not None else (
            data.dtype.type if isinstance(data, np.ndarray)
            and data.dtype.type in (np.float32, np.float64) else _default_dtype)
        arr = np.array(data, dtype=dtype)
        arr.flags.writeable = False
        self._data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data)
        if not data.flags.c_contiguous:
            data = data.copy()
        data.flags.writeable = False
        out._data = data
        out.requires_grad = requires_grad
        out.grad = None
        out._node = None
        out.name = None
        return out

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def dtype(self) -> type:
        return self._data.dtype.type

    @property
    def grad_node(self) -> Optional[Node]:
        return self._node

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        return float(self._data.reshape(-1)[0]) if self._data.size == 1 else float(self._data)

    def detach(self) -> "Tensor":
        return Tensor._from_op(self._data, False)

    def assign(self, data: np.ndarray) -> None:
        """ Replace leaf storage in place, keeping shape and dtype. """
        if self._node is not None:
            raise TapeError("Only leaf tensors can be reassigned")
        data = np.asarray(data, dtype=self._data.dtype)
        if data.shape != self._data.shape:
            raise ShapeError(f"Cannot assign {data.shape} into tensor of shape {self._data.shape}")
        data = data.copy()
        data.flags.writeable = False
        self._data = data

    # arithmetic sugar, everything below routes through the module-level ops
    def __add__(self, other): return elementwise("add", self, other)
    def __radd__(self, other): return elementwise("add", other, self)
    def __sub__(self, other): return elementwise("sub", self, other)
    def __rsub__(self, other): return elementwise("sub", other, self)
    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return elementwise("scale", self, factor=float(other))
        return elementwise("mul", self, other)
    __rmul__ = __mul__
    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return elementwise("scale", self, factor=1.0 / float(other))
        return elementwise("div", self, other)
    def __rtruediv__(self, other): return elementwise("div", other, self)
    def __neg__(self): return elementwise("scale", self, factor=-1.0)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, key): return _getitem(self, key)

    def tanh(self) -> "Tensor": return elementwise("tanh", self)
    def sigmoid(self) -> "Tensor": return elementwise("sigmoid", self)
    def relu(self) -> "Tensor": return elementwise("relu", self)
    def abs(self) -> "Tensor": return elementwise("abs", self)
    def square(self) -> "Tensor": return elementwise("square", self)
    def log(self) -> "Tensor": return elementwise("log", self)
    def exp(self) -> "Tensor": return elementwise("exp", self)
    def sqrt(self) -> "Tensor": return elementwise("sqrt", self)

    def sum(self, axes=None, keepdims: bool = False) -> "Tensor":
        return reduce("sum", self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False) -> "Tensor":
        return reduce("mean", self, axes, keepdims)

    def max(self, axes=None, keepdims: bool = False) -> "Tensor":
        return reduce("max", self, axes, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={np.dtype(self.dtype).name}{flag})"


def as_tensor(value: Union[Tensor, ArrayLike], dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


class Tape:
    """ Define-by-run record of differentiable operations.

        Use as a context manager; every op executed inside the block whose
        inputs require gradients is appended, in execution order.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._alive = True
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    @property
    def alive(self) -> bool:
        return self._alive

    def record(self, name: str, inputs: Tuple[Tensor, ...],
               output: Tensor, backward_fn: BackwardFn) -> None:
        if not self._alive:
            raise TapeError("Cannot record on a released tape")
        node = Node(name, inputs, output, backward_fn, self)
        output._node = node
        self.nodes.append(node)

    def leaves(self) -> List[Tensor]:
        seen, found = set(), []
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and t._node is None and id(t) not in seen:
                    seen.add(id(t))
                    found.append(t)
        return found

    def backward(self, loss: Tensor, leaves: Optional[Sequence[Tensor]] = None,
                 retain: bool = False) -> List[np.ndarray]:
        """ Reverse sweep from ``loss``; sets and returns ``leaf.grad``. """
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self._alive:
            raise TapeError("Tape was released by a previous backward pass")
        if loss._node is None or loss._node.tape is not self:
            raise TapeError("Loss was not recorded on this tape")
        if leaves is None:
            leaves = self.leaves()

        grads = {id(loss): np.ones(loss.shape, dtype=loss.data.dtype)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

        result = []
        for leaf in leaves:
            g = grads.get(id(leaf))
            g = np.zeros(leaf.shape, dtype=leaf.data.dtype) if g is None \
                else np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
            leaf.grad = g
            result.append(g)

        if not retain:
            self.release()
        return result

    def release(self) -> None:
        for node in self.nodes:
            node.output._node = None
        self.nodes = []
        self._alive = False


def backward(tape: Tape, loss: Tensor, leaves: Optional[Sequence[Tensor]] = None,
             retain: bool = False) -> List[np.ndarray]:
    return tape.backward(loss, leaves, retain)


def custom_op(name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              backward_fn: BackwardFn) -> Tensor:
    """ Wrap a precomputed result and register its backward closure.

        ``backward_fn`` receives the output gradient and returns one array
        (or ``None``) per input.
    """
    inputs = tuple(inputs)
    tape = _active_tape.get()
    requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._from_op(out_data, requires_grad)
    if requires_grad:
        tape.record(name, inputs, out, backward_fn)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sqrt_grad(x, y, g):
    positive = y > 0
    return g * positive * 0.5 / np.where(positive, y, 1.0)


# (forward, backward(x, y, g)) for single-input ops
_UNARY = {
    "tanh": (np.tanh, lambda x, y, g: g * (1.0 - y * y)),
    "sigmoid": (_sigmoid, lambda x, y, g: g * y * (1.0 - y)),
    "relu": (lambda x: np.maximum(x, 0), lambda x, y, g: g * (x > 0)),
    "abs": (np.abs, lambda x, y, g: g * np.sign(x)),
    "square": (np.square, lambda x, y, g: 2.0 * g * x),
    "log": (lambda x: np.log(np.maximum(x, LOG_FLOOR)),
            lambda x, y, g: g * (x > LOG_FLOOR) / np.maximum(x, LOG_FLOOR)),
    "exp": (np.exp, lambda x, y, g: g * y),
    "sqrt": (np.sqrt, _sqrt_grad),
}

# (forward, backward(a, b, g) -> (ga, gb)) for two-input ops
_BINARY = {
    "add": (np.add, lambda a, b, g: (g, g)),
    "sub": (np.subtract, lambda a, b, g: (g, -g)),
    "mul": (np.multiply, lambda a, b, g: (g * b, g * a)),
    "div": (np.divide, lambda a, b, g: (g / b, -g * a / (b * b))),
}


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _leading_broadcast(op_kind: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    """ Output shape when each operand only expands missing or size-1 leading dims.

        Any other mismatch, such as ``[2, 1]`` against ``[1, 3]``, is a ShapeError;
        per-channel expansion goes through :func:`broadcast_to`.
    """
    ndim = max(len(a), len(b))
    pa = (1,) * (ndim - len(a)) + tuple(a)
    pb = (1,) * (ndim - len(b)) + tuple(b)
    out = tuple(y if x == 1 else x for x, y in zip(pa, pb))
    for padded in (pa, pb):
        lead = 0
        while lead < ndim and padded[lead] == 1:
            lead += 1
        if padded[lead:] != out[lead:]:
            raise ShapeError(f"{op_kind}: shapes {a} and {b} do not broadcast "
                             f"over leading dims")
    return out


def elementwise(op_kind: str, a: Union[Tensor, ArrayLike],
                b: Optional[Union[Tensor, ArrayLike]] = None, *,
                factor: Optional[float] = None) -> Tensor:
    if op_kind == "scale":
        a = as_tensor(a)
        if factor is None:
            raise ValueError("scale needs a factor")
        return custom_op("scale", (a,), a.data * a.data.dtype.type(factor),
                         lambda g: (g * factor,))

    if op_kind in _UNARY:
        a = as_tensor(a)
        fwd, bwd = _UNARY[op_kind]
        x = a.data
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = fwd(x)
        return custom_op(op_kind, (a,), y, lambda g: (bwd(x, y, g),))

    if op_kind in _BINARY:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        if not isinstance(a, Tensor) and not isinstance(b, Tensor):
            a = as_tensor(a)
        ref = a if isinstance(a, Tensor) else b
        a = as_tensor(a, dtype=ref.dtype)
        b = as_tensor(b, dtype=ref.dtype)
        _leading_broadcast(op_kind, a.shape, b.shape)
        fwd, bwd = _BINARY[op_kind]
        x1, x2 = a.data, b.data
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = fwd(x1, x2)

        def _backward(g):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                g1, g2 = bwd(x1, x2, g)
            return (_unbroadcast(np.broadcast_to(g1, y.shape), x1.shape),
                    _unbroadcast(np.broadcast_to(g2, y.shape), x2.shape))

        return custom_op(op_kind, (a, b), y, _backward)

    raise ValueError(f"Unknown elementwise op {op_kind!r}")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    x = a.data
    return custom_op("clamp_min", (a,), np.maximum(x, floor), lambda g: (g * (x > floor),))


def _normalize_axes(axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise ShapeError(f"axis {axis} out of range for {ndim}-d tensor")
        normalized.append(axis % ndim)
    return tuple(sorted(set(normalized)))


def reduce(op_kind: str, a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    x = a.data
    axes = _normalize_axes(axes, x.ndim)
    if x.size == 0 or any(x.shape[ax] == 0 for ax in axes):
        raise ShapeError(f"empty reduction over axes {axes} of shape {x.shape}")
    kept_shape = tuple(1 if i in axes else n for i, n in enumerate(x.shape))

    if op_kind in ("sum", "mean"):
        y = x.sum(axis=axes, keepdims=keepdims) if op_kind == "sum" \
            else x.mean(axis=axes, keepdims=keepdims)
        count = int(np.prod([x.shape[ax] for ax in axes])) if op_kind == "mean" else 1

        def _backward(g):
            g = np.reshape(g, kept_shape)
            if count != 1:
                g = g / count
            return (np.broadcast_to(g, x.shape).copy(),)

        return custom_op(op_kind, (a,), np.asarray(y), _backward)

    if op_kind == "max":
        rest = [i for i in range(x.ndim) if i not in axes]
        moved = np.transpose(x, rest + list(axes))
        flat = moved.reshape(moved.shape[:len(rest)] + (-1,))
        # np.argmax returns the first maximum, ties route gradient there
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        y = y.reshape(kept_shape) if keepdims else y

        def _backward(g):
            gflat = np.zeros_like(flat)
            np.put_along_axis(gflat, idx[..., None],
                              np.reshape(g, idx.shape)[..., None], axis=-1)
            gmoved = gflat.reshape(moved.shape)
            return (np.transpose(gmoved, np.argsort(rest + list(axes))),)

        return custom_op("max", (a,), np.asarray(y), _backward)

    raise ValueError(f"Unknown reduction {op_kind!r}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    x1, x2 = a.data, b.data
    return custom_op("matmul", (a, b), x1 @ x2, lambda g: (g @ x2.T, x1.T @ g))


def conv1d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None,
           dilation: int = 1, left_pad: int = 0) -> Tensor:
    """ Dilated 1-D convolution over ``[batch, channels, time]``.

        Tap ``k`` of the kernel multiplies the input ``k * dilation`` samples
        before the newest one in its window, so ``left_pad = dilation * (K - 1)``
        gives a strictly causal, length-preserving layer.
    """
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if left_pad < 0:
        raise ShapeError(f"left_pad must be >= 0, got {left_pad}")
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and weight, got {x.shape} and {w.shape}")
    batch, c_in, length = x.shape
    c_out, w_in, kernel = w.shape
    if c_in != w_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape}, weight {w.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias shape {bias.shape} != ({c_out},)")
    out_len = length + left_pad - dilation * (kernel - 1)
    if out_len <= 0:
        raise ShapeError(
            f"input shorter than receptive field: length {length} + pad {left_pad} "
            f"< {dilation * (kernel - 1) + 1}")

    xd, wd = x.data, w.data
    xp = np.pad(xd, ((0, 0), (0, 0), (left_pad, 0))) if left_pad else xd
    offsets = [(kernel - 1 - k) * dilation for k in range(kernel)]
    out = np.zeros((batch, c_out, out_len), dtype=xd.dtype)
    for k, off in enumerate(offsets):
        out += np.matmul(wd[:, :, k], xp[:, :, off:off + out_len])
    if bias is not None:
        out += bias.data[None, :, None]

    def _backward(g):
        gw = np.empty_like(wd)
        gxp = np.zeros_like(xp)
        for k, off in enumerate(offsets):
            window = xp[:, :, off:off + out_len]
            gw[:, :, k] = np.tensordot(g, window, axes=([0, 2], [0, 2]))
            gxp[:, :, off:off + out_len] += np.matmul(wd[:, :, k].T, g)
        gx = gxp[:, :, left_pad:] if left_pad else gxp
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, w, bias) if bias is not None else (x, w)
    return custom_op("conv1d", inputs, out, _backward)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """ Explicit numpy-style expansion; the gradient is summed back to ``a.shape``. """
    x = a.data
    shape = tuple(shape)
    try:
        y = np.broadcast_to(x, shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from None
    return custom_op("broadcast_to", (a,), np.array(y), lambda g: (_unbroadcast(g, x.shape),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    x = a.data
    try:
        y = x.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return custom_op("reshape", (a,), y, lambda g: (np.reshape(g, x.shape),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = a.data
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return custom_op("transpose", (a,), np.transpose(x, axes),
                     lambda g: (np.transpose(g, inverse),))


def _getitem(a: Tensor, key) -> Tensor:
    x = a.data
    y = x[key]

    def _backward(g):
        gx = np.zeros_like(x)
        np.add.at(gx, key, g)
        return (gx,)

    return custom_op("getitem", (a,), np.array(y), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return custom_op("concat", tensors, y, lambda g: tuple(np.split(g, bounds, axis=axis)))


def pad_left(a: Tensor, amount: int, axis: int = -1) -> Tensor:
    """ Zero-pad ``amount`` samples at the start of ``axis``. """
    x = a.data
    axis = axis % x.ndim
    if amount == 0:
        return a
    widths = [(0, 0)] * x.ndim
    widths[axis] = (amount, 0)
    index = [slice(None)] * x.ndim
    index[axis] = slice(amount, None)
    return custom_op("pad_left", (a,), np.pad(x, widths), lambda g: (g[tuple(index)],))
