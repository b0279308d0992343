from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..tensor import Tensor, get_default_dtype

__all__ = ["Module", "ModuleList", "uniform_parameter"]


def uniform_parameter(rng: np.random.Generator, shape: Tuple[int, ...], bound: float,
                      dtype: Optional[type] = None) -> Tensor:
    """ Trainable tensor drawn from ``U(-bound, bound)``. """
    values = rng.uniform(-bound, bound, size=shape)
    return Tensor(values, requires_grad=True, dtype=dtype or get_default_dtype())


class Module:
    """ Container of named parameters, buffers and child modules.

        Names are the dotted attribute path (``blocks.0.conv.weight``), in
        registration order, and stay stable across builds of one config.
    """
    training: bool

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = True
        object.__setattr__(self, name, np.asarray(value))

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self._buffer_owners())
        missing = (set(params) | set(buffers)) - set(state)
        unexpected = set(state) - set(params) - set(buffers)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, param in params.items():
            param.assign(state[name])
        for name, (owner, attr) in buffers.items():
            current = getattr(owner, attr)
            object.__setattr__(owner, attr, np.asarray(state[name], dtype=current.dtype).reshape(current.shape))

    def _buffer_owners(self, prefix: str = "") -> Iterator[Tuple[str, Tuple["Module", str]]]:
        for name in self._buffers:
            yield prefix + name, (self, name)
        for name, child in self._children.items():
            yield from child._buffer_owners(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules: Optional[List[Module]] = None) -> None:
        super().__init__()
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._children)), module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._children.values())

    def __len__(self) -> int:
        return len(self._children)

    def __getitem__(self, index: int) -> Module:
        return list(self._children.values())[index]
