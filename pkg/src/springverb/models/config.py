from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict

from ..exceptions import SpringverbException

__all__ = ["ModelConfig", "ModelException", "KINDS", "CONV_KINDS", "RECURRENT_KINDS"]

CONV_KINDS = ("tcn", "wavenet", "gcn")
RECURRENT_KINDS = ("lstm", "gru")
KINDS = CONV_KINDS + RECURRENT_KINDS


class ModelException(SpringverbException):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    channels: int = 16
    kernel_size: int = 3
    dilation_growth: int = 2
    n_blocks: int = 2
    stacks_per_block: int = 1
    hidden_size: int = 64
    cond_dim: int = 2
    sample_rate: int = 16000
    use_batchnorm: bool = False
    use_skip: bool = False
    pool_kernel: int = 2
    pool_stride: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        sizes = ("channels", "kernel_size", "dilation_growth", "n_blocks", "stacks_per_block",
                 "hidden_size", "cond_dim", "sample_rate", "pool_kernel", "pool_stride")
        for name in sizes:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ModelException(f"{name} must be a positive integer, got {value!r}")

    @classmethod
    def default(cls, kind: str, **overrides: Any) -> "ModelConfig":
        """ Default topology of ``kind``, optionally adjusted by ``overrides``. """
        base = cls(kind=kind, **_DEFAULTS[normalize_kind(kind)])
        return replace(base, **overrides) if overrides else base

    @property
    def is_recurrent(self) -> bool:
        return self.kind in RECURRENT_KINDS

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ModelException(f"Unknown model config keys: {', '.join(unknown)}")
        if "kind" not in data:
            raise ModelException("Model config needs a 'kind'")
        return cls(**data)


def normalize_kind(kind: str) -> str:
    name = str(kind).lower()
    if name not in KINDS:
        raise ModelException(f"Unknown model kind {kind!r}, expected one of: {', '.join(KINDS)}")
    return name


_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "tcn": dict(channels=32, kernel_size=3, dilation_growth=2, n_blocks=8),
    "wavenet": dict(channels=16, kernel_size=3, dilation_growth=2, n_blocks=2,
                    stacks_per_block=4, use_skip=True),
    "gcn": dict(channels=16, kernel_size=3, dilation_growth=2, n_blocks=2, stacks_per_block=4),
    "lstm": dict(channels=32, kernel_size=3, hidden_size=64, use_skip=True),
    "gru": dict(channels=32, kernel_size=3, hidden_size=64),
}
