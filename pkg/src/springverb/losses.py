from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from .spectral import MAGNITUDE_FLOOR, SpectralError, StftConfig, stft_magnitude
from .tensor import Tensor, ShapeError, as_tensor, clamp_min, custom_op

__all__ = [
    "MrstftConfig", "smooth_l1", "spectral_convergence", "log_magnitude",
    "mrstft", "combined_loss", "DEFAULT_RESOLUTIONS",
]

DEFAULT_RESOLUTIONS = (512, 1024, 2048)


def _default_resolutions() -> Tuple[StftConfig, ...]:
    return tuple(StftConfig.from_fft(n) for n in DEFAULT_RESOLUTIONS)


@dataclass(frozen=True)
class MrstftConfig:
    resolutions: Tuple[StftConfig, ...] = field(default_factory=_default_resolutions)
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not self.resolutions:
            raise SpectralError("MRSTFT needs at least one resolution")
        if self.alpha < 0:
            raise SpectralError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def min_length(self) -> int:
        return max(r.win_length for r in self.resolutions)

    def to_dict(self) -> Dict[str, Any]:
        return {"resolutions": [r.to_dict() for r in self.resolutions], "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MrstftConfig":
        unknown = sorted(set(data) - {"resolutions", "alpha"})
        if unknown:
            raise SpectralError(f"Unknown loss config keys: {', '.join(unknown)}")
        resolutions = data.get("resolutions")
        if resolutions is None:
            res = _default_resolutions()
        else:
            res = tuple(StftConfig.from_fft(r) if isinstance(r, int) else StftConfig(**r)
                        for r in resolutions)
        return cls(resolutions=res, alpha=float(data.get("alpha", 1.0)))


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: prediction {a.shape} and target {b.shape} differ")


def smooth_l1(pred: Tensor, target: Tensor, beta: float = 1.0) -> Tensor:
    """ Huber-style loss: quadratic below ``beta``, linear above, mean over elements. """
    pred, target = as_tensor(pred), as_tensor(target, dtype=pred.dtype)
    _same_shape(pred, target, "smooth_l1")
    d = pred.data - target.data
    ad = np.abs(d)
    quadratic = ad < beta
    value = np.where(quadratic, 0.5 * d * d / beta, ad - 0.5 * beta).mean()
    n = d.size

    def _backward(g):
        gd = np.where(quadratic, d / beta, np.sign(d)) * (g / n)
        return gd, -gd

    return custom_op("smooth_l1", (pred, target), np.asarray(value, dtype=d.dtype), _backward)


def spectral_convergence(pred_mag: Tensor, target_mag: Tensor) -> Tensor:
    _same_shape(pred_mag, target_mag, "spectral_convergence")
    target_norm = float(np.sqrt(np.sum(np.square(target_mag.data, dtype=np.float64))))
    numerator = (target_mag - pred_mag).square().sum().sqrt()
    return numerator / max(target_norm, MAGNITUDE_FLOOR)


def log_magnitude(pred_mag: Tensor, target_mag: Tensor) -> Tensor:
    _same_shape(pred_mag, target_mag, "log_magnitude")
    diff = clamp_min(target_mag, MAGNITUDE_FLOOR).log() - clamp_min(pred_mag, MAGNITUDE_FLOOR).log()
    return diff.abs().mean()


def mrstft(pred: Tensor, target: Tensor, cfg: MrstftConfig = MrstftConfig()) -> Tensor:
    """ Sum over resolutions of spectral convergence plus ``alpha`` log-magnitude distance. """
    pred, target = as_tensor(pred), as_tensor(target, dtype=pred.dtype)
    _same_shape(pred, target, "mrstft")
    length = pred.shape[-1]
    if length < cfg.min_length:
        raise SpectralError(
            f"MRSTFT needs at least {cfg.min_length} samples (largest window), got {length}")
    target = target.detach()
    total = None
    for res in cfg.resolutions:
        p = stft_magnitude(pred, res)
        t = stft_magnitude(target, res)
        term = spectral_convergence(p, t) + log_magnitude(p, t) * cfg.alpha
        total = term if total is None else total + term
    return total


def combined_loss(pred: Tensor, target: Tensor, cfg: MrstftConfig = MrstftConfig()) -> Tensor:
    return smooth_l1(pred, target) + mrstft(pred, target, cfg)
