from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np

from .exceptions import SpringverbException
from .tensor import Tensor, custom_op

__all__ = [
    "SpectralError", "StftConfig", "fft", "ifft", "rfft", "stft", "stft_magnitude",
    "frame_count", "hann_window", "MAGNITUDE_FLOOR",
]

# shared by the |X| gradient and the log-magnitude loss
MAGNITUDE_FLOOR = 1e-7


class SpectralError(SpringverbException):
    pass


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


@lru_cache(maxsize=64)
def _twiddles(m: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(m // 2) / m)


def fft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """ Iterative radix-2 FFT along the last axis.

        Forward transform is unscaled, the inverse scales by ``1/N``.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise SpectralError(f"FFT length must be a power of two, got {n}")
    if inverse:
        return np.conj(fft(np.conj(x))) / n

    lead = x.shape[:-1]
    out = x[..., _bit_reversal(n)]
    m = 2
    while m <= n:
        half = m // 2
        blocks = out.reshape(lead + (n // m, 2, half))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * _twiddles(m)
        out = np.concatenate((even + odd, even - odd), axis=-1).reshape(lead + (n,))
        m *= 2
    return out


def ifft(x: np.ndarray) -> np.ndarray:
    return fft(x, inverse=True)


def rfft(x: np.ndarray) -> np.ndarray:
    """ One-sided spectrum (``N/2 + 1`` bins) of real frames. """
    n = np.shape(x)[-1]
    return fft(x)[..., :n // 2 + 1]


@lru_cache(maxsize=32)
def hann_window(win_length: int, fft_size: int) -> np.ndarray:
    """ Periodic Hann of ``win_length`` centered in ``fft_size`` zeros. """
    n = np.arange(win_length)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / win_length)
    padded = np.zeros(fft_size)
    start = (fft_size - win_length) // 2
    padded[start:start + win_length] = window
    padded.flags.writeable = False
    return padded


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 256
    win_length: int = 1024
    window: str = field(default="hann")

    def __post_init__(self) -> None:
        if not _is_power_of_two(self.fft_size):
            raise SpectralError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.hop <= self.win_length <= self.fft_size:
            raise SpectralError(
                f"need 0 < hop <= win_length <= fft_size, got "
                f"hop={self.hop} win_length={self.win_length} fft_size={self.fft_size}")
        if self.window != "hann":
            raise SpectralError(f"Unsupported window {self.window!r}")

    @classmethod
    def from_fft(cls, fft_size: int) -> "StftConfig":
        return cls(fft_size=fft_size, hop=fft_size // 4, win_length=fft_size)

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window_values(self) -> np.ndarray:
        return hann_window(self.win_length, self.fft_size)

    def to_dict(self) -> dict:
        return {"fft_size": self.fft_size, "hop": self.hop,
                "win_length": self.win_length, "window": self.window}


def frame_count(length: int, cfg: StftConfig) -> int:
    if length < cfg.win_length:
        raise SpectralError(f"signal of {length} samples is shorter than window {cfg.win_length}")
    return 1 + (length - cfg.win_length) // cfg.hop


def _frame_index(length: int, cfg: StftConfig) -> Tuple[np.ndarray, int]:
    frames = frame_count(length, cfg)
    offset = (cfg.fft_size - cfg.win_length) // 2
    # frame f reads x[f*hop : f*hop + win_length] into fft slots [offset, offset + win_length)
    starts = np.arange(frames) * cfg.hop
    idx = starts[:, None] + np.arange(cfg.win_length)[None, :]
    return idx, offset


def _windowed_frames(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    idx, offset = _frame_index(x.shape[-1], cfg)
    frames = np.zeros(x.shape[:-1] + (idx.shape[0], cfg.fft_size))
    frames[..., offset:offset + cfg.win_length] = x[..., idx]
    return frames * cfg.window_values


def stft(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """ Complex one-sided STFT ``[..., frames, bins]`` without centering. """
    x = np.asarray(x, dtype=np.float64)
    return rfft(_windowed_frames(x, cfg))


def stft_magnitude(x: Tensor, cfg: StftConfig) -> Tensor:
    """ Differentiable ``|STFT|`` of ``x`` shaped ``[..., T]``. """
    data = x.data
    idx, offset = _frame_index(data.shape[-1], cfg)
    spectrum = stft(data, cfg)
    magnitude = np.abs(spectrum)
    n = cfg.fft_size
    window = cfg.window_values[offset:offset + cfg.win_length]

    def _backward(g):
        # d|X_k|/du_n = Re(conj(X_k)/|X_k| e^{-2pi i k n/N}); summed over one-sided k
        phase = spectrum / np.maximum(magnitude, MAGNITUDE_FLOOR)
        full = np.zeros(spectrum.shape[:-1] + (n,), dtype=np.complex128)
        full[..., :cfg.bins] = g * phase
        grad_frames = n * np.real(ifft(full))
        grad_frames = grad_frames[..., offset:offset + cfg.win_length] * window
        gx = np.zeros(data.shape, dtype=np.float64)
        lead = data.shape[:-1]
        flat_gx = gx.reshape((-1, data.shape[-1]))
        flat_frames = grad_frames.reshape((-1,) + idx.shape)
        for row in range(flat_gx.shape[0]):
            np.add.at(flat_gx[row], idx, flat_frames[row])
        return (flat_gx.reshape(lead + (data.shape[-1],)).astype(data.dtype),)

    return custom_op("stft_magnitude", (x,), magnitude.astype(data.dtype), _backward)
