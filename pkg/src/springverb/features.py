import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .audio import AudioClip
from .dataset import DatasetException, DatasetManifest, SPLITS, SamplePair, load_pairs
from .spectral import StftConfig, fft, stft
from .utils import parallel_map

__all__ = [
    "leq", "yin_track", "yin_pitch", "hfc", "YinTrack", "FeatureRow", "DatasetFeatures",
    "analyze_clip", "analyze_dataset", "LEQ_FLOOR", "VOICING_LIMIT",
]

logger = logging.getLogger(__name__)

LEQ_FLOOR = 1e-12
# frames whose best CMNDF value stays at or above this are unvoiced
VOICING_LIMIT = 0.5

Clip = Union[AudioClip, np.ndarray]


def _samples(clip: Clip) -> np.ndarray:
    data = clip.samples.data if isinstance(clip, AudioClip) else np.asarray(clip)
    return np.asarray(data, dtype=np.float64).reshape(-1)


def leq(clip: Clip) -> float:
    """ Equivalent sound level ``10 log10(mean(x^2))`` in dB relative to full scale. """
    x = _samples(clip)
    return 10.0 * math.log10(float(np.mean(x * x)) + LEQ_FLOOR)


def _difference(frames: np.ndarray, tau_max: int) -> np.ndarray:
    """ YIN difference function of every row for lags ``0 .. tau_max - 1``. """
    width = frames.shape[-1]
    size = 1 << int(math.ceil(math.log2(width + tau_max)))
    padded = np.zeros(frames.shape[:-1] + (size,))
    padded[..., :width] = frames
    spectrum = fft(padded)
    autocorr = np.real(fft(spectrum * np.conj(spectrum), inverse=True))[..., :tau_max]
    energy = np.concatenate([np.zeros(frames.shape[:-1] + (1,)),
                             np.cumsum(frames * frames, axis=-1)], axis=-1)
    lags = np.arange(tau_max)
    head = energy[..., width - lags]
    tail = energy[..., width:width + 1] - energy[..., lags]
    return head + tail - 2.0 * autocorr


def _cmndf(diff: np.ndarray) -> np.ndarray:
    out = np.ones_like(diff)
    running = np.cumsum(diff[..., 1:], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[..., 1:] = np.where(running > 0, diff[..., 1:] * np.arange(1, diff.shape[-1]) / running, 1.0)
    return out


@dataclass
class YinTrack:
    times: np.ndarray
    f0: np.ndarray
    cmndf: np.ndarray
    voiced: np.ndarray

    @property
    def voiced_fraction(self) -> float:
        return float(np.mean(self.voiced)) if self.voiced.size else 0.0

    def mean_pitch(self) -> Optional[float]:
        if not np.any(self.voiced):
            return None
        return float(np.mean(self.f0[self.voiced]))


def _pick_lag(d: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> int:
    below = np.flatnonzero(d[tau_min:tau_max] < threshold)
    if below.size == 0:
        return tau_min + int(np.argmin(d[tau_min:tau_max]))
    tau = tau_min + int(below[0])
    while tau + 1 < tau_max and d[tau + 1] < d[tau]:
        tau += 1
    return tau


def yin_track(clip: AudioClip, frame: int = 2048, hop: int = 512, threshold: float = 0.1,
              fmin: float = 40.0, fmax: float = 2000.0) -> YinTrack:
    """ Per-frame YIN estimate: lag search on the cumulative-mean-normalized
        difference, refined by parabolic interpolation.

        Lags stop below ``frame // 2``, so the lowest detectable pitch is
        ``max(fmin, rate / (frame // 2 - 1))``: about 47 Hz at 48 kHz with the
        default frame. Pass a larger ``frame`` to reach ``fmin`` there.
    """
    x = _samples(clip)
    rate = clip.sample_rate
    empty = np.zeros(0)
    if x.shape[0] < frame:
        return YinTrack(empty, empty, empty, np.zeros(0, dtype=bool))
    tau_min = max(2, int(math.floor(rate / fmax)))
    tau_max = min(int(math.ceil(rate / fmin)) + 1, frame // 2)
    if tau_max == frame // 2 and rate / (tau_max - 1) > fmin:
        logger.debug("frame %d at %d Hz limits pitch search to %.1f Hz and above (fmin %.1f)",
                     frame, rate, rate / (tau_max - 1), fmin)
    count = 1 + (x.shape[0] - frame) // hop
    starts = np.arange(count) * hop
    frames = x[starts[:, None] + np.arange(frame)[None, :]]
    d = _cmndf(_difference(frames, tau_max))

    f0 = np.zeros(count)
    best = np.ones(count)
    for i in range(count):
        tau = _pick_lag(d[i], tau_min, tau_max, threshold)
        best[i] = d[i, tau]
        shift = 0.0
        if tau_min < tau < tau_max - 1:
            a, b, c = d[i, tau - 1], d[i, tau], d[i, tau + 1]
            denom = a - 2.0 * b + c
            if denom != 0:
                shift = 0.5 * (a - c) / denom
        f0[i] = rate / (tau + shift)
    voiced = best < VOICING_LIMIT
    times = (starts + frame / 2) / rate
    return YinTrack(times, f0, best, voiced)


def yin_pitch(clip: AudioClip, frame: int = 2048, hop: int = 512, threshold: float = 0.1,
              fmin: float = 40.0, fmax: float = 2000.0) -> Optional[float]:
    """ Mean f0 in Hz over voiced frames, ``None`` when nothing is voiced. """
    return yin_track(clip, frame, hop, threshold, fmin, fmax).mean_pitch()


def hfc(clip: Clip, frame: int = 1024, hop: int = 512) -> float:
    """ High-frequency content: mean over frames of ``sum_k k |X_k|^2`` (Hann window). """
    x = _samples(clip)
    if x.shape[0] < frame:
        x = np.concatenate([x, np.zeros(frame - x.shape[0])])
    power = np.abs(stft(x, StftConfig(fft_size=frame, hop=hop, win_length=frame))) ** 2
    return float(np.mean(power @ np.arange(power.shape[-1])))


@dataclass
class FeatureRow:
    leq_db: float
    pitch_hz: Optional[float]
    hfc: float

    def to_dict(self) -> Dict[str, Any]:
        return {"leq_db": self.leq_db, "pitch_hz": self.pitch_hz, "hfc": self.hfc}

    @classmethod
    def mean(cls, rows: Sequence["FeatureRow"]) -> "FeatureRow":
        pitches = [r.pitch_hz for r in rows if r.pitch_hz is not None]
        return cls(float(np.mean([r.leq_db for r in rows])),
                   float(np.mean(pitches)) if pitches else None,
                   float(np.mean([r.hfc for r in rows])))


def analyze_clip(clip: AudioClip) -> FeatureRow:
    return FeatureRow(leq(clip), yin_pitch(clip), hfc(clip))


@dataclass
class DatasetFeatures:
    """ Dry and wet mean feature rows, with the per-clip rows behind them. """
    dry: FeatureRow
    wet: FeatureRow
    items: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"dry": self.dry.to_dict(), "wet": self.wet.to_dict(), "items": self.items}

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["signal", "leq_db", "pitch_hz", "hfc"])
            for name, row in (("dry", self.dry), ("wet", self.wet)):
                writer.writerow([name, f"{row.leq_db:.4f}",
                                 "" if row.pitch_hz is None else f"{row.pitch_hz:.2f}",
                                 f"{row.hfc:.6g}"])


def analyze_dataset(source: Union[DatasetManifest, Sequence[SamplePair]],
                    splits: Sequence[str] = SPLITS) -> DatasetFeatures:
    """ LEQ, YIN pitch and HFC averaged over every dry and every wet clip. """
    if isinstance(source, DatasetManifest):
        pairs = [p for split in splits for p in load_pairs(source, split)]
    else:
        pairs = list(source)
    if not pairs:
        raise DatasetException("no clips to analyze")

    def _pair(pair: SamplePair) -> tuple:
        return analyze_clip(pair.dry), analyze_clip(pair.wet)

    rows = parallel_map(_pair, pairs)
    items = [{"dry": str(p.dry.path), "split": p.split, "dry_features": d.to_dict(),
              "wet_features": w.to_dict()} for p, (d, w) in zip(pairs, rows)]
    result = DatasetFeatures(FeatureRow.mean([d for d, _ in rows]),
                             FeatureRow.mean([w for _, w in rows]), items)
    logger.info("Analyzed %d pairs: dry %s, wet %s", len(pairs), result.dry, result.wet)
    return result
