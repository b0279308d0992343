import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .dataset import SamplePair
from .exceptions import SpringverbException
from .losses import MrstftConfig, mrstft
from .models import Model, render
from .tensor import Tensor, as_tensor
from .utils import hardware_descriptor, parallel_map

__all__ = [
    "MetricException", "esr", "mrstft_metric", "rtf", "measure_rtf", "RtfResult",
    "EvalRow", "EvalReport", "naive_baseline_metrics", "dummy_regressor_metrics",
    "evaluate", "MIN_RTF_REPEATS",
]

logger = logging.getLogger(__name__)

MIN_RTF_REPEATS = 3

Signal = Union[Tensor, np.ndarray, Sequence[float]]


class MetricException(SpringverbException):
    pass


def _array(x: Signal) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64).reshape(-1)


def esr(pred: Signal, target: Signal) -> float:
    """ Error-to-signal ratio ``sum((y - y_hat)^2) / sum(y^2)``. """
    p, t = _array(pred), _array(target)
    if p.shape != t.shape:
        raise MetricException(f"ESR needs equal lengths, got {p.shape[0]} and {t.shape[0]}")
    energy = float(np.dot(t, t))
    if energy == 0.0:
        raise MetricException("ESR undefined for silent target")
    diff = t - p
    return float(np.dot(diff, diff)) / energy


def mrstft_metric(pred: Signal, target: Signal, cfg: MrstftConfig = MrstftConfig()) -> float:
    """ The training MRSTFT evaluated without recording gradients. """
    return mrstft(as_tensor(pred), as_tensor(target), cfg).item()


@dataclass
class RtfResult:
    median: float
    runs: List[float]
    clip_seconds: float
    sample_rate: int

    @property
    def min(self) -> float:
        return min(self.runs)

    @property
    def max(self) -> float:
        return max(self.runs)

    @property
    def real_time(self) -> bool:
        return self.median <= 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {"median": self.median, "min": self.min, "max": self.max, "runs": self.runs,
                "clip_seconds": self.clip_seconds, "sample_rate": self.sample_rate,
                "real_time": self.real_time}


def measure_rtf(model: Model, clip_len_s: float, sample_rate: int,
                repeats: int = 5, seed: int = 0) -> RtfResult:
    """ Time whole-clip inference: one untimed warm-up, then ``repeats`` timed runs. """
    if repeats < MIN_RTF_REPEATS:
        raise MetricException(f"RTF needs at least {MIN_RTF_REPEATS} repeats, got {repeats}")
    if clip_len_s <= 0:
        raise MetricException(f"clip length must be positive, got {clip_len_s}")
    samples = np.random.default_rng(seed).uniform(-0.5, 0.5, int(round(clip_len_s * sample_rate)))
    duration = samples.shape[0] / sample_rate
    render(model, samples)
    runs = []
    for _ in range(repeats):
        start = time.perf_counter()
        render(model, samples)
        runs.append((time.perf_counter() - start) / duration)
    result = RtfResult(float(np.median(runs)), runs, duration, sample_rate)
    logger.info("%s: RTF %.4f (%s)", model, result.median,
                "real-time capable" if result.real_time else "slower than real time")
    return result


def rtf(model: Model, clip_len_s: float, sample_rate: int, repeats: int = 5, seed: int = 0) -> float:
    return measure_rtf(model, clip_len_s, sample_rate, repeats, seed).median


@dataclass
class EvalRow:
    name: str
    esr: float
    mrstft: float
    rtf: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "esr": self.esr, "mrstft": self.mrstft, "rtf": self.rtf}


@dataclass
class EvalReport:
    rows: List[EvalRow]
    items: int
    hardware: str
    seed: int
    split: str = "test"
    run_config: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def row(self, name: str) -> EvalRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "rows": [r.to_dict() for r in self.rows],
            "items": self.items,
            "hardware": self.hardware,
            "seed": self.seed,
            "split": self.split,
            "run_config": self.run_config,
        }
        data.update(self.extra)
        return data

    def table(self) -> str:
        """ Plain-text table ``Model | ESR | MR | RTF``; ``*`` marks each column's lowest value. """
        columns = (("ESR", "esr"), ("MR", "mrstft"), ("RTF", "rtf"))
        best = {}
        for _, attr in columns:
            values = [getattr(r, attr) for r in self.rows if getattr(r, attr) is not None]
            best[attr] = min(values) if values else None

        cells = [["Model"] + [title for title, _ in columns]]
        for r in self.rows:
            line = [r.name]
            for _, attr in columns:
                value = getattr(r, attr)
                if value is None:
                    line.append("-")
                else:
                    line.append(f"{value:.4f}" + ("*" if value == best[attr] else ""))
            cells.append(line)
        widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
        lines = [" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines)


def _require_items(pairs: Sequence[SamplePair], what: str) -> None:
    if not pairs:
        raise MetricException(f"{what}: the evaluation split is empty")


def _score(predictions: Sequence[np.ndarray], pairs: Sequence[SamplePair],
           cfg: MrstftConfig) -> tuple:
    def _item(i: int) -> tuple:
        target = pairs[i].wet.samples.data.astype(np.float64)
        pred = np.asarray(predictions[i], dtype=np.float64)
        return esr(pred, target), mrstft_metric(pred, target, cfg)

    scores = parallel_map(_item, range(len(pairs)))
    esrs, mrs = zip(*scores)
    return float(np.mean(esrs)), float(np.mean(mrs))


def naive_baseline_metrics(pairs: Sequence[SamplePair],
                           cfg: MrstftConfig = MrstftConfig()) -> EvalRow:
    """ Predict the dry input unchanged. """
    _require_items(pairs, "NB")
    predictions = [p.dry.samples.data for p in pairs]
    return EvalRow("NB", *_score(predictions, pairs, cfg))


def dummy_regressor_metrics(pairs: Sequence[SamplePair], seed: int,
                            cfg: MrstftConfig = MrstftConfig()) -> EvalRow:
    """ Predict uniform white noise in ``[-1, 1]``, uncorrelated with both signals. """
    _require_items(pairs, "DR")
    rng = np.random.default_rng(seed)
    predictions = [rng.uniform(-1.0, 1.0, len(p)) for p in pairs]
    return EvalRow("DR", *_score(predictions, pairs, cfg))


def evaluate(model: Model, pairs: Sequence[SamplePair], seed: int, name: Optional[str] = None,
             rtf_repeats: int = MIN_RTF_REPEATS, cfg: MrstftConfig = MrstftConfig(),
             run_config: Optional[Dict[str, Any]] = None, split: str = "test") -> EvalReport:
    """ Score ``model`` on ``pairs`` next to the NB and DR reference rows.

        ESR and MRSTFT are averaged per item. RTF is measured once at the
        mean clip duration of the split.
    """
    _require_items(pairs, "evaluate")
    rate = model.config.sample_rate
    mismatched = [str(p.dry) for p in pairs if p.sample_rate != rate]
    if mismatched:
        raise MetricException(f"model runs at {rate} Hz but the split has {', '.join(mismatched)}")

    predictions = [render(model, p.dry.samples.data, p.cond) for p in pairs]
    model_esr, model_mr = _score(predictions, pairs, cfg)
    mean_seconds = float(np.mean([p.dry.duration for p in pairs]))
    model_rtf = rtf(model, mean_seconds, rate, repeats=rtf_repeats, seed=seed)
    rows = [
        EvalRow(name or model.kind.upper(), model_esr, model_mr, model_rtf),
        naive_baseline_metrics(pairs, cfg),
        dummy_regressor_metrics(pairs, seed, cfg),
    ]
    for row in rows:
        if not all(math.isfinite(v) for v in (row.esr, row.mrstft)):
            logger.warning("%s: non-finite metric values %s", row.name, row.to_dict())
    return EvalReport(rows, len(pairs), hardware_descriptor(), seed, split, run_config)
