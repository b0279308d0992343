import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .checkpoint import Checkpoint
from .dataset import (
    DatasetManifest, SamplePair, batch_segments, default_segment_len, load_pairs, prefetch,
)
from .exceptions import SpringverbException
from .losses import MrstftConfig, combined_loss
from .models import Model, ModelConfig, build
from .tensor import Tape, Tensor

__all__ = [
    "TrainConfig", "TrainingException", "Adam", "adam_step", "PlateauScheduler",
    "plateau_scheduler", "clip_grad_norm", "train", "validate", "TrainResult",
    "BEST_CHECKPOINT", "LAST_CHECKPOINT", "EPOCH_LOG",
]

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.sprv"
LAST_CHECKPOINT = "last.sprv"
EPOCH_LOG = "train_log.jsonl"

PathLike = Union[str, Path]


class TrainingException(SpringverbException):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    factor: float = 0.1
    patience: int = 10
    threshold: float = 1e-6
    batch_size: Optional[int] = None
    segment_len: Optional[int] = None
    max_epochs: int = 200
    seed: int = 0
    clip_norm: Optional[float] = 5.0
    prefetch: int = 2

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise TrainingException(f"lr must be > 0, got {self.lr}")
        if not 0 < self.factor < 1:
            raise TrainingException(f"factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise TrainingException(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise TrainingException(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise TrainingException(f"batch_size must be >= 1, got {self.batch_size}")

    def resolved_batch_size(self, sample_rate: int) -> int:
        """ 64 at 16 kHz, 16 at higher rates unless set explicitly. """
        if self.batch_size is not None:
            return self.batch_size
        return 64 if sample_rate <= 16000 else 16

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise TrainingException(f"Unknown train config keys: {', '.join(unknown)}")
        return cls(**data)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              lr: float, t: int, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ One bias-corrected Adam update; returns new ``(param, m, v)``. """
    if t < 1:
        raise TrainingException(f"Adam step counter starts at 1, got {t}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, params: Dict[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.skipped = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> bool:
        """ Apply one update; a non-finite gradient skips the whole step. """
        bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            self.skipped += 1
            logger.warning("Skipped optimizer step: non-finite gradient in %s (%d skipped so far)",
                           ", ".join(bad[:3]), self.skipped)
            return False
        self.t += 1
        for name, param in self.params.items():
            grad = grads[name].astype(param.dtype, copy=False)
            new, self.m[name], self.v[name] = adam_step(
                param.data, grad, self.m[name], self.v[name], self.lr, self.t,
                self.beta1, self.beta2, self.eps)
            param.assign(new)
        return True

    def state(self) -> Dict[str, Any]:
        return {"lr": self.lr, "t": self.t, "skipped": self.skipped,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load(self, state: Dict[str, Any], moments: Dict[str, Dict[str, np.ndarray]]) -> None:
        self.lr = float(state["lr"])
        self.t = int(state["t"])
        self.skipped = int(state.get("skipped", 0))
        for group, target in (("m", self.m), ("v", self.v)):
            for name in target:
                target[name] = np.asarray(moments[group][name], dtype=target[name].dtype)


@dataclass
class PlateauScheduler:
    lr: float
    factor: float = 0.1
    patience: int = 10
    threshold: float = 1e-6
    best: float = math.inf
    counter: int = 0
    reductions: int = 0

    def step(self, val_loss: float) -> Optional[float]:
        """ Feed one validation loss; returns the new lr when it was reduced. """
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.counter = 0
            return None
        self.counter += 1
        if self.counter > self.patience:
            self.lr *= self.factor
            self.counter = 0
            self.reductions += 1
            logger.warning("No validation improvement for %d epochs, lr reduced to %g",
                           self.patience + 1, self.lr)
            return self.lr
        return None

    def state(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_state(cls, state: Dict[str, Any]) -> "PlateauScheduler":
        return cls(**state)


def plateau_scheduler(state: PlateauScheduler, val_loss: float
                      ) -> Tuple[Optional[float], PlateauScheduler]:
    return state.step(val_loss), state


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """ Scale ``grads`` in place to a global L2 norm of at most ``max_norm``; returns the norm before. """
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def validate(model: Model, pairs: Sequence[SamplePair], segment_len: int, batch_size: int,
             loss_cfg: MrstftConfig) -> float:
    """ Mean combined loss over every validation segment, in eval mode. """
    model.eval()
    try:
        losses = [combined_loss(model(b.dry, b.cond), b.wet, loss_cfg).item()
                  for b in batch_segments(pairs, "val", segment_len, batch_size, 0, shuffle=False)]
    finally:
        model.train()
    return float(np.mean(losses))


@dataclass
class TrainResult:
    best: Checkpoint
    history: List[Dict[str, Any]]
    out_dir: Path

    @property
    def best_path(self) -> Path:
        return self.out_dir / BEST_CHECKPOINT


def _resolve_segment_len(requested: Optional[int], pairs: Sequence[SamplePair],
                         model: Model, loss_cfg: MrstftConfig) -> int:
    rate = pairs[0].sample_rate
    shortest = min(len(p) for p in pairs)
    segment_len = requested or min(default_segment_len(rate), shortest)
    minimum = max(loss_cfg.min_length, model.min_length)
    if segment_len < minimum:
        raise TrainingException(
            f"segment length {segment_len} is below the {minimum} samples needed by "
            f"the loss windows and the receptive field")
    return segment_len


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    loss_cfg: MrstftConfig,
    manifest: DatasetManifest,
    out_dir: PathLike,
    resume: Optional[PathLike] = None,
    run_config: Optional[Dict[str, Any]] = None,
    progress: Optional[bool] = None,
) -> TrainResult:
    """ Adam + reduce-on-plateau loop with validation-driven checkpointing.

        Writes ``best.sprv`` whenever validation improves, ``last.sprv`` after
        every epoch and one JSON line per epoch to ``train_log.jsonl``.
        ``resume`` continues from a ``last.sprv`` of the same configuration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if manifest.sample_rate != model_cfg.sample_rate:
        raise TrainingException(
            f"corpus is {manifest.sample_rate} Hz but the model is configured for "
            f"{model_cfg.sample_rate} Hz")
    batch_size = train_cfg.resolved_batch_size(model_cfg.sample_rate)
    if model_cfg.sample_rate > 16000 and batch_size > 16:
        logger.warning("batch size %d at %d Hz; 16 is recommended above 16 kHz",
                       batch_size, model_cfg.sample_rate)

    model = build(model_cfg, train_cfg.seed)
    params = dict(model.named_parameters())
    optimizer = Adam(params, train_cfg.lr)
    scheduler = PlateauScheduler(train_cfg.lr, train_cfg.factor, train_cfg.patience,
                                 train_cfg.threshold)
    history: List[Dict[str, Any]] = []
    best_val = math.inf
    start_epoch = 0

    if resume is not None:
        ckpt = Checkpoint.load(resume)
        if ckpt.model_config != model_cfg:
            raise TrainingException(f"{resume} was trained with a different model config")
        model.load_state_dict(ckpt.state)
        optimizer.load(ckpt.optimizer, ckpt.moments)
        scheduler_state = dict(ckpt.scheduler)
        best_val = float(scheduler_state.pop("best_val", math.inf))
        scheduler = PlateauScheduler.from_state(scheduler_state)
        history = list(ckpt.history)
        start_epoch = ckpt.epoch
        logger.info("Resuming %s from epoch %d", model, start_epoch)

    train_pairs = load_pairs(manifest, "train")
    val_pairs = load_pairs(manifest, "val")
    if not train_pairs or not val_pairs:
        raise TrainingException(f"train and val splits must be non-empty, got {manifest.split_sizes()}")
    segment_len = _resolve_segment_len(train_cfg.segment_len, train_pairs + val_pairs, model, loss_cfg)
    clip = train_cfg.clip_norm if model_cfg.is_recurrent else None
    logger.info("Training %s: %d train / %d val pairs, segment %d, batch %d",
                model, len(train_pairs), len(val_pairs), segment_len, batch_size)

    def _checkpoint(epoch: int) -> Checkpoint:
        return Checkpoint.from_model(
            model, epoch=epoch, optimizer=optimizer.state(),
            moments={"m": dict(optimizer.m), "v": dict(optimizer.v)},
            scheduler=dict(scheduler.state(), best_val=best_val), history=list(history),
            rng={"seed": train_cfg.seed, "next_epoch": epoch}, run_config=run_config)

    nonfinite_streak = 0
    model.train()
    for epoch in range(start_epoch, train_cfg.max_epochs):
        started = time.perf_counter()
        stream = batch_segments(train_pairs, "train", segment_len, batch_size,
                                train_cfg.seed, epoch=epoch)
        losses = []
        bar = tqdm(prefetch(stream, train_cfg.prefetch), desc=f"epoch {epoch + 1}",
                   unit="batch", leave=False, disable=None if progress is None else not progress)
        for index, batch in enumerate(bar):
            with Tape() as tape:
                loss = combined_loss(model(batch.dry, batch.cond), batch.wet, loss_cfg)
            value = loss.item()
            if not math.isfinite(value):
                tape.release()
                nonfinite_streak += 1
                if nonfinite_streak >= 2:
                    raise TrainingException(
                        f"loss was non-finite twice in a row (lr {optimizer.lr:g}, "
                        f"epoch {epoch + 1}, batch {index})")
                logger.warning("Non-finite loss at epoch %d batch %d, batch skipped", epoch + 1, index)
                continue
            nonfinite_streak = 0
            grads = dict(zip(params, tape.backward(loss, list(params.values()))))
            if clip:
                clip_grad_norm(grads, clip)
            optimizer.step(grads)
            losses.append(value)
            bar.set_postfix(loss=f"{value:.4f}")

        train_loss = float(np.mean(losses)) if losses else math.nan
        val_loss = validate(model, val_pairs, segment_len, batch_size, loss_cfg)
        epoch_lr = optimizer.lr
        new_lr = scheduler.step(val_loss)
        if new_lr is not None:
            optimizer.lr = new_lr
        record = {"epoch": epoch + 1, "train_loss": train_loss, "val_loss": val_loss, "lr": epoch_lr}
        history.append(record)
        seconds = time.perf_counter() - started
        with open(out_dir / EPOCH_LOG, "a") as log:
            log.write(json.dumps(dict(record, seconds=seconds)) + "\n")
        logger.info("epoch %d: train %.5f val %.5f lr %g (%.1fs)",
                    epoch + 1, train_loss, val_loss, epoch_lr, seconds)

        if val_loss < best_val:
            best_val = val_loss
            _checkpoint(epoch + 1).save(out_dir / BEST_CHECKPOINT)
        _checkpoint(epoch + 1).save(out_dir / LAST_CHECKPOINT)

    best_path = out_dir / BEST_CHECKPOINT
    if not best_path.exists():
        _checkpoint(len(history)).save(best_path)
    return TrainResult(Checkpoint.load(best_path), history, out_dir)
