import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .losses import MrstftConfig, combined_loss, mrstft, smooth_l1
from .models import ModelConfig, build
from .tensor import Tape, Tensor, default_dtype

__all__ = [
    "GradcheckRow", "GradcheckReport", "check_gradients", "gradcheck_model",
    "gradcheck_losses", "THRESHOLD",
]

logger = logging.getLogger(__name__)

THRESHOLD = 1e-4
STEP = 1e-5


@dataclass
class GradcheckRow:
    group: str
    analytic_norm: float
    numeric_norm: float
    rel_error: float
    threshold: float = THRESHOLD

    @property
    def passed(self) -> bool:
        return self.rel_error < self.threshold


@dataclass
class GradcheckReport:
    subject: str
    rows: List[GradcheckRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> List[GradcheckRow]:
        return [r for r in self.rows if not r.passed]

    def table(self) -> str:
        width = max([len("group")] + [len(r.group) for r in self.rows])
        lines = [f"{self.subject}", f"{'group'.ljust(width)}  {'rel_error':>10}  result"]
        for r in self.rows:
            lines.append(f"{r.group.ljust(width)}  {r.rel_error:10.3e}  "
                         f"{'ok' if r.passed else 'FAIL'}")
        return "\n".join(lines)


def check_gradients(loss_fn: Callable[[], Tensor], leaves: Dict[str, Tensor],
                    rng: np.random.Generator, samples: int = 6, step: float = STEP,
                    threshold: float = THRESHOLD) -> List[GradcheckRow]:
    """ Compare tape gradients with central differences, one row per named leaf.

        ``samples`` random entries of every leaf are perturbed; the error of
        a group is ``|a - n| / max(|a|, |n|, 1e-8)`` over those entries.
    """
    names = list(leaves)
    with Tape() as tape:
        loss = loss_fn()
    analytic = dict(zip(names, tape.backward(loss, [leaves[n] for n in names])))

    rows = []
    for name in names:
        leaf = leaves[name]
        base = leaf.numpy()
        flat_count = base.size
        picks = rng.choice(flat_count, size=min(samples, flat_count), replace=False)
        numeric = np.empty(picks.shape[0])
        for j, index in enumerate(picks):
            shifted = base.copy().reshape(-1)
            shifted[index] += step
            leaf.assign(shifted.reshape(base.shape))
            upper = loss_fn().item()
            shifted[index] -= 2.0 * step
            leaf.assign(shifted.reshape(base.shape))
            lower = loss_fn().item()
            numeric[j] = (upper - lower) / (2.0 * step)
        leaf.assign(base)
        a = analytic[name].reshape(-1)[picks]
        scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(numeric)), 1e-8)
        error = float(np.linalg.norm(a - numeric)) / scale
        rows.append(GradcheckRow(name, float(np.linalg.norm(a)), float(np.linalg.norm(numeric)),
                                 error, threshold))
        if error >= threshold:
            logger.warning("gradient mismatch in %s: relative error %.3e", name, error)
    return rows


def gradcheck_model(config: ModelConfig, seed: int, samples: int = 6,
                    batch: int = 2) -> GradcheckReport:
    """ Finite-difference check of every named parameter of a freshly built model (float64). """
    with default_dtype("float64"):
        model = build(config, seed)
        rng = np.random.default_rng(seed)
        length = max(model.min_length, 64) + 32
        x = Tensor(rng.normal(0.0, 0.5, (batch, 1, length)))
        cond = Tensor(rng.uniform(-1.0, 1.0, (batch, config.cond_dim)))
        weights = Tensor(rng.normal(size=(batch, 1, length)))

        def _loss() -> Tensor:
            return (model(x, cond) * weights).mean()

        rows = check_gradients(_loss, dict(model.named_parameters()), rng, samples)
    return GradcheckReport(f"{config.kind} (seed {seed})", rows)


def gradcheck_losses(seed: int, length: int = 4096, samples: int = 12,
                     cfg: Optional[MrstftConfig] = None) -> GradcheckReport:
    """ Check the loss functions' gradients with respect to the prediction. """
    cfg = cfg or MrstftConfig()
    with default_dtype("float64"):
        rng = np.random.default_rng(seed)
        target = Tensor(rng.uniform(-0.5, 0.5, (1, 1, length)))
        pred = Tensor(rng.uniform(-0.5, 0.5, (1, 1, length)), requires_grad=True)
        losses = {
            "smooth_l1": lambda: smooth_l1(pred, target),
            "mrstft": lambda: mrstft(pred, target, cfg),
            "combined": lambda: combined_loss(pred, target, cfg),
        }
        rows = []
        for name, fn in losses.items():
            row = check_gradients(fn, {"pred": pred}, rng, samples)[0]
            row.group = name
            rows.append(row)
    return GradcheckReport(f"losses (seed {seed})", rows)
