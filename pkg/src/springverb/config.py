import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .exceptions import SpringverbException
from .losses import MrstftConfig
from .models import ModelConfig, ModelException
from .spectral import SpectralError
from .training import TrainConfig, TrainingException
from .utils import dump_json, load_json

__all__ = ["RunConfig", "PathsConfig", "ConfigException", "load_run_config", "SECTIONS"]

logger = logging.getLogger(__name__)

SECTIONS = ("model", "train", "loss", "paths")


class ConfigException(SpringverbException):
    pass


@dataclass(frozen=True)
class PathsConfig:
    dry_dir: Optional[str] = None
    wet_dir: Optional[str] = None
    manifest: Optional[str] = None
    cond_source: Optional[str] = None
    out_dir: str = "runs/default"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PathsConfig":
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigException(f"Unknown paths keys: {', '.join(unknown)}")
        return cls(**{k: None if v is None else str(v) for k, v in data.items()})


@dataclass(frozen=True)
class RunConfig:
    """ Model, training, loss and path settings of one run, as resolved
        from the config file and the command line.
    """
    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: MrstftConfig = field(default_factory=MrstftConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "loss": self.loss.to_dict(),
            "paths": asdict(self.paths),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigException(f"Unknown config sections: {', '.join(unknown)}")
        model = dict(data.get("model") or {})
        kind = model.pop("kind", None)
        if kind is None:
            raise ConfigException("No model kind given (set model.kind or pass --model)")
        try:
            return cls(
                model=ModelConfig.default(kind, **model),
                train=TrainConfig.from_dict(dict(data.get("train") or {})),
                loss=MrstftConfig.from_dict(dict(data.get("loss") or {})),
                paths=PathsConfig.from_dict(dict(data.get("paths") or {})),
            )
        except (ModelException, TrainingException, SpectralError) as exc:
            raise ConfigException(str(exc)) from exc
        except TypeError as exc:
            raise ConfigException(f"Invalid config value: {exc}") from exc

    def save(self, path: Union[str, Path]) -> None:
        dump_json(path, self.to_dict())


def _set(data: Dict[str, Any], section: str, key: str, value: Any) -> None:
    if value is not None:
        data.setdefault(section, {})[key] = value


def load_run_config(path: Optional[Union[str, Path]] = None, *,
                    model: Optional[str] = None, sample_rate: Optional[int] = None,
                    seed: Optional[int] = None, dry_dir: Optional[str] = None,
                    wet_dir: Optional[str] = None, manifest: Optional[str] = None,
                    out_dir: Optional[str] = None, max_epochs: Optional[int] = None,
                    batch_size: Optional[int] = None) -> RunConfig:
    """ Read ``path`` (JSON) when given, then apply the non-``None`` overrides.

        Overrides win over file values. Changing the model kind keeps the
        file's other model keys on top of the new kind's defaults.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = load_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigException(f"Cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigException(f"{path}: top level must be a JSON object")
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}

    _set(data, "model", "kind", model)
    _set(data, "model", "sample_rate", sample_rate)
    _set(data, "train", "seed", seed)
    _set(data, "train", "max_epochs", max_epochs)
    _set(data, "train", "batch_size", batch_size)
    _set(data, "paths", "dry_dir", dry_dir)
    _set(data, "paths", "wet_dir", wet_dir)
    _set(data, "paths", "manifest", manifest)
    _set(data, "paths", "out_dir", out_dir)
    return RunConfig.from_dict(data)
