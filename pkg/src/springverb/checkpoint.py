import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .exceptions import SpringverbException
from .models import Model, ModelConfig, ModelException, build

__all__ = ["Checkpoint", "CheckpointException", "MAGIC", "FORMAT_VERSION"]

logger = logging.getLogger(__name__)

MAGIC = b"SPRV"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


class CheckpointException(SpringverbException):
    pass


@dataclass
class Checkpoint:
    """ Everything needed to rebuild a model and continue its training.

        On disk: ``b"SPRV"``, u32 version, u32 header length, UTF-8 JSON
        header (sorted keys), then little-endian float32 blobs in the order
        the header's ``blobs`` list declares. Parameters and buffers come
        first, then the Adam first and second moments.
    """
    model_config: ModelConfig
    state: Dict[str, np.ndarray]
    epoch: int = 0
    optimizer: Dict[str, Any] = field(default_factory=dict)
    moments: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    scheduler: Dict[str, Any] = field(default_factory=dict)
    history: List[Dict[str, Any]] = field(default_factory=list)
    rng: Dict[str, Any] = field(default_factory=dict)
    run_config: Optional[Dict[str, Any]] = None

    @classmethod
    def from_model(cls, model: Model, **kwargs: Any) -> "Checkpoint":
        return cls(model.config, {k: np.array(v) for k, v in model.state_dict().items()}, **kwargs)

    def build_model(self, seed: int = 0) -> Model:
        model = build(self.model_config, seed)
        try:
            model.load_state_dict(self.state)
        except KeyError as exc:
            raise CheckpointException(f"checkpoint does not fit a {self.model_config.kind} model: {exc}")
        model.eval()
        return model

    def _blob_plan(self) -> List[tuple]:
        plan = [("state", name, arr) for name, arr in self.state.items()]
        for group in ("m", "v"):
            plan.extend((group, name, arr) for name, arr in self.moments.get(group, {}).items())
        return plan

    def to_bytes(self) -> bytes:
        plan = self._blob_plan()
        header = {
            "model": self.model_config.to_dict(),
            "epoch": self.epoch,
            "optimizer": self.optimizer,
            "scheduler": self.scheduler,
            "history": self.history,
            "rng": self.rng,
            "run_config": self.run_config,
            "blobs": [{"group": g, "name": n, "shape": list(np.shape(a))} for g, n, a in plan],
        }
        raw_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        blobs = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, _, a in plan)
        return MAGIC + struct.pack("<II", FORMAT_VERSION, len(raw_header)) + raw_header + blobs

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if raw[:4] != MAGIC:
            raise CheckpointException("not a springverb checkpoint (bad magic)")
        if len(raw) < 12:
            raise CheckpointException("checkpoint header is truncated")
        version, header_len = struct.unpack("<II", raw[4:12])
        if version != FORMAT_VERSION:
            raise CheckpointException(f"unsupported checkpoint version {version}")
        try:
            header = json.loads(raw[12:12 + header_len].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointException(f"corrupt checkpoint header: {exc}") from exc

        offset = 12 + header_len
        groups: Dict[str, Dict[str, np.ndarray]] = {"state": {}, "m": {}, "v": {}}
        for blob in header["blobs"]:
            shape = tuple(blob["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + 4 * count
            if end > len(raw):
                raise CheckpointException(f"blob {blob['name']} is truncated")
            groups[blob["group"]][blob["name"]] = \
                np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).astype(np.float32)
            offset = end
        if offset != len(raw):
            raise CheckpointException(f"{len(raw) - offset} trailing bytes after the last blob")

        try:
            config = ModelConfig.from_dict(header["model"])
        except ModelException as exc:
            raise CheckpointException(f"checkpoint model config is invalid: {exc}") from exc
        moments = {g: groups[g] for g in ("m", "v") if groups[g]}
        return cls(config, groups["state"], header["epoch"], header["optimizer"], moments,
                   header["scheduler"], header["history"], header["rng"], header["run_config"])

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        try:
            tmp.write_bytes(self.to_bytes())
            tmp.replace(path)
        except OSError as exc:
            raise CheckpointException(f"cannot write checkpoint {path}: {exc}") from exc
        logger.debug("Saved checkpoint %s (epoch %d)", path, self.epoch)
        return path

    @classmethod
    def load(cls, path: PathLike) -> "Checkpoint":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointException(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(raw)
