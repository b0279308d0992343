import json
import logging
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .audio import AudioClip, read_wav
from .exceptions import SpringverbException
from .tensor import Tensor
from .utils import dump_json, load_json

__all__ = [
    "DatasetException", "ManifestEntry", "DatasetManifest", "SamplePair", "Batch",
    "build_manifest", "load_pairs", "segment_plan", "batch_segments", "prefetch",
    "SPLITS", "DEFAULT_COND_DIM", "default_segment_len",
]

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
DEFAULT_COND_DIM = 2
MANIFEST_VERSION = 1
AUDIO_SUFFIXES = (".wav", ".WAV")

PathLike = Union[str, Path]


class DatasetException(SpringverbException):
    pass


def default_segment_len(sample_rate: int) -> int:
    """ 2 s at 16 kHz (one full note), 2.5 s otherwise. """
    return 2 * sample_rate if sample_rate <= 16000 else int(2.5 * sample_rate)


@dataclass(frozen=True)
class ManifestEntry:
    dry: str
    wet: str
    cond: tuple
    split: str

    def to_dict(self) -> dict:
        return {"dry": self.dry, "wet": self.wet, "cond": list(self.cond), "split": self.split}


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    sample_rate: int
    seed: int
    version: int = field(default=MANIFEST_VERSION)

    @property
    def cond_dim(self) -> int:
        return len(self.entries[0].cond) if self.entries else DEFAULT_COND_DIM

    def split(self, name: str) -> List[ManifestEntry]:
        if name not in SPLITS:
            raise DatasetException(f"Unknown split {name!r}, expected one of {SPLITS}")
        return [e for e in self.entries if e.split == name]

    def split_sizes(self) -> Dict[str, int]:
        return {name: len(self.split(name)) for name in SPLITS}

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        try:
            entries = [ManifestEntry(e["dry"], e["wet"], tuple(float(v) for v in e["cond"]), e["split"])
                       for e in data["entries"]]
            manifest = cls(entries, int(data["sample_rate"]), int(data["seed"]),
                           int(data.get("version", MANIFEST_VERSION)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetException(f"Malformed manifest: {exc}") from exc
        manifest.validate()
        return manifest

    def save(self, path: PathLike) -> None:
        dump_json(path, self.to_dict())

    @classmethod
    def load(cls, path: PathLike) -> "DatasetManifest":
        """ Explicit manifest, e.g. for corpora that do not pair by file name. """
        try:
            data = load_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetException(f"Cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        seen: Dict[str, str] = {}
        dims = {len(e.cond) for e in self.entries}
        if len(dims) > 1:
            raise DatasetException(f"Conditioning vectors have mixed lengths {sorted(dims)}")
        for e in self.entries:
            if e.split not in SPLITS:
                raise DatasetException(f"Entry {e.dry} has unknown split {e.split!r}")
            for path in (e.dry, e.wet):
                if seen.setdefault(path, e.split) != e.split:
                    raise DatasetException(f"{path} appears in splits {seen[path]} and {e.split}")


def _split_counts(n: int) -> Dict[str, int]:
    train = int(np.floor(0.6 * n))
    val = int(np.floor(0.2 * n))
    return {"train": train, "val": val, "test": n - train - val}


def _audio_files(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        raise DatasetException(f"{directory} is not a directory")
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix in AUDIO_SUFFIXES}


def _wav_rate(path: Path) -> int:
    return read_wav(path).sample_rate


def build_manifest(
    dry_dir: PathLike,
    wet_dir: PathLike,
    seed: int,
    cond_source: Optional[PathLike] = None,
) -> DatasetManifest:
    """ Pair dry/wet files by stem, shuffle under ``seed``, assign 60/20/20. """
    dry, wet = _audio_files(Path(dry_dir)), _audio_files(Path(wet_dir))
    orphans = sorted(set(dry) ^ set(wet))
    if orphans:
        raise DatasetException(f"Unmatched dry/wet files: {', '.join(orphans)}")
    if not dry:
        raise DatasetException(f"No WAV files found in {dry_dir}")

    stems = sorted(dry)
    rates = {stem: (_wav_rate(dry[stem]), _wav_rate(wet[stem])) for stem in stems}
    distinct = {r for pair in rates.values() for r in pair}
    if len(distinct) > 1:
        raise DatasetException(f"Mixed sample rates in corpus: {sorted(distinct)}")

    cond_map: Dict[str, Sequence[float]] = {}
    if cond_source is not None:
        try:
            cond_map = load_json(cond_source)
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetException(f"Cannot read conditioning source {cond_source}: {exc}") from exc
        if not isinstance(cond_map, dict):
            raise DatasetException(f"{cond_source}: expected an object mapping file stems to values")

    order = np.random.default_rng(seed).permutation(len(stems))
    counts = _split_counts(len(stems))
    labels = ["train"] * counts["train"] + ["val"] * counts["val"] + ["test"] * counts["test"]
    assigned = {stems[i]: labels[rank] for rank, i in enumerate(order)}

    entries = [
        ManifestEntry(str(dry[stem]), str(wet[stem]),
                      tuple(float(v) for v in cond_map.get(stem, (0.0,) * DEFAULT_COND_DIM)),
                      assigned[stem])
        for stem in stems
    ]
    manifest = DatasetManifest(entries, distinct.pop(), seed)
    manifest.validate()
    logger.info("Built manifest with %d pairs: %s", len(entries), manifest.split_sizes())
    return manifest


class SamplePair:
    def __init__(self, dry: AudioClip, wet: AudioClip,
                 cond: Sequence[float], split: str) -> None:
        if dry.sample_rate != wet.sample_rate:
            raise DatasetException(
                f"Sample rate mismatch in pair {dry.path}: {dry.sample_rate} vs {wet.sample_rate}")
        length = max(len(dry), len(wet))
        if len(dry) != len(wet):
            logger.warning("%s: zero-padded %d samples at the tail to pair lengths",
                           dry.path if len(dry) < len(wet) else wet.path, abs(len(dry) - len(wet)))
        self.dry = dry.padded(length)
        self.wet = wet.padded(length)
        self.cond = tuple(float(v) for v in cond)
        self.split = split

    @property
    def sample_rate(self) -> int:
        return self.dry.sample_rate

    def __len__(self) -> int:
        return len(self.dry)

    def __str__(self) -> str:
        return f"SamplePair({self.dry}, {self.split})"


def load_pairs(manifest: DatasetManifest, split: str) -> List[SamplePair]:
    pairs = []
    for entry in manifest.split(split):
        pair = SamplePair(read_wav(entry.dry), read_wav(entry.wet), entry.cond, entry.split)
        if pair.sample_rate != manifest.sample_rate:
            raise DatasetException(
                f"{entry.dry}: {pair.sample_rate} Hz in a {manifest.sample_rate} Hz manifest")
        pairs.append(pair)
    return pairs


class Batch(NamedTuple):
    dry: Tensor
    wet: Tensor
    cond: Tensor


def segment_plan(lengths: Sequence[int], segment_len: int) -> List[tuple]:
    """ (clip index, start) of every non-overlapping segment, clips in order. """
    plan = []
    for clip, length in enumerate(lengths):
        starts = range(0, max(length, 1), segment_len)
        plan.extend((clip, start) for start in starts)
    return plan


def _cut(samples: np.ndarray, start: int, segment_len: int) -> np.ndarray:
    piece = samples[start:start + segment_len]
    if piece.shape[0] == segment_len:
        return piece
    out = np.zeros(segment_len, dtype=samples.dtype)
    out[:piece.shape[0]] = piece
    return out


def batch_segments(
    source: Union[DatasetManifest, Sequence[SamplePair]],
    split: str,
    segment_len: int,
    batch_size: int,
    seed: int,
    epoch: int = 0,
    shuffle: bool = True,
) -> Iterator[Batch]:
    """ Yield ``(dry [B,1,L], wet [B,1,L], cond [B,C])`` covering every clip once.

        Long clips are cut into consecutive segments, the ragged tail is
        zero-padded; segment order is shuffled from ``seed + epoch``.
    """
    pairs = load_pairs(source, split) if isinstance(source, DatasetManifest) \
        else [p for p in source if p.split == split]
    if not pairs:
        raise DatasetException(f"Split {split!r} is empty")
    if batch_size < 1 or segment_len < 1:
        raise DatasetException("batch_size and segment_len must be positive")
    shortest = min(len(p) for p in pairs)
    if segment_len > shortest:
        raise DatasetException(
            f"segment_len {segment_len} exceeds the shortest {split} clip ({shortest} samples)")

    plan = segment_plan([len(p) for p in pairs], segment_len)
    if shuffle:
        order = np.random.default_rng(seed + epoch).permutation(len(plan))
        plan = [plan[i] for i in order]

    dry_data = [p.dry.samples.data for p in pairs]
    wet_data = [p.wet.samples.data for p in pairs]
    for first in range(0, len(plan), batch_size):
        chunk = plan[first:first + batch_size]
        dry = np.stack([_cut(dry_data[c], s, segment_len) for c, s in chunk])[:, None, :]
        wet = np.stack([_cut(wet_data[c], s, segment_len) for c, s in chunk])[:, None, :]
        cond = np.array([pairs[c].cond for c, _ in chunk], dtype=dry.dtype)
        yield Batch(Tensor(dry), Tensor(wet), Tensor(cond.reshape(len(chunk), -1)))


_DONE = object()


def prefetch(stream: Iterator[Batch], depth: int = 2) -> Iterator[Batch]:
    """ Produce ``stream`` on a background thread through a bounded queue.

        A single producer keeps the order identical to the wrapped stream.
    """
    buffer: "queue.Queue" = queue.Queue(maxsize=max(1, depth))
    failure: List[BaseException] = []

    def _produce():
        try:
            for item in stream:
                buffer.put(item)
        except BaseException as exc:  # re-raised on the consumer side
            failure.append(exc)
        finally:
            buffer.put(_DONE)

    worker = threading.Thread(target=_produce, name="springverb-prefetch", daemon=True)
    worker.start()
    while (item := buffer.get()) is not _DONE:
        yield item
    worker.join()
    if failure:
        raise failure[0]
