import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .exceptions import SpringverbException
from .tensor import Tensor

__all__ = [
    "AudioClip", "AudioError", "MalformedHeaderError", "UnsupportedCodecError",
    "TruncatedDataError", "read_wav", "write_wav", "PIPELINE_RATES",
]

logger = logging.getLogger(__name__)

PIPELINE_RATES = (16000, 48000)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# GUID tail shared by every KSDATAFORMAT_SUBTYPE_* (RFC-2361), little-endian
_GUID_TAIL = b'\x00\x00\x10\x00\x80\x00\x00\xAA\x00\x38\x9B\x71'

PathLike = Union[str, Path]


class AudioError(SpringverbException):
    pass


class MalformedHeaderError(AudioError):
    pass


class UnsupportedCodecError(AudioError):
    pass


class TruncatedDataError(AudioError):
    pass


class AudioClip:
    """ Mono clip with nominal samples in ``[-1, 1]``. """

    def __init__(
        self,
        samples: Union[Tensor, np.ndarray],
        sample_rate: int,
        channels: int = 1,
        path: Optional[str] = None,
    ) -> None:
        if not isinstance(samples, Tensor):
            samples = Tensor(np.asarray(samples, dtype=np.float32).reshape(-1))
        if samples.ndim != 1:
            raise AudioError(f"AudioClip holds mono samples, got shape {samples.shape}")
        self.samples = samples
        self.sample_rate = int(sample_rate)
        # channel count of the source before downmixing
        self.channels = channels
        self.path = path

    @property
    def downmixed(self) -> bool:
        return self.channels > 1

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def numpy(self) -> np.ndarray:
        return self.samples.numpy()

    def padded(self, length: int) -> "AudioClip":
        """ Zero-pad at the tail up to ``length`` samples. """
        data = self.samples.data
        if length <= data.shape[0]:
            return self
        out = np.zeros(length, dtype=data.dtype)
        out[:data.shape[0]] = data
        return AudioClip(out, self.sample_rate, self.channels, self.path)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __str__(self) -> str:
        name = self.path or "clip"
        return f"{name}({len(self)} @ {self.sample_rate} Hz)"


def _parse_fmt(body: bytes) -> tuple:
    if len(body) < 16:
        raise MalformedHeaderError(f"fmt chunk too short ({len(body)} bytes)")
    format_tag, channels, rate, byte_rate, block_align, bits = struct.unpack('<HHIIHH', body[:16])
    if format_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedHeaderError("WAVE_FORMAT_EXTENSIBLE fmt chunk is truncated")
        guid = body[24:40]
        if not guid.endswith(_GUID_TAIL):
            raise UnsupportedCodecError(f"Unknown extensible sub-format {guid.hex()}")
        format_tag = struct.unpack('<I', guid[:4])[0]
    if channels < 1 or rate < 1:
        raise MalformedHeaderError(f"fmt chunk declares {channels} channels at {rate} Hz")
    if block_align != channels * ((bits + 7) // 8):
        raise MalformedHeaderError(
            f"block_align {block_align} inconsistent with {channels} x {bits}-bit samples")
    return format_tag, channels, rate, bits


def _decode(raw: bytes, format_tag: int, bits: int) -> np.ndarray:
    if format_tag == WAVE_FORMAT_PCM and bits == 16:
        return np.frombuffer(raw, dtype='<i2').astype(np.float32) / np.float32(32768)
    if format_tag == WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = (ints ^ 0x800000) - 0x800000
        return ints.astype(np.float32) / np.float32(8388608)
    if format_tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        return np.frombuffer(raw, dtype='<f4').astype(np.float32)
    kind = {WAVE_FORMAT_PCM: "PCM", WAVE_FORMAT_IEEE_FLOAT: "IEEE float"}.get(
        format_tag, f"format tag {format_tag:#06x}")
    raise UnsupportedCodecError(f"Unsupported codec: {kind} {bits}-bit")


def read_wav(path: PathLike) -> AudioClip:
    """ Read a RIFF/WAVE file (PCM16, PCM24 or float32) as a mono clip. """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != b'RIFF' or blob[8:12] != b'WAVE':
        raise MalformedHeaderError(f"{path}: not a RIFF/WAVE file")

    fmt, data = None, None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos:pos + 4]
        size = struct.unpack('<I', blob[pos + 4:pos + 8])[0]
        body_start = pos + 8
        if chunk_id == b'fmt ':
            if body_start + size > len(blob):
                raise MalformedHeaderError(f"{path}: fmt chunk runs past end of file")
            fmt = _parse_fmt(blob[body_start:body_start + size])
        elif chunk_id == b'data':
            if fmt is None:
                raise MalformedHeaderError(f"{path}: data chunk before fmt chunk")
            if body_start + size > len(blob):
                raise TruncatedDataError(
                    f"{path}: data chunk declares {size} bytes, "
                    f"only {len(blob) - body_start} present")
            data = blob[body_start:body_start + size]
            break
        # other chunks are skipped, odd sizes carry a pad byte
        pos = body_start + size + (size & 1)

    if fmt is None:
        raise MalformedHeaderError(f"{path}: missing fmt chunk")
    if data is None:
        raise MalformedHeaderError(f"{path}: missing data chunk")

    format_tag, channels, rate, bits = fmt
    frame_bytes = channels * ((bits + 7) // 8)
    if len(data) % frame_bytes:
        raise TruncatedDataError(f"{path}: data chunk ends inside a sample frame")

    samples = _decode(data, format_tag, bits).reshape(-1, channels)
    if channels > 1:
        samples = samples.mean(axis=1, dtype=np.float64).astype(np.float32)
        logger.debug("%s: downmixed %d channels to mono", path, channels)
    else:
        samples = samples[:, 0]
    return AudioClip(samples, rate, channels=channels, path=str(path))


def _encode(samples: np.ndarray, bit_depth: Union[int, str]) -> tuple:
    if bit_depth == 16:
        ints = np.clip(np.round(samples.astype(np.float64) * 32768), -32768, 32767)
        return WAVE_FORMAT_PCM, 16, ints.astype('<i2').tobytes()
    if bit_depth == 24:
        ints = np.clip(np.round(samples.astype(np.float64) * 8388608), -8388608, 8388607)
        raw = ints.astype('<i4').view(np.uint8).reshape(-1, 4)[:, :3]
        return WAVE_FORMAT_PCM, 24, raw.tobytes()
    if bit_depth in (32, "float32", "float"):
        return WAVE_FORMAT_IEEE_FLOAT, 32, samples.astype('<f4').tobytes()
    raise UnsupportedCodecError(f"Unsupported bit depth {bit_depth!r}, use 16, 24 or 'float32'")


def write_wav(clip: AudioClip, path: PathLike, bit_depth: Union[int, str] = 16) -> int:
    """ Write ``clip`` as a mono WAV file; returns the number of clipped samples. """
    samples = np.nan_to_num(clip.samples.data.astype(np.float32), nan=0.0)
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    if clipped:
        logger.warning("%s: clipped %d samples to [-1, 1]", path, clipped)
    samples = np.clip(samples, -1.0, 1.0)

    format_tag, bits, payload = _encode(samples, bit_depth)
    block_align = bits // 8
    fmt_body = struct.pack('<HHIIHH', format_tag, 1, clip.sample_rate,
                           clip.sample_rate * block_align, block_align, bits)
    pad = b'\x00' if len(payload) % 2 else b''
    riff_size = 4 + (8 + len(fmt_body)) + (8 + len(payload) + len(pad))
    header = b''.join([
        b'RIFF', struct.pack('<I', riff_size), b'WAVE',
        b'fmt ', struct.pack('<I', len(fmt_body)), fmt_body,
        b'data', struct.pack('<I', len(payload)),
    ])
    try:
        Path(path).write_bytes(header + payload + pad)
    except OSError as exc:
        raise AudioError(f"Cannot write {path}: {exc}") from exc
    return clipped
