"""WAV decoding, linear resampling and test-tone synthesis.

Only RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples is accepted.
Everything is returned as a mono float64 buffer in [-1, 1].
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# trailing 14 bytes shared by every KSDATAFORMAT_SUBTYPE_* GUID
_GUID_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


class AudioError(ValueError):
    """Base class for audio decoding failures."""


class WavFormatError(AudioError):
    pass


class UnsupportedCodecError(AudioError):
    pass


class TruncatedDataError(AudioError):
    pass


class EmptyInputError(AudioError):
    pass


class AliasingError(AudioError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class _Format:
    tag: int
    channels: int
    sample_rate: int
    block_align: int
    bits: int


def _parse_fmt(body: bytes) -> _Format:
    if len(body) < 16:
        raise WavFormatError(f"fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", body)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise WavFormatError("WAVE_FORMAT_EXTENSIBLE fmt chunk too short")
        guid = body[24:40]
        if guid[2:] != _GUID_TAIL:
            raise UnsupportedCodecError("unrecognised extensible sub-format GUID")
        tag = struct.unpack_from("<H", guid)[0]
    return _Format(tag, channels, rate, block_align, bits)


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        start = pos + 8
        yield cid, start, size
        pos = start + size + (size & 1)


def decode_wav_bytes(data: bytes, source_id: str = "") -> AudioBuffer:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{source_id or 'input'}: not a RIFF/WAVE container")

    fmt = None
    payload = None
    for cid, start, size in _iter_chunks(data):
        if cid == b"fmt ":
            if start + size > len(data):
                raise WavFormatError("fmt chunk runs past end of file")
            fmt = _parse_fmt(data[start:start + size])
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError("data chunk precedes fmt chunk")
            if start + size > len(data):
                raise TruncatedDataError(
                    f"{source_id or 'input'}: data chunk declares {size} bytes, "
                    f"only {len(data) - start} present")
            payload = data[start:start + size]
            break
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if payload is None:
        raise WavFormatError("missing data chunk")

    if fmt.tag == WAVE_FORMAT_PCM and fmt.bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif fmt.tag == WAVE_FORMAT_IEEE_FLOAT and fmt.bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(
            f"format tag 0x{fmt.tag:04x} with {fmt.bits} bits is not supported "
            "(PCM16 and float32 only)")
    if fmt.channels not in (1, 2):
        raise UnsupportedCodecError(f"{fmt.channels} channels not supported")
    if fmt.sample_rate <= 0:
        raise WavFormatError("sample rate of zero")
    frame_bytes = fmt.channels * dtype.itemsize
    if len(payload) % frame_bytes:
        raise TruncatedDataError("data chunk ends mid-frame")

    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    raw = raw.reshape(-1, fmt.channels)
    mono = raw.mean(axis=1) if fmt.channels == 2 else raw[:, 0]
    if not np.all(np.isfinite(mono)):
        raise WavFormatError("non-finite float samples")
    return AudioBuffer(np.clip(mono, -1.0, 1.0), fmt.sample_rate, source_id)


def decode_wav(path) -> AudioBuffer:
    """Decode a PCM16 / float32 WAV file into a mono buffer."""
    path = Path(path)
    return decode_wav_bytes(path.read_bytes(), source_id=path.stem)


def encode_wav(buffer: AudioBuffer, encoding: str = "float32") -> bytes:
    if encoding == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        body = buffer.samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        ints = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767)
        body = ints.astype("<i2").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, buffer.sample_rate,
                      buffer.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def write_wav(buffer: AudioBuffer, path, encoding: str = "float32") -> None:
    Path(path).write_bytes(encode_wav(buffer, encoding))


def resample_linear(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample by linear interpolation between neighbouring samples.

    Output sample ``j`` sits at source position ``j * source_rate / target_rate``;
    positions past the last sample hold the last value.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    n = len(buffer)
    if n == 0:
        raise EmptyInputError("cannot resample an empty buffer")
    if target_rate == buffer.sample_rate:
        return buffer
    out_len = int(math.floor(n * target_rate / buffer.sample_rate + 0.5))
    pos = np.arange(out_len) * (buffer.sample_rate / target_rate)
    out = np.interp(pos, np.arange(n), buffer.samples)
    return AudioBuffer(out, int(target_rate), buffer.source_id)


def synth_tone(freq: float, duration: float, sample_rate: int,
               amplitude: float = 1.0) -> AudioBuffer:
    if not 0 < freq < sample_rate / 2:
        raise AliasingError(f"{freq} Hz is not below Nyquist ({sample_rate / 2} Hz)")
    if not 0 <= amplitude <= 1:
        raise ValueError("amplitude must lie in [0, 1]")
    n = np.arange(int(round(duration * sample_rate)))
    samples = amplitude * np.sin(2 * np.pi * freq * n / sample_rate)
    return AudioBuffer(samples, sample_rate, f"tone-{freq:g}Hz")
