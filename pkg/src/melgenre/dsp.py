"""Short-time spectra, mel filterbanks and decibel scaling.

The FFT is an iterative radix-2 transform vectorised over a batch of frames,
so an ``(n_frames, n_fft)`` block is transformed in ``log2(n_fft)`` numpy
passes. Defaults follow the usual MIR conventions: 22050 Hz, n_fft 2048,
hop 512, centred reflect padding, 128 Slaney mel bands with area
normalisation, and dB relative to the spectrogram maximum with an 80 dB
floor.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .audio_io import AudioBuffer, EmptyInputError


SAMPLE_RATE = 22050
N_FFT = 2048
HOP_LENGTH = 512
N_MELS = 128
AMIN = 1e-10
TOP_DB = 80.0

SCALES = ("power", "decibel")
KINDS = ("linear", "mel")
VARIANTS = ("htk", "slaney")
NORMALIZATIONS = ("none", "slaney")

# Slaney mel scale: linear below 1 kHz, log spacing above
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = 15.0
_LOGSTEP = math.log(6.4) / 27.0


class InsufficientDataError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class DegenerateFilterWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray
    scale: str
    kind: str
    sample_rate: int
    n_fft: int
    hop_length: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got shape {values.shape}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrogram values must be finite")
        if self.scale == "power" and values.size and values.min() < 0:
            raise ValueError("power spectrogram with negative entries")
        if self.kind == "linear" and values.shape[0] != self.n_fft // 2 + 1:
            raise ShapeError(
                f"linear spectrogram needs {self.n_fft // 2 + 1} rows, got {values.shape[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    fmin: float
    fmax: float
    variant: str
    normalization: str
    breakpoints: np.ndarray
    degenerate_rows: tuple = ()

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


def hann_window(n: int) -> np.ndarray:
    if n < 1:
        raise EmptyInputError("window length must be at least 1")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    out = x[..., _bit_reverse(n)]
    lead = out.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = out.reshape(*lead, n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        m *= 2
    return out


def dft(x: np.ndarray) -> np.ndarray:
    """Direct O(n^2) DFT, the reference the FFT is checked against."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ kernel.T


def frame_signal(samples: np.ndarray, n_fft: int, hop_length: int,
                 centered: bool = True) -> np.ndarray:
    if centered:
        samples = np.pad(samples, n_fft // 2, mode="reflect")
    if samples.shape[0] < n_fft:
        raise InsufficientDataError(
            f"signal of {samples.shape[0]} samples is shorter than one {n_fft}-sample frame")
    n_frames = 1 + (samples.shape[0] - n_fft) // hop_length
    starts = np.arange(n_frames) * hop_length
    return samples[starts[:, None] + np.arange(n_fft)]


def stft_power(buffer: AudioBuffer, n_fft: int = N_FFT, hop_length: int = HOP_LENGTH,
               centered: bool = True) -> Spectrogram:
    if n_fft < 1 or n_fft & (n_fft - 1):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if not 1 <= hop_length <= n_fft:
        raise ValueError(f"hop_length must lie in [1, n_fft], got {hop_length}")
    if len(buffer) == 0:
        raise EmptyInputError("cannot analyse an empty buffer")
    frames = frame_signal(buffer.samples, n_fft, hop_length, centered)
    spectrum = fft(frames * hann_window(n_fft))[:, : n_fft // 2 + 1]
    power = spectrum.real ** 2 + spectrum.imag ** 2
    return Spectrogram(power.T, "power", "linear", buffer.sample_rate, n_fft, hop_length)


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"mel variant must be one of {VARIANTS}, got {variant!r}")


def hz_to_mel(f, variant: str = "slaney"):
    _check_variant(variant)
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise ValueError("frequency must be non-negative")
    if variant == "htk":
        m = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    else:
        lin = 3.0 * f_arr / 200.0
        with np.errstate(divide="ignore"):
            logpart = _MIN_LOG_MEL + np.log(np.maximum(f_arr, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
        m = np.where(f_arr >= _MIN_LOG_HZ, logpart, lin)
    return float(m) if m.ndim == 0 else m


def mel_to_hz(m, variant: str = "slaney"):
    _check_variant(variant)
    m_arr = np.asarray(m, dtype=np.float64)
    if np.any(m_arr < 0):
        raise ValueError("mel value must be non-negative")
    if variant == "htk":
        f = 700.0 * (10.0 ** (m_arr / 2595.0) - 1.0)
    else:
        lin = 200.0 * m_arr / 3.0
        logpart = _MIN_LOG_HZ * np.exp(_LOGSTEP * (np.maximum(m_arr, _MIN_LOG_MEL) - _MIN_LOG_MEL))
        f = np.where(m_arr >= _MIN_LOG_MEL, logpart, lin)
    return float(f) if f.ndim == 0 else f


def fft_frequencies(sample_rate: int, n_fft: int) -> np.ndarray:
    return np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)


def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   fmin: float = 0.0, fmax: float | None = None,
                   variant: str = "slaney", normalization: str = "slaney") -> MelFilterbank:
    """Triangular filters on breakpoints equally spaced in mel.

    ``normalization="slaney"`` scales each triangle to unit area (in Hz);
    ``"none"`` scales each row so its largest sampled weight is exactly 1.

    Rows that catch no FFT bin are left at zero and reported through a
    ``DegenerateFilterWarning`` and ``MelFilterbank.degenerate_rows``.
    """
    _check_variant(variant)
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    nyquist = sample_rate / 2
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ValueError(f"fmax {fmax} exceeds Nyquist {nyquist}")
    if not 0 <= fmin < fmax:
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")

    mels = np.linspace(hz_to_mel(fmin, variant), hz_to_mel(fmax, variant), n_mels + 2)
    pts = mel_to_hz(mels, variant)
    freqs = fft_frequencies(sample_rate, n_fft)
    widths = np.diff(pts)
    ramps = pts[:, None] - freqs[None, :]

    weights = np.zeros((n_mels, freqs.shape[0]))
    for i in range(n_mels):
        rising = -ramps[i] / widths[i]
        falling = ramps[i + 2] / widths[i + 1]
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
    if normalization == "slaney":
        weights *= (2.0 / (pts[2:] - pts[:-2]))[:, None]
    else:
        # bins rarely land on a centre, so lift each sampled triangle to a unit peak
        peak = weights.max(axis=1)
        weights[peak > 0] /= peak[peak > 0, None]

    degenerate = tuple(int(i) for i in np.flatnonzero(weights.max(axis=1) <= 0))
    if degenerate:
        warnings.warn(f"{len(degenerate)} mel filters contain no FFT bin: rows {degenerate[:8]}",
                      DegenerateFilterWarning, stacklevel=2)
    weights.setflags(write=False)
    return MelFilterbank(weights, float(fmin), float(fmax), variant, normalization, pts, degenerate)


def apply_filterbank(spec: Spectrogram, fb: MelFilterbank) -> Spectrogram:
    if spec.scale != "power" or spec.kind != "linear":
        raise ValueError("filterbank input must be a linear power spectrogram")
    if spec.values.shape[0] != fb.weights.shape[1]:
        raise ShapeError(
            f"spectrogram has {spec.values.shape[0]} rows, filterbank expects {fb.weights.shape[1]}")
    return Spectrogram(fb.weights @ spec.values, "power", "mel",
                       spec.sample_rate, spec.n_fft, spec.hop_length)


RefSpec = Union[float, Callable[[np.ndarray], float]]


def power_to_db(spec: Spectrogram, ref: RefSpec = 1.0, amin: float = AMIN,
                top_db: float | None = TOP_DB) -> Spectrogram:
    """Convert power to decibels, ``10 log10(max(S, amin) / ref)``.

    ``ref`` may be a callable (e.g. ``np.max``) evaluated on the values; its
    result is floored at ``amin`` so an all-zero input maps to 0 dB.
    """
    if spec.scale != "power":
        raise ValueError("power_to_db expects a power spectrogram")
    if amin <= 0:
        raise ValueError("amin must be positive")
    if callable(ref):
        ref_value = max(float(ref(spec.values)) if spec.values.size else 1.0, amin)
    else:
        ref_value = float(ref)
    if ref_value <= 0:
        raise ValueError("ref must be positive")
    db = 10.0 * np.log10(np.maximum(spec.values, amin) / ref_value)
    if top_db is not None:
        if top_db < 0:
            raise ValueError("top_db must be non-negative")
        if db.size:
            db = np.maximum(db, db.max() - top_db)
    return Spectrogram(db, "decibel", spec.kind, spec.sample_rate, spec.n_fft, spec.hop_length)


@dataclass(frozen=True)
class SpectrogramParams:
    sample_rate: int = SAMPLE_RATE
    n_fft: int = N_FFT
    hop_length: int = HOP_LENGTH
    n_mels: int = N_MELS
    fmin: float = 0.0
    fmax: float | None = None
    mel_variant: str = "slaney"
    mel_norm: str = "slaney"
    top_db: float | None = TOP_DB

    def filterbank(self) -> MelFilterbank:
        return mel_filterbank(self.sample_rate, self.n_fft, self.n_mels, self.fmin,
                              self.fmax, self.mel_variant, self.mel_norm)


def linear_and_mel_db(buffer: AudioBuffer, params: SpectrogramParams = SpectrogramParams(),
                      fb: MelFilterbank | None = None) -> tuple[Spectrogram, Spectrogram]:
    """Both compared representations of one buffer, in dB relative to their maxima."""
    if buffer.sample_rate != params.sample_rate:
        raise ValueError("resample the buffer to the configured rate first")
    power = stft_power(buffer, params.n_fft, params.hop_length, centered=True)
    mel = apply_filterbank(power, fb if fb is not None else params.filterbank())
    return (power_to_db(power, ref=np.max, top_db=params.top_db),
            power_to_db(mel, ref=np.max, top_db=params.top_db))


# --- SPG1 tensor files -----------------------------------------------------

SPG_MAGIC = b"SPG1"
_SPG_HEADER = struct.Struct("<4sIIBBIII")


class SpectrogramFileError(ValueError):
    pass


def spectrogram_to_bytes(spec: Spectrogram) -> bytes:
    rows, cols = spec.values.shape
    header = _SPG_HEADER.pack(SPG_MAGIC, rows, cols, SCALES.index(spec.scale),
                              KINDS.index(spec.kind), spec.sample_rate, spec.n_fft,
                              spec.hop_length)
    return header + np.ascontiguousarray(spec.values, dtype="<f4").tobytes()


def spectrogram_from_bytes(data: bytes) -> Spectrogram:
    if len(data) < _SPG_HEADER.size:
        raise SpectrogramFileError("file shorter than SPG1 header")
    magic, rows, cols, scale, kind, sr, n_fft, hop = _SPG_HEADER.unpack_from(data)
    if magic != SPG_MAGIC:
        raise SpectrogramFileError(f"bad magic {magic!r}")
    if scale >= len(SCALES) or kind >= len(KINDS):
        raise SpectrogramFileError("bad scale/kind code")
    expected = _SPG_HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise SpectrogramFileError(f"expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_SPG_HEADER.size).reshape(rows, cols)
    return Spectrogram(values.astype(np.float64), SCALES[scale], KINDS[kind], sr, n_fft, hop)


def write_spectrogram(spec: Spectrogram, path) -> None:
    Path(path).write_bytes(spectrogram_to_bytes(spec))


def read_spectrogram(path) -> Spectrogram:
    return spectrogram_from_bytes(Path(path).read_bytes())
