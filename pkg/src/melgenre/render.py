"""Spectrogram images as binary PPM rasters."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import EmptyInputError
from .dsp import Spectrogram

# viridis sampled at 16 evenly spaced points
VIRIDIS_ANCHORS = np.array([
    [68, 1, 84], [72, 26, 108], [71, 47, 125], [65, 68, 135],
    [57, 86, 140], [49, 104, 142], [42, 120, 142], [35, 136, 142],
    [31, 152, 139], [34, 168, 132], [53, 183, 121], [84, 197, 104],
    [122, 209, 81], [165, 219, 54], [210, 226, 27], [253, 231, 37],
], dtype=np.float64)


@dataclass(frozen=True)
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array {px.shape} does not match {self.height}x{self.width}")
        object.__setattr__(self, "pixels", px)


def _viridis(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    pos = t * (len(VIRIDIS_ANCHORS) - 1)
    lo = np.minimum(np.floor(pos).astype(int), len(VIRIDIS_ANCHORS) - 2)
    frac = (pos - lo)[..., None]
    rgb = VIRIDIS_ANCHORS[lo] * (1.0 - frac) + VIRIDIS_ANCHORS[lo + 1] * frac
    return np.floor(rgb + 0.5).astype(np.uint8)


def colormap_viridis(t: float) -> tuple[int, int, int]:
    if not math.isfinite(t):
        raise ValueError("colormap input must be finite")
    r, g, b = _viridis(np.array(t, dtype=np.float64))
    return int(r), int(g), int(b)


def render_spectrogram(spec: Spectrogram, flip_vertical: bool = True) -> RasterImage:
    """One pixel per cell; with ``flip_vertical`` the lowest band is the bottom row."""
    values = spec.values
    if values.size == 0:
        raise EmptyInputError("cannot render an empty spectrogram")
    lo, hi = values.min(), values.max()
    if hi > lo:
        t = (values - lo) / (hi - lo)
    else:
        t = np.full(values.shape, 0.5)
    if flip_vertical:
        t = t[::-1]
    height, width = t.shape
    return RasterImage(width, height, _viridis(t))


def ppm_bytes(image: RasterImage) -> bytes:
    if image.width == 0 or image.height == 0:
        raise ValueError("cannot encode an empty image")
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def write_ppm(image: RasterImage, path) -> None:
    data = ppm_bytes(image)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def read_ppm(path) -> RasterImage:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    width, height = (int(v) for v in parts[1].split())
    px = np.frombuffer(parts[3], dtype=np.uint8)
    if px.size != width * height * 3:
        raise ValueError(f"{path}: pixel payload has {px.size} bytes")
    return RasterImage(width, height, px.reshape(height, width, 3))
