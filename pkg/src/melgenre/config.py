"""Experiment configuration: flat ``key = value`` files with CLI overrides.

Precedence is command line over file over defaults. Relative paths in a
config file resolve against the file's directory.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .dsp import SpectrogramParams
from .model import TrainConfig

PATH_KEYS = ("manifest", "genre_table", "audio_root", "output_root")
PAIRING_MODES = ("cell", "model")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path = Path("manifest.csv")
    genre_table: Path = Path("genres.csv")
    audio_root: Path = Path("audio")
    output_root: Path = Path("out")
    seed: int = 0
    sample_rate: int = 22050
    n_fft: int = 2048
    hop_length: int = 512
    n_mels: int = 128
    mel_variant: str = "slaney"
    mel_norm: str = "slaney"
    fmin: float = 0.0
    fmax: float | None = None
    top_db: float | None = 80.0
    max_duration: float | None = None
    fraction: float = 0.1
    variants: tuple = (32, 64, 96, 128)
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    l2: float = 1e-4
    pairing: str = "cell"
    jobs: int = 1
    genres: tuple = ()

    def spectrogram_params(self) -> SpectrogramParams:
        return SpectrogramParams(self.sample_rate, self.n_fft, self.hop_length, self.n_mels,
                                 self.fmin, self.fmax, self.mel_variant, self.mel_norm,
                                 self.top_db)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed, self.l2)

    def canonical_items(self) -> list:
        """Experiment-defining settings; paths and worker count are excluded."""
        skip = set(PATH_KEYS) | {"jobs"}
        return [(f.name, _render(getattr(self, f.name))) for f in fields(self) if f.name not in skip]

    @property
    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in self.canonical_items())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def validate(self, need_inputs: bool = True) -> None:
        if need_inputs:
            for key in ("manifest", "genre_table"):
                if not getattr(self, key).is_file():
                    raise ConfigError(f"{key} file {getattr(self, key)} does not exist")
            if not self.audio_root.is_dir():
                raise ConfigError(f"audio_root {self.audio_root} is not a directory")
        if self.pairing not in PAIRING_MODES:
            raise ConfigError(f"pairing must be one of {PAIRING_MODES}")
        if not 0 < self.fraction < 1:
            raise ConfigError("fraction must lie in (0, 1)")
        if not self.variants or any(v < 1 for v in self.variants):
            raise ConfigError("variants must be a non-empty list of positive band counts")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        try:
            self.train_config()
            self.spectrogram_params().filterbank()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _convert(name: str, raw: str, base: Path | None):
    raw = raw.strip()
    kinds = {f.name: f for f in fields(ExperimentConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown config key {name!r}")
    default = kinds[name].default
    try:
        if name in PATH_KEYS:
            p = Path(raw).expanduser()
            return p if p.is_absolute() or base is None else base / p
        if name in ("fmax", "top_db", "max_duration"):
            return None if raw.lower() in ("none", "") else float(raw)
        if name == "variants":
            return tuple(int(v) for v in raw.replace(";", ",").split(",") if v.strip())
        if name == "genres":
            return tuple(v.strip() for v in raw.split(";") if v.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def parse_config_text(text: str, base: Path | None = None) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _convert(key, value, base)
    return values


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), path.parent))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = key.replace("-", "_")
        values[key] = _convert(key, raw, Path.cwd()) if isinstance(raw, str) else raw
    return replace(ExperimentConfig(), **values)


def config_text(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_render(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
