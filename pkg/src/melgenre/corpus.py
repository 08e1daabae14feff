"""Synthetic stand-ins for the private song collection.

Two generators share one label-assignment routine:

``reference_manifest`` rebuilds a manifest (no audio) whose genre column
counts equal the reference per-genre song counts over 18019 tracks.

``synth_corpus`` writes a small audio corpus in which every genre has an
audible signature (harmonic tone, chirp, noise band or pulsed tone at its
own centre frequency), so genre presence is recoverable from spectra.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, encode_wav
from .dataset import (
    REFERENCE_GENRES, REFERENCE_COUNTS, TOTAL_TRACKS, GenreTable, TrackRecord, largest_remainder,
    make_rng, manifest_text, write_genre_table,
)

LABEL_MULTIPLICITY = sum(REFERENCE_COUNTS.values()) / TOTAL_TRACKS
MAX_GENRES_PER_TRACK = 3

# subgenres spanning two genres; the first mirrors the example in the source data
FUSIONS = {
    ("Electronic", "Industrial & Noise"): "electro-industrial",
    ("Hip-Hop", "Rock"): "rap rock",
    ("Electronic", "Pop"): "synth-pop",
    ("Rock", "Psychedelia"): "psychedelic rock",
    ("Pop", "Dance"): "dance-pop",
    ("Hip-Hop", "Jazz"): "jazz rap",
    ("Rock", "Folk"): "folk rock",
    ("Metal", "Punk"): "crossover thrash",
    ("Hip-Hop", "R&B"): "contemporary r&b",
    ("Electronic", "Ambient"): "ambient techno",
}


def slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def core_subgenre(genre: str) -> str:
    return f"{slug(genre)} core"


def reference_genre_table(genres=REFERENCE_GENRES) -> GenreTable:
    entries = {core_subgenre(g): (g,) for g in genres}
    for pair, name in FUSIONS.items():
        if all(g in genres for g in pair):
            entries[name] = pair
    return GenreTable(entries, tuple(genres))


def genre_label_counts(size: int, weights, multiplicity: float = LABEL_MULTIPLICITY) -> np.ndarray:
    """Per-genre track counts for ``size`` tracks at the given labels-per-track ratio.

    A genre cannot exceed ``size``; any excess is reapportioned over the rest.
    """
    weights = np.asarray(weights, dtype=np.float64)
    total = int(round(size * multiplicity))
    if total > size * min(len(weights), MAX_GENRES_PER_TRACK):
        raise ValueError("too many labels for the number of tracks and genres")
    counts = np.zeros(len(weights), dtype=np.int64)
    capped = np.zeros(len(weights), dtype=bool)
    while True:
        free = ~capped
        counts[free] = largest_remainder(total - size * int(capped.sum()), weights[free])
        over = free & (counts > size)
        if not over.any():
            return counts
        counts[over] = size
        capped |= over


def assign_labels(size: int, counts, rng: np.random.Generator) -> np.ndarray:
    """Binary (size, n_genres) matrix with exact column sums ``counts``.

    Every track receives one primary genre (apportioned proportionally to
    ``counts``); the remaining labels go to random tracks that lack that
    genre and hold fewer than three.
    """
    counts = np.asarray(counts, dtype=np.int64)
    k = counts.shape[0]
    if counts.sum() < size:
        raise ValueError("fewer labels than tracks")
    primary = largest_remainder(size, counts)
    primary = np.minimum(primary, counts)
    # any shortfall from the cap goes to genres with spare labels
    short = size - primary.sum()
    for j in np.argsort(-(counts - primary), kind="stable"):
        if short == 0:
            break
        take = min(short, counts[j] - primary[j])
        primary[j] += take
        short -= take
    Y = np.zeros((size, k), dtype=np.uint8)
    Y[np.arange(size), rng.permutation(np.repeat(np.arange(k), primary))] = 1
    for j in np.argsort(-(counts - primary), kind="stable"):
        extra = int(counts[j] - primary[j])
        if extra == 0:
            continue
        eligible = np.flatnonzero((Y[:, j] == 0) & (Y.sum(axis=1) < MAX_GENRES_PER_TRACK))
        if eligible.size < extra:
            raise ValueError("cannot place all labels within the three-genre bound")
        # prefer tracks with fewer labels so nothing saturates early
        load = Y[eligible].sum(axis=1)
        order = np.lexsort((rng.random(eligible.size), load))
        Y[eligible[order[:extra]], j] = 1
    return Y


def subgenres_for(genres, rng: np.random.Generator, fusion_prob: float = 0.5) -> tuple:
    genres = list(genres)
    if len(genres) == 2:
        name = FUSIONS.get(tuple(genres)) or FUSIONS.get(tuple(reversed(genres)))
        if name and rng.random() < fusion_prob:
            return (name,)
    return tuple(core_subgenre(g) for g in genres)


def reference_manifest(seed: int = 0) -> tuple[list, GenreTable]:
    """18019 tracks whose genre column sums equal the reference song counts."""
    table = reference_genre_table()
    rng = make_rng(seed, "reference-manifest")
    counts = np.array(list(REFERENCE_COUNTS.values()))
    Y = assign_labels(TOTAL_TRACKS, counts, rng)
    records = []
    for i in range(TOTAL_TRACKS):
        genres = [g for g, on in zip(REFERENCE_GENRES, Y[i]) if on]
        records.append(TrackRecord(f"ref{i:05d}", f"ref{i:05d}.wav",
                                   subgenres_for(genres, rng), tuple(genres)))
    return records, table


# --- audio ---------------------------------------------------------------------

SIGNATURE_KINDS = ("harmonic", "chirp", "noise-band", "pulsed")
F_LOW, F_HIGH = 150.0, 8000.0


@dataclass(frozen=True)
class GenreSignature:
    genre: str
    kind: str
    center_hz: float


def signatures_for(genres) -> list:
    n = len(genres)
    # spread over the 16 signature slots so small sets stay far apart
    slots = [0] if n == 1 else [round(i * 15 / (n - 1)) for i in range(n)]
    sigs = []
    for g, slot in zip(genres, slots):
        f = F_LOW * (F_HIGH / F_LOW) ** (slot / 15)
        sigs.append(GenreSignature(g, SIGNATURE_KINDS[slot % 4], f))
    return sigs


def _render_signature(sig: GenreSignature, n: int, sr: int, rng) -> np.ndarray:
    t = np.arange(n) / sr
    f = sig.center_hz * rng.uniform(0.92, 1.08)
    if sig.kind == "harmonic":
        return sum(np.sin(2 * np.pi * h * f * t + rng.uniform(0, 2 * np.pi)) / h
                   for h in (1, 2, 3) if h * f < sr / 2)
    if sig.kind == "chirp":
        f0, f1 = f / 1.2, min(f * 1.2, sr / 2 * 0.95)
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * t[-1] if n > 1 else 1))
        return np.sin(phase)
    if sig.kind == "noise-band":
        spec = np.fft.rfft(rng.normal(size=n))
        freqs = np.fft.rfftfreq(n, 1 / sr)
        spec[(freqs < f / 1.15) | (freqs > f * 1.15)] = 0
        band = np.fft.irfft(spec, n)
        return band / (np.abs(band).max() + 1e-12)
    envelope = 0.5 * (1 + np.sign(np.sin(2 * np.pi * 4.0 * t)))
    return envelope * np.sin(2 * np.pi * f * t)


def synth_track(genre_flags, signatures, duration: float, sr: int, rng) -> np.ndarray:
    n = int(round(duration * sr))
    mix = rng.normal(scale=rng.uniform(0.01, 0.06), size=n)
    for on, sig in zip(genre_flags, signatures):
        if on:
            mix += rng.uniform(0.3, 1.0) * _render_signature(sig, n, sr, rng)
    # distractor tones kept clear of every signature band, so classes stay separable
    t = np.arange(n) / sr
    centres = np.array([s.center_hz for s in signatures])
    for _ in range(rng.poisson(0.8)):
        f = rng.uniform(100, 9000)
        if np.all(np.abs(np.log(f / centres)) > np.log(1.35)):
            mix += rng.uniform(0.05, 0.4) * np.sin(2 * np.pi * f * t)
    return 0.9 * mix / (np.abs(mix).max() + 1e-12)


def synthetic_genres(n_genres: int) -> tuple:
    if n_genres == len(REFERENCE_GENRES):
        return REFERENCE_GENRES
    return tuple(f"synth-{i + 1:02d}" for i in range(n_genres))


def synthetic_weights(n_genres: int) -> np.ndarray:
    """Reference counts for the full set; otherwise geometric steps between the extremes."""
    if n_genres == len(REFERENCE_GENRES):
        return np.array(list(REFERENCE_COUNTS.values()), dtype=np.float64)
    hi, lo = max(REFERENCE_COUNTS.values()), min(REFERENCE_COUNTS.values())
    if n_genres == 1:
        return np.array([float(hi)])
    return hi * (lo / hi) ** (np.arange(n_genres) / (n_genres - 1))


@dataclass
class SynthCorpus:
    records: list
    table: GenreTable
    manifest_path: Path
    genre_table_path: Path
    audio_dir: Path


def synth_corpus(out_dir, size: int = 320, n_genres: int = 4, seed: int = 0,
                 duration: float = 1.5, sample_rate: int = 22050,
                 multiplicity: float = LABEL_MULTIPLICITY) -> SynthCorpus:
    """Write WAV files, ``manifest.csv`` and ``genres.csv`` under ``out_dir``."""
    if size < 1 or n_genres < 1:
        raise ValueError("size and n_genres must be positive")
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    genres = synthetic_genres(n_genres)
    table = reference_genre_table(genres)
    counts = genre_label_counts(size, synthetic_weights(n_genres), multiplicity)
    labels = assign_labels(size, counts, make_rng(seed, "synth-labels"))
    sigs = signatures_for(genres)
    records = []
    for i in range(size):
        rng = make_rng(seed, "synth-track", i)
        gs = [g for g, on in zip(genres, labels[i]) if on]
        tid = f"t{i:04d}"
        samples = synth_track(labels[i], sigs, duration, sample_rate, rng)
        wav = encode_wav(AudioBuffer(samples, sample_rate, tid), "pcm16")
        (audio_dir / f"{tid}.wav").write_bytes(wav)
        records.append(TrackRecord(tid, f"{tid}.wav", subgenres_for(gs, rng), tuple(gs)))
    manifest_path = out_dir / "manifest.csv"
    manifest_path.write_text(manifest_text(records), encoding="utf-8")
    table_path = out_dir / "genres.csv"
    write_genre_table(table, table_path)
    return SynthCorpus(records, table, manifest_path, table_path, audio_dir)
