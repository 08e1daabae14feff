"""Multilabel manifest, genre table, test split and one-vs-all training subsets.

Randomness comes from numpy's PCG64 generator. Every draw is seeded from
``(seed, purpose, genre)`` through ``SeedSequence`` so per-genre subsets do
not depend on the order in which genres are processed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Retained genres and their song counts, largest first.
REFERENCE_COUNTS = {
    "Hip-Hop": 5641,
    "Electronic": 4680,
    "Rock": 4356,
    "Pop": 2758,
    "Psychedelia": 1367,
    "Metal": 1153,
    "Dance": 960,
    "Punk": 804,
    "R&B": 801,
    "Industrial & Noise": 788,
    "Experimental": 694,
    "Ambient": 687,
    "Folk": 652,
    "Classical Music": 608,
    "Singer-Songwriter": 474,
    "Jazz": 278,
}
REFERENCE_GENRES = tuple(REFERENCE_COUNTS)
TOTAL_TRACKS = 18019
MAX_SUBGENRES = 3
MAX_GENRES_PER_SUBGENRE = 2


class DatasetError(ValueError):
    pass


class ResolutionError(DatasetError):
    pass


class DuplicateTrackError(DatasetError):
    pass


class ManifestValidationError(DatasetError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sub_seed(seed: int, *parts) -> np.random.SeedSequence:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for part in parts:
        words.append(zlib.crc32(str(part).encode("utf-8")))
    return np.random.SeedSequence(words)


def make_rng(seed: int, *parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(sub_seed(seed, *parts)))


# --- genre table / manifest ----------------------------------------------------

@dataclass(frozen=True)
class GenreTable:
    entries: dict
    retained_genres: tuple

    def __post_init__(self):
        for sub, genres in self.entries.items():
            if not 1 <= len(genres) <= MAX_GENRES_PER_SUBGENRE:
                raise DatasetError(
                    f"subgenre {sub!r} maps to {len(genres)} genres (1 to 2 allowed)")
        if len(set(self.retained_genres)) != len(self.retained_genres):
            raise DatasetError("retained genres contain duplicates")

    def resolve(self, subgenres: Iterable[str]) -> list[str]:
        """Broad retained genres for a list of subgenre tags, in retained order."""
        found = set()
        for tag in subgenres:
            try:
                found.update(self.entries[tag])
            except KeyError:
                raise ResolutionError(f"unknown subgenre tag {tag!r}") from None
        return [g for g in self.retained_genres if g in found]


def read_genre_table(path, retained: Sequence[str] | None = None) -> GenreTable:
    """Read ``subgenre,genre1[,genre2]`` rows.

    Without ``retained``, the retained genres are every genre in the file in
    order of first appearance.
    """
    entries = {}
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or not row[0] or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].lower() == "subgenre":
                continue
            sub, genres = row[0], [g for g in row[1:] if g]
            if sub in entries:
                raise DatasetError(f"line {lineno}: subgenre {sub!r} listed twice")
            if not 1 <= len(genres) <= MAX_GENRES_PER_SUBGENRE:
                raise DatasetError(f"line {lineno}: subgenre {sub!r} needs 1 or 2 genres")
            entries[sub] = tuple(genres)
            order.extend(g for g in genres if g not in order)
    return GenreTable(entries, tuple(retained) if retained is not None else tuple(order))


def write_genre_table(table: GenreTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subgenre", "genre1", "genre2"])
        for sub, genres in table.entries.items():
            w.writerow([sub, *genres])


@dataclass(frozen=True)
class TrackRecord:
    track_id: str
    audio_path: str
    subgenres: tuple
    genres: tuple


@dataclass(frozen=True)
class LabelMatrix:
    values: np.ndarray  # (n_tracks, n_genres) uint8
    genres: tuple
    track_ids: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2 or v.shape[1] != len(self.genres):
            raise DatasetError(f"label matrix shape {v.shape} vs {len(self.genres)} genres")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_tracks(self) -> int:
        return self.values.shape[0]

    def column(self, genre: str) -> np.ndarray:
        return self.values[:, self.genres.index(genre)]


@dataclass
class Manifest:
    records: list
    labels: LabelMatrix
    dropped: list = field(default_factory=list)
    checksum: str = ""


def parse_manifest(text: str, table: GenreTable) -> Manifest:
    records, dropped, seen = [], [], set()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None:
        missing = {"track_id", "audio_path", "subgenres"} - set(reader.fieldnames)
        if missing:
            raise ManifestValidationError(f"manifest lacks columns {sorted(missing)}")
    for row in reader:
        tid = row["track_id"].strip()
        if tid in seen:
            raise DuplicateTrackError(f"duplicate track_id {tid!r}")
        seen.add(tid)
        subs = tuple(s.strip() for s in (row["subgenres"] or "").split(";") if s.strip())
        if not 1 <= len(subs) <= MAX_SUBGENRES:
            raise ManifestValidationError(
                f"track {tid!r} has {len(subs)} subgenre tags (1 to {MAX_SUBGENRES} allowed)")
        genres = tuple(table.resolve(subs))
        rec = TrackRecord(tid, row["audio_path"].strip(), subs, genres)
        (records if genres else dropped).append(rec)
    if dropped:
        log.warning("dropped %d tracks with no retained genre", len(dropped))
    values = np.zeros((len(records), len(table.retained_genres)), dtype=np.uint8)
    col = {g: j for j, g in enumerate(table.retained_genres)}
    for i, rec in enumerate(records):
        for g in rec.genres:
            values[i, col[g]] = 1
    labels = LabelMatrix(values, table.retained_genres, tuple(r.track_id for r in records))
    checksum = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Manifest(records, labels, dropped, checksum)


def load_manifest(path, table: GenreTable) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"), table)


def manifest_text(records: Sequence[TrackRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["track_id", "audio_path", "subgenres"])
    for r in records:
        w.writerow([r.track_id, r.audio_path, ";".join(r.subgenres)])
    return buf.getvalue()


def genre_counts(labels: LabelMatrix) -> dict:
    sums = labels.values.sum(axis=0, dtype=np.int64)
    return {g: int(c) for g, c in zip(labels.genres, sums)}


# --- splitting -------------------------------------------------------------------

@dataclass
class SplitPlan:
    seed: int
    fraction: float
    genres: tuple
    test_indices: np.ndarray
    train_pool: np.ndarray
    per_genre_subsets: dict = field(default_factory=dict)
    manifest_checksum: str = ""
    config_hash: str = ""
    warnings: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            "# split plan",
            f"seed = {self.seed}",
            f"fraction = {self.fraction!r}",
            f"manifest_sha256 = {self.manifest_checksum}",
            f"config_hash = {self.config_hash}",
            f"n_tracks = {len(self.test_indices) + len(self.train_pool)}",
            "genres = " + ";".join(self.genres),
            "test_indices = " + " ".join(map(str, self.test_indices)),
            "train_pool = " + " ".join(map(str, self.train_pool)),
        ]
        for g in self.genres:
            if g in self.per_genre_subsets:
                idx = self.per_genre_subsets[g]
                lines.append(f"subset[{g}] = " + " ".join(map(str, idx)))
        for w in self.warnings:
            lines.append(f"warning = {w}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SplitPlan":
        kv, subsets, warns = {}, {}, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, _, value = line.partition(" = ")
            if key.startswith("subset[") and key.endswith("]"):
                subsets[key[7:-1]] = _ints(value)
            elif key == "warning":
                warns.append(value)
            else:
                kv[key] = value
        try:
            return cls(
                seed=int(kv["seed"]), fraction=float(kv["fraction"]),
                genres=tuple(g for g in kv["genres"].split(";") if g),
                test_indices=_ints(kv.get("test_indices", "")),
                train_pool=_ints(kv.get("train_pool", "")),
                per_genre_subsets=subsets,
                manifest_checksum=kv.get("manifest_sha256", ""),
                config_hash=kv.get("config_hash", ""), warnings=warns)
        except KeyError as exc:
            raise DatasetError(f"split plan lacks key {exc}") from None


def _ints(text: str) -> np.ndarray:
    return np.array([int(t) for t in text.split()], dtype=np.int64)


_SLACK = 1e-9


def _split_cost(dev: np.ndarray, size_dev) -> np.ndarray:
    # per-genre excess beyond +-1 dominates, then total size, then per-genre drift
    excess = np.maximum(np.abs(dev) - 1 - _SLACK, 0).sum(axis=-1)
    return excess * 100_000 + np.abs(size_dev) * 100 + np.abs(dev).sum(axis=-1)


def _repair(Y, in_test, locked, target, size_target, max_rounds=10_000):
    """Greedy single-move / swap search: per-genre test counts to target +-1, then total size.

    ``target`` holds the exact (fractional) per-genre test quotas.
    """
    Yi = Y.astype(np.int64)
    for _ in range(max_rounds):
        dev = Yi[in_test].sum(axis=0) - target
        size_dev = int(in_test.sum()) - size_target
        if not np.any(np.abs(dev) > 1 + _SLACK) and abs(size_dev) <= 1:
            return in_test
        cur = _split_cost(dev, size_dev)
        movable = ~locked
        sign = np.where(in_test, -1, 1)
        cand_dev = dev[None, :] + sign[:, None] * Yi
        cand = _split_cost(cand_dev, size_dev + sign)
        cand[~movable] = np.inf
        best = int(np.argmin(cand))
        if cand[best] < cur:
            in_test[best] = not in_test[best]
            continue
        if not np.any(np.abs(dev) > 1 + _SLACK):
            break  # size drift alone does not justify the swap search
        te = np.flatnonzero(in_test & movable)
        tr = np.flatnonzero(~in_test & movable)
        if te.size == 0 or tr.size == 0:
            break
        best_swap, best_pair = cur, None
        for start in range(0, te.size, 256):
            block = te[start:start + 256]
            swap_dev = dev[None, None, :] - Yi[block][:, None, :] + Yi[tr][None, :, :]
            swap = _split_cost(swap_dev, size_dev)
            a, b = np.unravel_index(int(np.argmin(swap)), swap.shape)
            if swap[a, b] < best_swap:
                best_swap, best_pair = swap[a, b], (block[a], tr[b])
        if best_pair is None:
            break
        i, j = best_pair
        in_test[i] = False
        in_test[j] = True
    return in_test


def stratified_test_split(labels: LabelMatrix, fraction: float = 0.1, seed: int = 0) -> SplitPlan:
    """Iterative multilabel stratification into a test part and a training pool.

    Genres are handled from rarest to most common. Each unassigned track
    carrying the current genre goes to the part whose remaining demand for
    that genre is largest, then the part with larger remaining overall
    demand, then a seeded coin. A local search afterwards repairs any genre
    whose test count drifted more than one track from its target.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    Y = labels.values.astype(np.int64)
    n, k = Y.shape
    rng = make_rng(seed, "test-split")
    totals = Y.sum(axis=0)
    warns = []

    degenerate = [j for j in range(k) if 0 < totals[j] < 2]
    target = np.array([round_half_up(fraction * t) for t in totals], dtype=np.int64)
    locked = np.zeros(n, dtype=bool)
    for j in degenerate:
        warns.append(f"stratification-degenerate: genre {labels.genres[j]!r} has "
                     f"{totals[j]} positive; kept wholly in train")
        target[j] = 0
        locked |= Y[:, j] > 0
    for w in warns:
        log.warning(w)

    size_target = round_half_up(fraction * n)
    assigned = np.full(n, -1, dtype=np.int64)  # 0 = test, 1 = train
    assigned[locked] = 1
    want = np.stack([target, totals - target]).astype(np.float64)  # (2, k)
    want -= np.stack([np.zeros(k), Y[locked].sum(axis=0)])
    want_total = np.array([size_target, n - size_target], dtype=np.float64)
    want_total[1] -= locked.sum()
    tiebreak = rng.random(n)

    while True:
        open_rows = assigned < 0
        if not open_rows.any():
            break
        remaining = Y[open_rows].sum(axis=0)
        active = np.flatnonzero(remaining > 0)
        if active.size == 0:
            # unlabeled rows: fill whichever part still wants more tracks
            for i in np.flatnonzero(open_rows):
                part = int(np.argmax(want_total))
                assigned[i] = part
                want_total[part] -= 1
            break
        j = active[np.argmin(remaining[active])]
        rows = np.flatnonzero(open_rows & (Y[:, j] > 0))
        for i in rows[rng.permutation(rows.size)]:
            if want[0, j] != want[1, j]:
                part = int(np.argmax(want[:, j]))
            elif want_total[0] != want_total[1]:
                part = int(np.argmax(want_total))
            else:
                part = 0 if tiebreak[i] < fraction else 1
            assigned[i] = part
            want[part] -= Y[i]
            want_total[part] -= 1

    in_test = assigned == 0
    quota = np.where(target > 0, fraction * totals, 0.0)
    in_test = _repair(Y, in_test, locked, quota, size_target)
    test = np.flatnonzero(in_test)
    train = np.flatnonzero(~in_test)
    return SplitPlan(seed=seed, fraction=fraction, genres=labels.genres,
                     test_indices=test, train_pool=train, warnings=warns)


def primary_genres(labels: LabelMatrix) -> np.ndarray:
    """Each track's rarest positive genre (column index), ties to the earlier column."""
    totals = labels.values.sum(axis=0).astype(np.int64)
    rank = np.where(labels.values > 0, totals[None, :], np.iinfo(np.int64).max)
    prim = np.argmin(rank, axis=1)
    prim[labels.values.sum(axis=1) == 0] = -1
    return prim


def largest_remainder(total: int, weights: Sequence[float]) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``; ties to earlier entries."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return np.zeros(len(w), dtype=np.int64)
    quota = total * w / w.sum()
    base = np.floor(quota).astype(np.int64)
    rest = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(quota[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


@dataclass
class OvaSubset:
    genre: str
    indices: np.ndarray
    n_positive: int
    n_negative: int
    imbalanced: bool = False


def ova_balanced_subset(labels: LabelMatrix, genre: str, train_pool, seed: int = 0) -> OvaSubset:
    """All training-pool positives of ``genre`` plus an equal number of negatives.

    Negatives are apportioned over primary genres by largest remainder, then
    drawn uniformly inside each primary-genre group.
    """
    if genre not in labels.genres:
        raise DatasetError(f"{genre!r} is not a retained genre")
    pool = np.asarray(sorted(set(int(i) for i in train_pool)), dtype=np.int64)
    col = labels.column(genre)[pool] > 0
    pos, neg = pool[col], pool[~col]
    rng = make_rng(seed, "ova", genre)
    imbalanced = False
    if neg.size < pos.size:
        log.warning("genre %r: %d negatives for %d positives; using all negatives",
                    genre, neg.size, pos.size)
        chosen = neg
        imbalanced = True
    else:
        prim = primary_genres(labels)[neg]
        groups = sorted(set(prim.tolist()))
        members = [neg[prim == g] for g in groups]
        quotas = largest_remainder(pos.size, [m.size for m in members])
        picks = []
        for m, q in zip(members, quotas):
            if q:
                picks.append(rng.choice(m, size=int(q), replace=False))
        chosen = np.concatenate(picks) if picks else np.empty(0, dtype=np.int64)
    idx = np.sort(np.concatenate([pos, chosen]).astype(np.int64))
    return OvaSubset(genre, idx, int(pos.size), int(chosen.size), imbalanced)


def make_split_plan(labels: LabelMatrix, fraction: float = 0.1, seed: int = 0,
                    manifest_checksum: str = "", config_hash: str = "") -> SplitPlan:
    plan = stratified_test_split(labels, fraction, seed)
    for g in labels.genres:
        sub = ova_balanced_subset(labels, g, plan.train_pool, seed)
        plan.per_genre_subsets[g] = sub.indices
        if sub.imbalanced:
            plan.warnings.append(f"imbalance: genre {g!r} has {sub.n_negative} negatives "
                                 f"for {sub.n_positive} positives")
        elif sub.n_positive == 0:
            plan.warnings.append(f"empty: genre {g!r} has no training positives")
    plan.manifest_checksum = manifest_checksum
    plan.config_hash = config_hash
    return plan
