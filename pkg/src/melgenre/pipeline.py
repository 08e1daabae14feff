"""File-staged experiment: extract, split, train, evaluate, compare, report.

Output layout under ``output_root``::

    spectrograms/<track>.<kind>.spg   dB tensors, both kinds per track
    extract_log.txt                   per-track status with tensor checksums
    split.txt                         SplitPlan
    models/v<bands>/<kind>/<genre>.params
    eval/records.csv, eval/macro.csv, eval/per_genre.csv
    compare/result.txt, compare/qq.csv
    render/<track>.<kind>.ppm
    report.md

Text artifacts start with a ``# seed=... config_hash=...`` line. Stages are
deterministic in (config, seed) and independent of ``jobs``.
"""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp, metrics, model, stats
from .audio_io import AudioBuffer, AudioError, decode_wav, resample_linear
from .config import ExperimentConfig
from .corpus import slug
from .dataset import Manifest, SplitPlan, load_manifest, make_split_plan, read_genre_table
from .render import render_spectrogram, write_ppm

log = logging.getLogger(__name__)

KINDS = ("linear", "mel")
FAILURE_LIMIT = 0.5


class RunFailure(RuntimeError):
    """A stage could not complete; maps to exit status 2."""


class StageInputError(ValueError):
    """A stage's inputs are missing or malformed; maps to exit status 1."""


def stamp(cfg: ExperimentConfig) -> str:
    return f"# seed={cfg.seed} config_hash={cfg.config_hash}\n"


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def load_inputs(cfg: ExperimentConfig) -> Manifest:
    table = read_genre_table(cfg.genre_table, retained=cfg.genres or None)
    return load_manifest(cfg.manifest, table)


def tensor_path(cfg: ExperimentConfig, track_id: str, kind: str) -> Path:
    return cfg.output_root / "spectrograms" / f"{track_id.replace('/', '_')}.{kind}.spg"


# --- extract -------------------------------------------------------------------

@dataclass
class ExtractSummary:
    extracted: int = 0
    skipped: int = 0
    failed: int = 0
    log_path: Path | None = None

    @property
    def total(self):
        return self.extracted + self.skipped + self.failed


def _extract_one(args):
    cfg, track_id, audio_path, force = args
    paths = [tensor_path(cfg, track_id, k) for k in KINDS]
    if not force and all(p.is_file() for p in paths):
        return track_id, "skipped", [_sha(p.read_bytes()) for p in paths], ""
    try:
        buf = decode_wav(cfg.audio_root / audio_path)
        buf = resample_linear(buf, cfg.sample_rate)
        if cfg.max_duration is not None:
            buf = AudioBuffer(buf.samples[: int(cfg.max_duration * cfg.sample_rate)],
                              buf.sample_rate, buf.source_id)
        specs = dsp.linear_and_mel_db(buf, cfg.spectrogram_params())
    except (AudioError, OSError, ValueError) as exc:
        return track_id, "failed", [], f"{type(exc).__name__}: {exc}"
    sums = []
    for spec, p in zip(specs, paths):
        data = dsp.spectrogram_to_bytes(spec)
        p.write_bytes(data)
        sums.append(_sha(data))
    return track_id, "extracted", sums, ""


def cmd_extract(cfg: ExperimentConfig, force: bool = False) -> ExtractSummary:
    manifest = load_inputs(cfg)
    (cfg.output_root / "spectrograms").mkdir(parents=True, exist_ok=True)
    items = [(cfg, r.track_id, r.audio_path, force) for r in manifest.records]
    results = _map(_extract_one, items, cfg.jobs)
    summary = ExtractSummary()
    lines = [stamp(cfg).rstrip("\n"), "# track_id\tstatus\tsha256_linear\tsha256_mel\tdetail"]
    for tid, status, sums, detail in results:
        setattr(summary, status, getattr(summary, status) + 1)
        if status == "failed":
            log.error("extract %s failed: %s", tid, detail)
        lines.append("\t".join([tid, status, *(sums or ["-", "-"]), detail]))
    body = "\n".join(lines) + "\n"
    body += f"# log_sha256={_sha(body.encode('utf-8'))}\n"
    summary.log_path = cfg.output_root / "extract_log.txt"
    summary.log_path.write_text(body, encoding="utf-8")
    if summary.total and summary.failed / summary.total > FAILURE_LIMIT:
        raise RunFailure(f"{summary.failed} of {summary.total} tracks failed to extract")
    return summary


# --- render --------------------------------------------------------------------

def cmd_render(cfg: ExperimentConfig, track_id: str, kind: str = "mel") -> Path:
    src = tensor_path(cfg, track_id, kind)
    if not src.is_file():
        raise StageInputError(f"no {kind} tensor for track {track_id!r}; run extract first")
    out = cfg.output_root / "render" / f"{track_id}.{kind}.ppm"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ppm(render_spectrogram(dsp.read_spectrogram(src), flip_vertical=True), out)
    return out


# --- split ---------------------------------------------------------------------

def split_path(cfg):
    return cfg.output_root / "split.txt"


def cmd_split(cfg: ExperimentConfig) -> SplitPlan:
    manifest = load_inputs(cfg)
    plan = make_split_plan(manifest.labels, cfg.fraction, cfg.seed,
                           manifest_checksum=manifest.checksum, config_hash=cfg.config_hash)
    cfg.output_root.mkdir(parents=True, exist_ok=True)
    split_path(cfg).write_text(plan.to_text(), encoding="utf-8")
    test = set(plan.test_indices.tolist())
    overlaps = {g: len(test & set(s.tolist())) for g, s in plan.per_genre_subsets.items()}
    if any(overlaps.values()):
        raise RunFailure(f"OVA subsets overlap the test split: {overlaps}")
    return plan


def load_split(cfg: ExperimentConfig, manifest: Manifest) -> SplitPlan:
    path = split_path(cfg)
    if not path.is_file():
        raise StageInputError("split plan missing; run split first")
    plan = SplitPlan.from_text(path.read_text(encoding="utf-8"))
    if plan.manifest_checksum != manifest.checksum:
        raise StageInputError("split plan was made from a different manifest")
    return plan


# --- features / train ------------------------------------------------------------

def feature_matrix(cfg: ExperimentConfig, manifest: Manifest, kind: str, bands: int) -> np.ndarray:
    """Pooled features per track; rows for tracks without a tensor are NaN."""
    rows = []
    width = None
    for r in manifest.records:
        p = tensor_path(cfg, r.track_id, kind)
        if p.is_file():
            f = model.pool_features(dsp.read_spectrogram(p), bands)
            width = f.shape[0]
            rows.append(f)
        else:
            rows.append(None)
    if width is None:
        raise StageInputError(f"no {kind} tensors found; run extract first")
    return np.stack([f if f is not None else np.full(width, np.nan) for f in rows])


def _usable(features: np.ndarray, idx: np.ndarray) -> np.ndarray:
    ok = np.all(np.isfinite(features[idx]), axis=1)
    if not ok.all():
        log.warning("%d indices lack spectrogram tensors and are skipped", int((~ok).sum()))
    return idx[ok]


def params_path(cfg, variant, kind, genre) -> Path:
    return cfg.output_root / "models" / f"v{variant}" / kind / f"{slug(genre)}.params"


def _train_cell(args):
    cfg, features, y, subset, genre, kind, variant, force = args
    out = params_path(cfg, variant, kind, genre)
    if out.is_file() and not force:
        return str(out), "skipped"
    params = model.train(features, y, subset, cfg.train_config(),
                         genre=genre, kind=kind, variant=variant)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(stamp(cfg) + params.to_text(), encoding="utf-8")
    return str(out), "trained"


def cmd_train(cfg: ExperimentConfig, force: bool = False) -> list:
    manifest = load_inputs(cfg)
    plan = load_split(cfg, manifest)
    labels = manifest.labels
    cells = []
    for variant in cfg.variants:
        for kind in KINDS:
            feats = feature_matrix(cfg, manifest, kind, variant)
            for genre in labels.genres:
                subset = _usable(feats, plan.per_genre_subsets.get(genre, np.empty(0, np.int64)))
                if subset.size == 0:
                    raise RunFailure(f"cell {genre}/{kind}/v{variant}: empty training subset")
                y = labels.column(genre).astype(np.float64)
                cells.append((cfg, feats, y, subset, genre, kind, variant, force))
    try:
        results = _map(_train_cell, cells, cfg.jobs)
    except model.DivergenceError as exc:
        raise RunFailure(str(exc)) from exc
    return results


# --- evaluate ------------------------------------------------------------------

def cmd_evaluate(cfg: ExperimentConfig) -> metrics.EvalReport:
    manifest = load_inputs(cfg)
    plan = load_split(cfg, manifest)
    labels = manifest.labels
    records = []
    for variant in cfg.variants:
        for kind in KINDS:
            feats = feature_matrix(cfg, manifest, kind, variant)
            test = _usable(feats, plan.test_indices)
            if test.size == 0:
                raise RunFailure("test split is empty")
            for genre in labels.genres:
                p = params_path(cfg, variant, kind, genre)
                if not p.is_file():
                    raise StageInputError(f"missing trained params {p}; run train first")
                params = model.ClassifierParams.from_text(p.read_text(encoding="utf-8"))
                x = params.standardize(feats[test])
                z = model.logits(params, x)
                truth = labels.column(genre)[test]
                preds = (model.sigmoid(z) >= 0.5).astype(np.int64)
                loss = float(np.mean(model.bce_with_logits(z, truth)))
                records.append(metrics.make_record(genre, kind, variant, preds, truth, loss))
    report = metrics.aggregate(records)
    out = cfg.output_root / "eval"
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(metrics.records_csv(records, stamp(cfg)), encoding="utf-8")
    (out / "macro.csv").write_text(metrics.macro_csv(report, stamp(cfg)), encoding="utf-8")
    (out / "per_genre.csv").write_text(_per_genre_csv(report, cfg), encoding="utf-8")
    return report


def _per_genre_csv(report: metrics.EvalReport, cfg) -> str:
    lines = [stamp(cfg).rstrip("\n"), "kind,genre," + ",".join(metrics.METRIC_NAMES)]
    for (kind, genre), row in report.per_genre.items():
        vals = ",".join(repr(row[m]) for m in metrics.METRIC_NAMES)
        lines.append(f'{kind},"{genre}",{vals}')
    return "\n".join(lines) + "\n"


# --- compare -------------------------------------------------------------------

def paired_sample(records, pairing: str = "cell") -> stats.PairedSample:
    """Linear-vs-mel F1 pairs, per (variant, genre) cell or per variant macro mean."""
    by_key = {}
    order = []
    for r in records:
        if r.kind not in KINDS:
            raise StageInputError(f"unknown spectrogram kind {r.kind!r}")
        key = (r.variant, r.genre)
        if key not in by_key:
            by_key[key] = {}
            order.append(key)
        if r.kind in by_key[key]:
            raise StageInputError(f"duplicate record for {key} / {r.kind}")
        by_key[key][r.kind] = r.f1
    unpaired = [k for k in order if len(by_key[k]) != 2]
    if unpaired:
        raise StageInputError(f"cells without both kinds: {unpaired[:5]}")
    if pairing == "cell":
        labels = tuple(f"{v}/{g}" for v, g in order)
        a = [by_key[k]["linear"] for k in order]
        b = [by_key[k]["mel"] for k in order]
    elif pairing == "model":
        variants = list(dict.fromkeys(v for v, _ in order))
        labels = tuple(variants)
        a = [float(np.mean([by_key[k]["linear"] for k in order if k[0] == v])) for v in variants]
        b = [float(np.mean([by_key[k]["mel"] for k in order if k[0] == v])) for v in variants]
    else:
        raise StageInputError(f"unknown pairing {pairing!r}")
    try:
        return stats.PairedSample(labels, np.array(a), np.array(b))
    except stats.SampleSizeError as exc:
        raise StageInputError(f"pairing {pairing!r}: {exc}") from exc


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def result_text(cfg, pairing, sample, result, status="ok", detail="") -> str:
    lines = [
        stamp(cfg).rstrip("\n"),
        "# paired comparison of F1 scores",
        f"pairing = {pairing}",
        "difference = linear_f1 - mel_f1",
        f"status = {status}",
    ]
    if detail:
        lines.append(f"detail = {detail}")
    fields = ("n", "mean_diff", "sd_diff", "t_statistic", "degrees_of_freedom", "p_value",
              "shapiro_w", "shapiro_p")
    for name in fields:
        value = getattr(result, name) if result is not None else (
            len(sample.labels) if name == "n" else None)
        lines.append(f"{name} = {value if isinstance(value, int) else _fmt(value)}")
    lines.append("labels = " + " ".join(str(label).replace(" ", "_") for label in sample.labels))
    return "\n".join(lines) + "\n"


@dataclass
class CompareOutcome:
    result: stats.PairedTestResult | None
    result_path: Path
    qq_path: Path | None
    status: str


def cmd_compare(cfg: ExperimentConfig, records_path=None, pairing: str | None = None) -> CompareOutcome:
    pairing = pairing or cfg.pairing
    records_path = Path(records_path) if records_path else cfg.output_root / "eval" / "records.csv"
    if not records_path.is_file():
        raise StageInputError(f"{records_path} not found; run evaluate first")
    try:
        records = metrics.parse_records_csv(records_path.read_text(encoding="utf-8"))
    except (KeyError, ValueError) as exc:
        raise StageInputError(f"{records_path}: {exc}") from exc
    sample = paired_sample(records, pairing)
    out = cfg.output_root / "compare"
    out.mkdir(parents=True, exist_ok=True)
    result_path = out / "result.txt"
    try:
        result, qq = stats.compare_paired(sample)
    except stats.DegenerateSampleError as exc:
        result_path.write_text(result_text(cfg, pairing, sample, None, "degenerate", str(exc)),
                               encoding="utf-8")
        raise RunFailure(f"paired comparison is degenerate: {exc}") from exc
    result_path.write_text(result_text(cfg, pairing, sample, result), encoding="utf-8")
    qq_path = out / "qq.csv"
    qq_lines = [stamp(cfg).rstrip("\n"), "theoretical,observed"]
    qq_lines += [f"{repr(float(t))},{repr(float(o))}" for t, o in qq]
    qq_path.write_text("\n".join(qq_lines) + "\n", encoding="utf-8")
    return CompareOutcome(result, result_path, qq_path, "ok")


def parse_result_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line and not line.startswith("#"):
            key, _, value = line.partition(" = ")
            out[key] = value
    return out


# --- report --------------------------------------------------------------------

def cmd_report(cfg: ExperimentConfig) -> Path:
    eval_dir = cfg.output_root / "eval"
    rec_path = eval_dir / "records.csv"
    if not rec_path.is_file():
        raise StageInputError("no evaluation records; run evaluate first")
    report = metrics.aggregate(metrics.parse_records_csv(rec_path.read_text(encoding="utf-8")))
    lines = ["# Spectrogram comparison report", "",
             f"seed `{cfg.seed}`, config hash `{cfg.config_hash}`", "",
             "## Macro averages per model variant", "",
             "| kind | variant | " + " | ".join(metrics.METRIC_NAMES) + " |",
             "|---|---|" + "---|" * len(metrics.METRIC_NAMES)]
    for (kind, variant), row in report.macro.items():
        lines.append(f"| {kind} | {variant} | "
                     + " | ".join(f"{row[m]:.4f}" for m in metrics.METRIC_NAMES) + " |")
    lines += ["", "## Per-genre averages", "",
              "| kind | genre | precision | recall | f1 |", "|---|---|---|---|---|"]
    for (kind, genre), row in report.per_genre.items():
        lines.append(f"| {kind} | {genre} | {row['precision']:.4f} | {row['recall']:.4f} "
                     f"| {row['f1']:.4f} |")
    res_path = cfg.output_root / "compare" / "result.txt"
    if res_path.is_file():
        res = parse_result_text(res_path.read_text(encoding="utf-8"))
        lines += ["", "## Paired comparison (linear F1 minus mel F1)", ""]
        for key in ("pairing", "status", "n", "mean_diff", "t_statistic", "degrees_of_freedom",
                    "p_value", "shapiro_w", "shapiro_p"):
            lines.append(f"- {key}: {res.get(key, '')}")
    out = cfg.output_root / "report.md"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
