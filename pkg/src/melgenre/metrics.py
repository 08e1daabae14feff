"""Per-genre classification metrics and their macro aggregation."""
from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

METRIC_NAMES = ("accuracy", "balanced_accuracy", "precision", "recall", "f1", "loss")
RECORD_HEADER = ("genre", "kind", "variant") + METRIC_NAMES + ("zero_division_flags",)
MACRO_HEADER = ("kind", "variant", "n_genres") + METRIC_NAMES


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricRecord:
    genre: str
    kind: str
    variant: str
    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    loss: float = 0.0
    zero_division_flags: tuple = ()


def confusion(predictions, truth) -> ConfusionCounts:
    p = np.asarray(predictions).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptyEvaluationError("nothing to evaluate")
    return ConfusionCounts(tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
                           tn=int(np.sum(~p & ~t)), fn=int(np.sum(~p & t)))


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def compute_metrics(c: ConfusionCounts) -> dict:
    """Accuracy, precision, recall, F1 and balanced accuracy.

    Ratios with a zero denominator are reported as 0 and named in
    ``zero_division_flags``. Each value is a single division of integers,
    so it is the correctly rounded float of the exact ratio.
    """
    if c.total == 0:
        raise EmptyEvaluationError("confusion counts are all zero")
    flags: list[str] = []
    pos, neg = c.tp + c.fn, c.tn + c.fp
    precision = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    recall = _ratio(c.tp, pos, "recall", flags)
    _ratio(c.tn, neg, "specificity", flags)
    if c.tp == 0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    if pos and neg:
        balanced = (c.tp * neg + c.tn * pos) / (2 * pos * neg)
    else:
        balanced = c.tp / (2 * pos) if pos else c.tn / (2 * neg)
    return {
        "accuracy": (c.tp + c.tn) / c.total,
        "balanced_accuracy": balanced,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "zero_division_flags": tuple(flags),
    }


def make_record(genre, kind, variant, predictions, truth, loss=0.0) -> MetricRecord:
    m = compute_metrics(confusion(predictions, truth))
    return MetricRecord(genre=genre, kind=kind, variant=str(variant), loss=float(loss), **m)


@dataclass
class EvalReport:
    records: list
    macro: "OrderedDict[tuple, dict]" = field(default_factory=OrderedDict)
    per_genre: "OrderedDict[tuple, dict]" = field(default_factory=OrderedDict)


def _mean_block(recs) -> dict:
    return {name: float(np.mean([getattr(r, name) for r in recs])) for name in METRIC_NAMES}


def aggregate(records) -> EvalReport:
    """Unweighted means grouped by (kind, variant) and by (kind, genre).

    The first grouping backs the across-model figures, the second the
    across-genre ones. Group order follows first appearance.
    """
    records = list(records)
    if not records:
        raise EmptyEvaluationError("no records to aggregate")
    by_model, by_genre = OrderedDict(), OrderedDict()
    for r in records:
        by_model.setdefault((r.kind, r.variant), []).append(r)
        by_genre.setdefault((r.kind, r.genre), []).append(r)
    macro = OrderedDict((k, dict(_mean_block(v), n_genres=len(v))) for k, v in by_model.items())
    per_genre = OrderedDict((k, _mean_block(v)) for k, v in by_genre.items())
    return EvalReport(records, macro, per_genre)


def _num(x: float) -> str:
    return repr(float(x))


def records_csv(records, preamble: str = "") -> str:
    buf = io.StringIO()
    if preamble:
        buf.write(preamble)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([r.genre, r.kind, r.variant] + [_num(getattr(r, m)) for m in METRIC_NAMES]
                   + [";".join(r.zero_division_flags)])
    return buf.getvalue()


def macro_csv(report: EvalReport, preamble: str = "") -> str:
    buf = io.StringIO()
    if preamble:
        buf.write(preamble)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MACRO_HEADER)
    for (kind, variant), row in report.macro.items():
        w.writerow([kind, variant, row["n_genres"]] + [_num(row[m]) for m in METRIC_NAMES])
    return buf.getvalue()


def _data_lines(text: str):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def parse_records_csv(text: str) -> list:
    reader = csv.DictReader(_data_lines(text))
    missing = set(RECORD_HEADER[:3]) | {"f1"}
    if reader.fieldnames is None or not missing <= set(reader.fieldnames):
        raise ValueError(f"records CSV needs at least columns {sorted(missing)}")
    out = []
    for row in reader:
        vals = {m: float(row[m]) if row.get(m) not in (None, "") else 0.0 for m in METRIC_NAMES}
        flags = tuple(f for f in (row.get("zero_division_flags") or "").split(";") if f)
        out.append(MetricRecord(genre=row["genre"], kind=row["kind"], variant=row["variant"],
                                zero_division_flags=flags, **vals))
    return out
