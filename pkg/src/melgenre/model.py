"""Reference binary classifier for the one-vs-all ensemble.

Logistic regression over pooled spectrogram statistics, trained by seeded
mini-batch gradient descent. Anything exposing ``train``/``forward``/
``predict`` with the same signatures can stand in for it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import make_rng
from .dsp import Spectrogram

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class ClassifierParams:
    weights: np.ndarray
    bias: float
    genre: str = ""
    spectrogram_kind: str = ""
    variant: int = 0
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    config: TrainConfig | None = None
    loss_history: list = field(default_factory=list)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_std

    def to_text(self) -> str:
        cfg = self.config or TrainConfig()
        lines = [
            "# classifier params",
            f"genre = {self.genre}",
            f"kind = {self.spectrogram_kind}",
            f"variant = {self.variant}",
            f"feature_length = {self.weights.shape[0]}",
            f"bias = {_fmt(self.bias)}",
            "weights = " + " ".join(map(_fmt, self.weights)),
            "feature_mean = " + " ".join(map(_fmt, _or_zeros(self.feature_mean, self.weights))),
            "feature_std = " + " ".join(map(_fmt, _or_ones(self.feature_std, self.weights))),
        ]
        for key, value in asdict(cfg).items():
            lines.append(f"config.{key} = {value!r}")
        lines.append("loss_history = " + " ".join(map(_fmt, self.loss_history)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClassifierParams":
        kv = {}
        for line in text.splitlines():
            if line.strip() and not line.startswith("#"):
                key, _, value = line.partition(" = ")
                kv[key] = value
        vec = lambda key: np.array([float(v) for v in kv[key].split()])  # noqa: E731
        cfg = TrainConfig(
            learning_rate=float(kv["config.learning_rate"]), epochs=int(kv["config.epochs"]),
            batch_size=int(kv["config.batch_size"]), seed=int(kv["config.seed"]),
            l2=float(kv["config.l2"]))
        weights = vec("weights")
        if weights.shape[0] != int(kv["feature_length"]):
            raise ValueError("weight vector length disagrees with feature_length")
        return cls(weights=weights, bias=float(kv["bias"]), genre=kv["genre"],
                   spectrogram_kind=kv["kind"], variant=int(kv["variant"]),
                   feature_mean=vec("feature_mean"), feature_std=vec("feature_std"),
                   config=cfg, loss_history=list(vec("loss_history")))


def _fmt(x) -> str:
    return repr(float(x))


def _or_zeros(v, like):
    return np.zeros_like(like) if v is None else v


def _or_ones(v, like):
    return np.ones_like(like) if v is None else v


def band_pool(values: np.ndarray, n_bands: int | None) -> np.ndarray:
    """Average contiguous row groups down to ``n_bands`` rows."""
    if n_bands is None or n_bands >= values.shape[0]:
        return values
    groups = np.array_split(np.arange(values.shape[0]), n_bands)
    return np.stack([values[g].mean(axis=0) for g in groups])


def pool_features(spec: Spectrogram, n_bands: int | None = None) -> np.ndarray:
    """Per-band mean and population std over time, concatenated.

    ``n_bands`` optionally averages adjacent rows first; model variants
    differ only in this pooling granularity.
    """
    if spec.values.size == 0:
        raise ValueError("cannot pool an empty spectrogram")
    v = band_pool(spec.values, n_bands)
    return np.concatenate([v.mean(axis=1), v.std(axis=1)])


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logits(params: ClassifierParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.weights.shape[0]:
        raise ValueError(f"feature length {x.shape[-1]} != {params.weights.shape[0]}")
    return x @ params.weights + params.bias


def forward(params: ClassifierParams, x: np.ndarray):
    return sigmoid(logits(params, x))


def bce_with_logits(z, y):
    """Binary cross-entropy from logits, ``log(1 + e^z) - y z`` evaluated stably."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = np.maximum(z, 0) - y * z + np.log1p(np.exp(-np.abs(z)))
    return loss if loss.ndim else float(loss)


def bce_loss(p, y):
    """BCE of a probability, routed through the logit form."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        z = np.log(p) - np.log1p(-p)
    z = np.clip(z, -745.0, 745.0)
    return bce_with_logits(z, y)


def objective(params: ClassifierParams, x: np.ndarray, y: np.ndarray, l2: float) -> float:
    return float(np.mean(bce_with_logits(logits(params, x), y))
                 + 0.5 * l2 * params.weights @ params.weights)


def gradient(params: ClassifierParams, x: np.ndarray, y: np.ndarray, l2: float = 0.0):
    """Gradient of mean BCE + (l2/2)|w|^2 as ``(dw, db)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    resid = sigmoid(logits(params, x)) - y
    return x.T @ resid / x.shape[0] + l2 * params.weights, float(resid.mean())


def train(features: np.ndarray, labels: np.ndarray, subset, config: TrainConfig = TrainConfig(),
          *, genre: str = "", kind: str = "", variant: int = 0) -> ClassifierParams:
    """Fit on ``features[subset]``; the returned params carry the per-epoch loss history.

    Features are standardised by the subset's own mean and std. The subset is
    used whole every epoch, reshuffled into mini-batches by a generator seeded
    from ``config.seed`` and the cell identity.
    """
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("training subset is empty")
    x = np.asarray(features, dtype=np.float64)[idx]
    y = np.asarray(labels, dtype=np.float64)[idx]
    if np.all(y == y[0]):
        log.warning("cell %s/%s/%s: subset holds one class only", genre, kind, variant)

    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    xs = (x - mean) / std
    params = ClassifierParams(np.zeros(x.shape[1]), 0.0, genre, kind, variant,
                              mean, std, config)
    rng = make_rng(config.seed, "train", genre, kind, variant)
    n = xs.shape[0]
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            dw, db = gradient(params, xs[b], y[b], config.l2)
            params.weights = params.weights - config.learning_rate * dw
            params.bias = params.bias - config.learning_rate * db
        loss = objective(params, xs, y, config.l2)
        if not math.isfinite(loss) or not np.all(np.isfinite(params.weights)):
            raise DivergenceError(f"non-finite loss at epoch {epoch + 1} "
                                  f"(cell {genre}/{kind}/{variant})")
        history.append(loss)
    params.loss_history = history
    return params


def predict_proba(params: ClassifierParams, raw_features: np.ndarray) -> np.ndarray:
    """Probabilities for unstandardised features, using the stored train statistics."""
    return forward(params, params.standardize(np.asarray(raw_features, dtype=np.float64)))


def predict(params: ClassifierParams, x, threshold: float = 0.5):
    p = forward(params, x)
    return (np.asarray(p) >= threshold).astype(np.int64)
