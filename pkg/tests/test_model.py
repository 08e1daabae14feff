import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from melgenre.dsp import Spectrogram
from melgenre.model import (
    ClassifierParams, DivergenceError, TrainConfig, bce_loss, bce_with_logits, forward, gradient,
    objective, pool_features, predict, predict_proba, sigmoid, train,
)


def params(w, b=0.0):
    return ClassifierParams(np.asarray(w, dtype=float), float(b))


def spec(values):
    return Spectrogram(np.asarray(values, dtype=float), "decibel", "mel", 22050, 2048, 512)


def plain_objective(w, b, x, y, l2):
    """Textbook BCE written from the probability, used as the finite-difference oracle."""
    total = 0.0
    for xi, yi in zip(x, y):
        z = float(np.dot(w, xi) + b)
        p = 1 / (1 + math.exp(-z))
        total -= yi * math.log(p) + (1 - yi) * math.log(1 - p)
    return total / len(y) + 0.5 * l2 * float(np.dot(w, w))


def finite_difference(w, b, x, y, l2, h=1e-5):
    dw = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        dw[k] = (plain_objective(w + e, b, x, y, l2) - plain_objective(w - e, b, x, y, l2)) / (2 * h)
    db = (plain_objective(w, b + h, x, y, l2) - plain_objective(w, b - h, x, y, l2)) / (2 * h)
    return dw, db


# --- pooling ---------------------------------------------------------------------

def test_pool_constant():
    f = pool_features(spec(np.full((8, 5), -3.0)), 4)
    np.testing.assert_array_equal(f, [-3.0] * 4 + [0.0] * 4)


def test_pool_single_frame():
    col = np.arange(6.0)[:, None]
    np.testing.assert_array_equal(pool_features(spec(col)), list(range(6)) + [0.0] * 6)


def test_pool_population_std():
    np.testing.assert_array_equal(pool_features(spec([[0.0, 2.0]])), [1.0, 1.0])


def test_pool_band_count():
    assert pool_features(spec(np.zeros((128, 3))), 32).shape == (64,)
    assert pool_features(spec(np.zeros((10, 3))), 32).shape == (20,)


# --- forward and loss --------------------------------------------------------------

def test_zero_params_half():
    x = np.random.default_rng(0).normal(size=(6, 3))
    np.testing.assert_array_equal(forward(params(np.zeros(3)), x), 0.5)


def test_saturation():
    p = sigmoid(1e3)
    assert 1 - 1e-12 <= p <= 1.0
    assert sigmoid(-1e3) >= 0.0
    with np.errstate(over="raise", invalid="raise"):
        sigmoid(np.array([-1e4, 1e4]))


def test_sigmoid_log3():
    assert forward(params([1.0]), np.array([math.log(3)])) == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("y", [0.0, 1.0])
def test_bce_examples(y):
    assert bce_loss(0.5, y) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(y, y) < 1e-6
    assert bce_with_logits(800.0 if y else -800.0, y) < 1e-6


def test_bce_monotone_in_logit():
    z = np.linspace(0, -50, 200)
    assert np.all(np.diff(bce_with_logits(z, np.ones_like(z))) > 0)


def test_bce_probability_range():
    with pytest.raises(ValueError):
        bce_loss(1.2, 1.0)


# --- gradient ------------------------------------------------------------------------

def test_gradient_hand_example():
    dw, db = gradient(params([0.0]), np.array([[1.0]]), np.array([1.0]))
    assert dw.tolist() == [-0.5] and db == -0.5


def test_gradient_zero_at_fit():
    x = np.array([[50.0], [-50.0]])
    dw, db = gradient(params([1.0]), x, np.array([1.0, 0.0]), l2=0.0)
    assert abs(dw[0]) < 1e-20 and abs(db) < 1e-20


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d, n = rng.integers(1, 6), rng.integers(1, 9)
        w, b = rng.normal(size=d), float(rng.normal())
        x, y = rng.normal(size=(n, d)), rng.integers(0, 2, n).astype(float)
        l2 = float(rng.choice([0.0, 1e-3, 0.1]))
        dw, db = gradient(params(w, b), x, y, l2)
        nw, nb = finite_difference(w, b, x, y, l2)
        for a, f in zip(list(dw) + [db], list(nw) + [nb]):
            assert abs(a - f) <= 1e-4 * max(abs(a), abs(f), 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 30))
def test_gradient_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(n, 4)), rng.integers(0, 2, n).astype(float)
    p = params(rng.normal(size=4), 0.3)
    perm = rng.permutation(n)
    a, b = gradient(p, x, y, 0.01), gradient(p, x[perm], y[perm], 0.01)
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)
    assert abs(a[1] - b[1]) <= 1e-12


def test_objective_matches_plain_formula():
    rng = np.random.default_rng(7)
    x, y = rng.normal(size=(10, 3)), rng.integers(0, 2, 10).astype(float)
    w = rng.normal(size=3)
    assert objective(params(w, 0.2), x, y, 0.05) == pytest.approx(
        plain_objective(w, 0.2, x, y, 0.05), rel=1e-12)


# --- training ---------------------------------------------------------------------

def toy_set():
    x = np.array([[-1.0]] * 10 + [[1.0]] * 10)
    y = np.array([0.0] * 10 + [1.0] * 10)
    return x, y


def test_separable_toy_reaches_full_accuracy():
    x, y = toy_set()
    p = train(x, y, np.arange(20), TrainConfig(learning_rate=0.5, epochs=200, batch_size=4))
    assert np.mean(predict(p, p.standardize(x)) == y) == 1.0
    assert np.mean((predict_proba(p, x) >= 0.5) == y) == 1.0


def test_full_batch_small_lr_monotone():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 5))
    y = (x[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(float)
    p = train(x, y, np.arange(40), TrainConfig(learning_rate=1e-3, epochs=300, batch_size=40))
    assert np.all(np.diff(p.loss_history) <= 1e-9)


@pytest.mark.parametrize("label", [0.0, 1.0])
def test_single_class(label):
    x = np.random.default_rng(0).normal(size=(12, 2))
    y = np.full(12, label)
    p = train(x, y, np.arange(12), TrainConfig(epochs=50))
    assert np.all(predict(p, p.standardize(x)) == label)


def test_training_deterministic():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(50, 4)), rng.integers(0, 2, 50).astype(float)
    cfg = TrainConfig(epochs=30, batch_size=8, seed=5)
    a = train(x, y, np.arange(50), cfg, genre="g", kind="mel", variant=32)
    b = train(x, y, np.arange(50), cfg, genre="g", kind="mel", variant=32)
    assert a.to_text() == b.to_text()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_epoch_and_cell():
    x = np.random.default_rng(0).normal(size=(20, 3))
    y = (x[:, 0] > 0).astype(float)
    with pytest.raises(DivergenceError, match=r"epoch 1 .*g/mel/32"):
        train(x, y, np.arange(20), TrainConfig(learning_rate=1e200, epochs=5, batch_size=20, l2=1.0),
              genre="g", kind="mel", variant=32)


def test_params_text_round_trip():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(30, 3)), rng.integers(0, 2, 30).astype(float)
    p = train(x, y, np.arange(30), TrainConfig(epochs=5), genre="Jazz", kind="linear", variant=64)
    back = ClassifierParams.from_text(p.to_text())
    np.testing.assert_array_equal(back.weights, p.weights)
    np.testing.assert_array_equal(back.feature_std, p.feature_std)
    assert back.bias == p.bias and back.config == p.config
    assert back.to_text() == p.to_text()


# --- prediction --------------------------------------------------------------------

def test_predict_tie_is_positive():
    assert predict(params([0.0]), np.array([[3.0]]))[0] == 1
    assert np.all(predict(params(np.zeros(2)), np.ones((4, 2))) == 1)


def test_predict_threshold_one():
    assert predict(params([1.0]), np.array([[2.0]]), threshold=1.0)[0] == 0
