import itertools
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from melgenre.stats import (
    DegenerateSampleError, PairedSample, SampleSizeError, betainc, blom_positions,
    compare_paired, norm_cdf, norm_ppf, paired_differences, paired_t_test, qq_data,
    shapiro_wilk, student_t_cdf, student_t_sf2,
)

REFERENCE = json.loads((Path(__file__).parent / "data" / "shapiro_reference.json").read_text())


def t_two_sided_closed_form(t: float, df: int) -> float:
    """Two-sided Student-t tail for integer df from the finite trigonometric series."""
    theta = math.atan(abs(t) / math.sqrt(df))
    s, c = math.sin(theta), math.cos(theta)
    if df % 2:
        series, term = 0.0, 1.0
        for k in range(1, (df - 1) // 2 + 1):
            series += term
            term *= (2 * k) / (2 * k + 1) * c * c
        inner = theta + (s * c * series if df > 1 else 0.0)
        central = 2 / math.pi * inner
    else:
        series, term = 0.0, 1.0
        for k in range(1, df // 2 + 1):
            series += term
            term *= (2 * k - 1) / (2 * k) * c * c
        central = s * series
    return 1.0 - central


def exact_t(d):
    n = len(d)
    mean = Fraction(sum(d), n)
    var = sum((Fraction(x) - mean) ** 2 for x in d) / (n - 1)
    if var == 0:
        return None
    t2 = mean * mean * n / var
    return math.copysign(math.sqrt(t2), mean)


# --- differences -----------------------------------------------------------------

def test_differences_examples():
    s = PairedSample(("a", "b", "c"), [0.5, 0.7, 0.2], [0.6, 0.6, 0.2])
    np.testing.assert_allclose(paired_differences(s), [-0.1, 0.1, 0.0], atol=1e-15)
    same = PairedSample(("a", "b", "c"), [1, 2, 3], [1, 2, 3])
    assert not paired_differences(same).any()


def test_differences_antisymmetric():
    a, b = [0.1, 0.9, 0.4], [0.3, 0.2, 0.8]
    ab = paired_differences(PairedSample(("x", "y", "z"), a, b))
    ba = paired_differences(PairedSample(("x", "y", "z"), b, a))
    np.testing.assert_array_equal(ab, -ba)


def test_paired_sample_bounds():
    with pytest.raises(SampleSizeError):
        PairedSample(("a", "b"), [1, 2], [2, 3])
    with pytest.raises(ValueError):
        PairedSample(("a", "b", "c"), [1, 2, 3], [1, 2])


# --- t-test --------------------------------------------------------------------------

def test_t_symmetric_sample():
    r = paired_t_test([-1.0, 1.0])
    assert r.t == 0.0 and r.p == 1.0 and r.df == 1


def test_t_one_to_five():
    r = paired_t_test([1, 2, 3, 4, 5])
    assert r.t == pytest.approx(3 / math.sqrt(2.5 / 5), abs=1e-12)
    assert r.t == pytest.approx(4.2426, abs=1e-4)
    assert r.df == 4
    assert r.p == pytest.approx(0.0132, abs=1e-3)
    # value frozen from scipy.stats.ttest_1samp before the build
    assert r.p == pytest.approx(0.013235599563682695, rel=1e-9)


def test_t_sign_flip():
    d = np.array([0.3, -0.1, 0.5, 0.2])
    a, b = paired_t_test(d), paired_t_test(-d)
    assert a.t == -b.t and a.p == b.p


def test_t_degenerate():
    with pytest.raises(DegenerateSampleError):
        paired_t_test([0.2, 0.2, 0.2])
    with pytest.raises(SampleSizeError):
        paired_t_test([1.0])


def test_t_exhaustive_small_integers():
    checked = 0
    grids = [(range(-2, 3), n) for n in (2, 3, 4)] + [((-1, 0, 2), n) for n in (5, 6)]
    for values, n in grids:
        for d in itertools.product(values, repeat=n):
            t = exact_t(d)
            if t is None:
                with pytest.raises(DegenerateSampleError):
                    paired_t_test(d)
                continue
            r = paired_t_test(d)
            assert r.t == pytest.approx(t, rel=1e-12, abs=1e-12)
            assert r.p == pytest.approx(t_two_sided_closed_form(t, n - 1), rel=1e-10, abs=1e-14)
            checked += 1
    assert checked > 1500


@pytest.mark.parametrize("df", [1, 2, 3, 7, 30])
def test_p_decreases_with_abs_t(df):
    ts = np.linspace(0, 12, 121)
    ps = [student_t_sf2(t, df) for t in ts]
    assert ps[0] == 1.0
    assert all(0.0 <= p <= 1.0 for p in ps)
    assert all(b < a for a, b in zip(ps, ps[1:]))


# --- Student t CDF ------------------------------------------------------------------

def test_t_cdf_examples():
    assert student_t_cdf(0.0, 3) == 0.5
    assert student_t_cdf(1.0, 1) == pytest.approx(0.5 + math.atan(1.0) / math.pi, abs=1e-12)
    assert abs(student_t_cdf(1.0, 1) - 0.75) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0.5, 200))
def test_t_cdf_complement(x, df):
    assert student_t_cdf(x, df) + student_t_cdf(-x, df) == pytest.approx(1.0, abs=1e-12)


def test_betainc_closed_forms():
    # I_x(a, 1) = x^a and I_x(1, b) = 1 - (1-x)^b
    for x in (0.1, 0.5, 0.93):
        assert betainc(2.5, 1.0, x) == pytest.approx(x ** 2.5, rel=1e-12)
        assert betainc(1.0, 3.0, x) == pytest.approx(1 - (1 - x) ** 3, rel=1e-12)


def test_norm_ppf_inverts_cdf():
    for p in (1e-12, 1e-5, 0.02, 0.3, 0.5, 0.7, 0.98, 1 - 1e-7):
        assert norm_cdf(norm_ppf(p)) == pytest.approx(p, rel=1e-12)
    assert norm_ppf(0.5) == 0.0


# --- Shapiro-Wilk -------------------------------------------------------------------

@pytest.mark.parametrize("case", REFERENCE["cases"], ids=lambda c: f"{c['shape']}-{c['n']}")
def test_shapiro_reference_fixture(case):
    w, p = shapiro_wilk(case["sample"])
    assert abs(w - case["w"]) <= 1e-6
    assert abs(p - case["p"]) <= 1e-5


def test_shapiro_blom_quantiles_near_one():
    x = [norm_ppf(p) for p in blom_positions(20)]
    w, p = shapiro_wilk(x)
    assert w > 0.99 and p > 0.5


def test_shapiro_bimodal_rejected():
    w, p = shapiro_wilk([0.0] * 10 + [100.0] * 10)
    assert p < 0.01
    # frozen from scipy.stats.shapiro before the build
    assert w == pytest.approx(0.6411192275791566, abs=1e-6)


def test_shapiro_small_n_exact():
    w, p = shapiro_wilk([1.0, 2.0, 3.0])
    assert w == pytest.approx(1.0) and p == pytest.approx(1.0)


def test_shapiro_errors():
    with pytest.raises(DegenerateSampleError):
        shapiro_wilk([1.0, 1.0, 1.0, 1.0])
    with pytest.raises(SampleSizeError):
        shapiro_wilk([1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=60),
       st.integers(-10, 10), st.integers(-10_000, 10_000))
def test_shapiro_affine_invariance_exact_maps(values, k, beta):
    # power-of-two scale and integer shift keep the transformed sample exact
    x = np.array(values, dtype=float)
    assume(np.ptp(x) > 0)
    w, _ = shapiro_wilk(x)
    w2, _ = shapiro_wilk(2.0 ** k * x + beta)
    assert 0.0 < w <= 1.0
    assert abs(w - w2) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60),
       st.floats(1e-3, 1e3), st.floats(-1.0, 1.0))
def test_shapiro_affine_invariance(values, alpha, shift):
    x = np.array(values)
    assume(np.ptp(x) > 1e-6 * max(1.0, np.abs(x).max()))
    beta = shift * alpha * np.ptp(x)  # a shift on the sample's own scale
    w, _ = shapiro_wilk(x)
    w2, _ = shapiro_wilk(alpha * x + beta)
    assert abs(w - w2) <= 1e-10


# --- Q-Q data -------------------------------------------------------------------

def test_qq_two_points():
    (q0, v0), (q1, v1) = qq_data([0.4, -0.2])
    expected = norm_ppf(0.625 / 2.25)
    assert q0 == pytest.approx(expected, abs=1e-12) and q1 == -q0
    assert (v0, v1) == (-0.2, 0.4)


def test_qq_pure_and_median():
    d = [0.3, -1.2, 0.8, 0.1, 2.0]
    assert qq_data(d) == qq_data(list(d))
    assert qq_data(d)[2][0] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=200))
def test_qq_increasing_antisymmetric(values):
    theo = np.array([q for q, _ in qq_data(values)])
    assert np.all(np.diff(theo) > 0)
    np.testing.assert_array_equal(theo, -theo[::-1])


def test_compare_paired_bundle():
    a = np.array([0.61, 0.72, 0.55, 0.80, 0.67, 0.59])
    b = np.array([0.65, 0.74, 0.60, 0.79, 0.71, 0.66])
    result, qq = compare_paired(PairedSample(tuple("abcdef"), a, b))
    t = paired_t_test(a - b)
    assert (result.t_statistic, result.p_value, result.degrees_of_freedom) == (t.t, t.p, 5)
    assert result.t_statistic < 0
    assert (result.shapiro_w, result.shapiro_p) == shapiro_wilk(a - b)
    assert len(qq) == 6
