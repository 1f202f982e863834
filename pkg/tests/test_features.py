import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loadid.dataset import LabeledSignalSet, RawSignal, synth_dataset, window
from loadid.errors import DataError
from loadid.features import (
    Descriptor,
    DescriptorKind,
    FeatureMatrix,
    describe_windows,
    extract,
    iamf,
    load_features,
    madf,
    rmsf,
    rmsf_literal,
    save_features,
    sscf,
    wlf,
)

ABS = 1e-9

windows_st = arrays(
    float, st.integers(3, 40),
    elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
)
scale_st = st.floats(-100, 100, allow_nan=False).filter(lambda a: abs(a) > 1e-3)


@pytest.mark.parametrize("y,expected", [
    ([0, 0, 0, 0], 0.0),
    ([3, 3, 3, 3], 3.0),
    ([1, 2, 3, 4], math.sqrt(7.5)),
])
def test_rmsf(y, expected):
    assert rmsf(y) == pytest.approx(expected, abs=ABS)


def test_rmsf_literal_puts_sum_outside_root():
    # sum(|y_i|) / sqrt(N) = 10 / 2
    assert rmsf_literal([1, -2, 3, 4]) == pytest.approx(5.0, abs=ABS)


@pytest.mark.parametrize("y,expected", [([5, 5, 5], 0.0), ([1, 2, 3, 4], 1.0), ([-1, 1], 1.0)])
def test_madf(y, expected):
    assert madf(y) == pytest.approx(expected, abs=ABS)


@pytest.mark.parametrize("y,expected", [([0, 0], 0.0), ([2, 2], 4.0), ([1, -1], 0.0)])
def test_iamf(y, expected):
    assert iamf(y) == pytest.approx(expected, abs=ABS)


@pytest.mark.parametrize("y,expected", [
    ([1, 2, 3, 4], math.log(3)),
    ([7, 7, 7, 7], math.log(1e-12)),
    ([0, 1, 0, 1], math.log(3)),
])
def test_wlf(y, expected):
    assert wlf(y) == pytest.approx(expected, abs=ABS)


@pytest.mark.parametrize("y,expected", [([1, 2, 3, 4], 0), ([0, 1, 0, 1, 0], 3), ([5, 5, 5, 5], 0)])
def test_sscf_default_threshold(y, expected):
    assert sscf(y) == expected


def test_sscf_all_zero_window_counts_nothing():
    assert sscf([0.0] * 8) == 0


def test_sscf_explicit_zero_threshold_counts_flat():
    assert sscf([5, 5, 5, 5], threshold=0.0) == 2


def test_sscf_threshold_gate():
    # interior products: (2-0)(2-1)=2 and (1-2)(1-3)=2
    assert sscf([0, 2, 1, 3], threshold=2.0) == 2
    assert sscf([0, 2, 1, 3], threshold=2.5) == 0


def test_short_windows_rejected():
    with pytest.raises(DataError):
        wlf([1.0])
    with pytest.raises(DataError):
        sscf([1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(windows_st, scale_st)
def test_scale_equivariance(y, a):
    assert rmsf(a * y) == pytest.approx(abs(a) * rmsf(y), rel=1e-9, abs=1e-9)
    assert madf(a * y) == pytest.approx(abs(a) * madf(y), rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(windows_st, st.floats(-1e3, 1e3, allow_nan=False))
def test_madf_shift_invariance(y, c):
    assert madf(y + c) == pytest.approx(madf(y), rel=1e-9, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(arrays(int, st.integers(3, 40), elements=st.integers(-50, 50)),
       st.integers(-1000, 1000), st.integers(0, 20))
def test_sscf_shift_invariance_fixed_threshold(y, c, t):
    y = y.astype(float)
    assert sscf(y + c, float(t)) == sscf(y, float(t))


@settings(max_examples=200, deadline=None)
@given(windows_st, st.floats(1e-2, 1e2))
def test_wlf_log_shift(y, a):
    if np.sum(np.abs(np.diff(y))) < 1e-6:
        return
    assert wlf(a * y) == pytest.approx(wlf(y) + math.log(a), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(windows_st)
def test_sscf_range(y):
    assert 0 <= sscf(y) <= y.size - 2


@pytest.mark.parametrize("kind", list(Descriptor))
def test_batched_matches_scalar(kind, rng):
    scalar = {"rmsf": rmsf, "madf": madf, "iamf": iamf, "wlf": wlf, "sscf": sscf}[kind.value]
    w = rng.normal(50, 20, size=(9, 16))
    w[3] = 0.0
    w[4] = 7.0
    got = describe_windows(w, DescriptorKind(kind))
    expected = [scalar(row) for row in w]
    assert np.allclose(got, expected, rtol=0, atol=ABS)


def test_batched_rmsf_literal(rng):
    w = rng.normal(size=(4, 8))
    got = describe_windows(w, DescriptorKind(Descriptor.RMSF, literal=True))
    assert np.allclose(got, [rmsf_literal(r) for r in w], atol=ABS)


def test_parse_descriptor():
    assert DescriptorKind.parse("SSCF", 0.5).threshold == 0.5
    with pytest.raises(DataError):
        DescriptorKind.parse("fft")
    with pytest.raises(DataError):
        DescriptorKind.parse("sscf", -1.0)


def test_extract_two_signals_rmsf():
    a = np.arange(8, dtype=float)
    b = np.array([1, -1, 1, -1, 2, 2, 2, 2], dtype=float)
    s = LabeledSignalSet((RawSignal(a, 1.0, 0, "a"), RawSignal(b, 1.0, 1, "b")), ("x", "y"))
    F = extract(s, DescriptorKind.parse("rmsf"), 4)
    assert F.values.shape == (2, 2)
    assert F.values[0, 0] == pytest.approx(rmsf(a[:4]))
    assert F.values[0, 1] == pytest.approx(rmsf(a[4:]))
    assert F.values[1].tolist() == pytest.approx([1.0, 2.0])
    assert F.labels.tolist() == [0, 1]


def test_extract_madf_constant_signals():
    s = LabeledSignalSet(tuple(RawSignal(np.full(12, v), 1.0, i, str(i))
                               for i, v in enumerate([3.0, 9.0])), ("a", "b"))
    F = extract(s, DescriptorKind.parse("madf"), 4)
    assert np.all(F.values == 0)


@pytest.mark.parametrize("name", ["rmsf", "madf", "iamf", "wlf", "sscf"])
def test_extract_matches_per_window_loop(name):
    s = synth_dataset(3, 3, 500, seed=2)
    desc = DescriptorKind.parse(name)
    F = extract(s, desc, 64)
    assert F.values.shape == (9, 500 // 64)
    scalar = {"rmsf": rmsf, "madf": madf, "iamf": iamf, "wlf": wlf, "sscf": sscf}[name]
    for i, sig in enumerate(s.signals):
        for k, row in enumerate(window(sig, 64).windows):
            assert F.values[i, k] == pytest.approx(scalar(row), abs=ABS)


def test_extract_unequal_lengths_lists_offenders():
    s = LabeledSignalSet((
        RawSignal(np.ones(16), 1.0, 0, "long1"),
        RawSignal(np.ones(16), 1.0, 1, "long2"),
        RawSignal(np.ones(8), 1.0, 1, "short"),
    ), ("a", "b"))
    with pytest.raises(DataError, match="short"):
        extract(s, DescriptorKind.parse("rmsf"), 4)


def test_feature_matrix_rejects_nonfinite():
    with pytest.raises(DataError):
        FeatureMatrix(np.array([[1.0, np.nan]]), np.array([0]))


def test_features_csv_roundtrip(tmp_path, rng):
    F = FeatureMatrix(rng.standard_normal((5, 3)) * 1e3, np.array([0, 1, 2, 1, 0]))
    path = tmp_path / "f.csv"
    save_features(F, path)
    assert path.read_text().splitlines()[0] == "label,f1,f2,f3"
    back = load_features(path)
    assert np.array_equal(back.values, F.values)
    assert np.array_equal(back.labels, F.labels)
