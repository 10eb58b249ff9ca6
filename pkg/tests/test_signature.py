import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import trapezoid_signature
from sigmort.errors import DataError
from sigmort.paths import Path
from sigmort.signature import (
    TruncatedSignature,
    chen_concat,
    level_slices,
    sig_dim,
    signature_batch,
    truncated_signature,
    unit,
)


@pytest.mark.parametrize("d,m,expected", [(3, 3, 40), (1, 5, 6), (2, 0, 1), (2, 4, 31)])
def test_sig_dim(d, m, expected):
    assert sig_dim(d, m) == expected


def test_sig_dim_errors():
    with pytest.raises(OverflowError):
        sig_dim(10, 40)
    with pytest.raises(DataError):
        sig_dim(0, 2)


def test_one_dimensional_closed_form():
    sig = truncated_signature(Path(np.array([[0.0], [2.0]])), 3)
    np.testing.assert_allclose(sig.coeffs, [1, 2, 2, 4 / 3], atol=1e-12)


def test_linear_segment_two_dims():
    a, b = 1.5, -0.7
    sig = truncated_signature(Path(np.array([[0.0, 0.0], [a, b]])), 2)
    assert sig[()] == 1.0
    assert sig[(1,)] == pytest.approx(a) and sig[(2,)] == pytest.approx(b)
    assert sig[(1, 1)] == pytest.approx(a * a / 2)
    assert sig[(1, 2)] == pytest.approx(a * b / 2)
    assert sig[(2, 1)] == pytest.approx(a * b / 2)
    assert sig[(2, 2)] == pytest.approx(b * b / 2)


def test_layout_is_level_major_lexicographic():
    d, m = 2, 3
    assert [s.stop - s.start for s in level_slices(d, m)] == [1, 2, 4, 8]
    rng = np.random.default_rng(3)
    sig = truncated_signature(Path(rng.normal(size=(4, d))), m)
    lvl3 = sig.level(3).reshape(d, d, d)
    assert sig[(2, 1, 2)] == lvl3[1, 0, 1]


def test_matches_trapezoid_oracle_random_4_point():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(4, 2))
    sig = truncated_signature(Path(pts), 3)
    for lvl, ref in enumerate(trapezoid_signature(pts, 10_000), start=1):
        np.testing.assert_allclose(sig.level(lvl), ref, atol=1e-6)


def test_unit_and_inverse():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(5, 3))
    s = truncated_signature(Path(pts), 3)
    np.testing.assert_array_equal(chen_concat(s, unit(3, 3)).coeffs, s.coeffs)
    np.testing.assert_array_equal(chen_concat(unit(3, 3), s).coeffs, s.coeffs)
    seg = np.array([[0.0, 0.0, 0.0], [0.3, -1.2, 2.0]])
    fwd = truncated_signature(Path(seg), 3)
    back = truncated_signature(Path(seg[::-1].copy()), 3)
    np.testing.assert_allclose(chen_concat(fwd, back).coeffs, unit(3, 3).coeffs, atol=1e-12)


def test_chen_three_point_path():
    pts = np.array([[0.0, 1.0], [1.0, 3.0], [-2.0, 0.5]])
    whole = truncated_signature(Path(pts), 4)
    glued = chen_concat(truncated_signature(Path(pts[:2]), 4), truncated_signature(Path(pts[1:]), 4))
    np.testing.assert_allclose(whole.coeffs, glued.coeffs, atol=1e-12)


def test_chen_mismatch():
    with pytest.raises(DataError):
        chen_concat(unit(2, 3), unit(3, 3))
    with pytest.raises(DataError):
        chen_concat(unit(2, 3), unit(2, 2))


def test_truncated_signature_container_checks():
    with pytest.raises(DataError):
        TruncatedSignature(2, 2, np.zeros(5))


def test_batch_rejects_bad_shapes():
    with pytest.raises(DataError):
        signature_batch(np.zeros((2, 1, 3)), 2)
    with pytest.raises(DataError):
        signature_batch(np.zeros((2, 3, 3)), 0)


path_arrays = st.integers(2, 3).flatmap(
    lambda d: arrays(np.float64, st.tuples(st.integers(2, 8), st.just(d)),
                     elements=st.floats(-5, 5, allow_nan=False, allow_infinity=False))
)


@given(path_arrays)
def test_first_level_is_increment(pts):
    sig = truncated_signature(Path(pts), 3)
    assert sig.coeffs[0] == 1.0
    np.testing.assert_allclose(sig.level(1), pts[-1] - pts[0], atol=1e-12)


@given(path_arrays)
def test_shuffle_level_two(pts):
    sig = truncated_signature(Path(pts), 2)
    d = pts.shape[1]
    l2 = sig.level(2).reshape(d, d)
    l1 = sig.level(1)
    scale = max(1.0, np.abs(l1).max() ** 2)
    np.testing.assert_allclose(l2 + l2.T, np.outer(l1, l1), atol=1e-10 * scale)


@given(path_arrays, st.data())
def test_duplicate_point_invariance(pts, data):
    i = data.draw(st.integers(0, pts.shape[0] - 1))
    dup = np.insert(pts, i, pts[i], axis=0)
    a = truncated_signature(Path(pts), 3).coeffs
    b = truncated_signature(Path(dup), 3).coeffs
    np.testing.assert_allclose(a, b, atol=1e-12 * max(1.0, np.abs(a).max()))


@given(path_arrays, st.data())
def test_chen_any_split(pts, data):
    if pts.shape[0] < 3:
        pts = np.vstack([pts, pts[-1] + 1.0])
    cut = data.draw(st.integers(1, pts.shape[0] - 2))
    whole = truncated_signature(Path(pts), 3)
    glued = chen_concat(truncated_signature(Path(pts[: cut + 1]), 3), truncated_signature(Path(pts[cut:]), 3))
    np.testing.assert_allclose(whole.coeffs, glued.coeffs, atol=1e-10 * max(1.0, np.abs(whole.coeffs).max()))


@given(st.floats(-3, 3, allow_nan=False), st.integers(1, 6))
def test_one_dim_levels(a, m):
    sig = truncated_signature(Path(np.array([[0.0], [a]])), m)
    expected = [a**i / math.factorial(i) for i in range(m + 1)]
    np.testing.assert_allclose(sig.coeffs, expected, atol=1e-12)
