import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oat_lab.errors import DomainError, EmptyBatchError, ShapeError
from oat_lab.tensor import argmax_rows, ewise, is_one_hot, matmul, mean_rows, one_hot, softmax_rows

finite = st.floats(-50, 50, allow_nan=False, width=32)


def matrices(max_rows=8, max_cols=12):
    shape = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shape.flatmap(lambda s: arrays(np.float32, s, elements=finite))


def test_matmul_examples():
    b = np.array([[3, 4], [5, 6]], dtype=np.float32)
    assert np.array_equal(matmul(np.eye(2, dtype=np.float32), b), b)
    out = matmul(np.array([[1., 2.], [3., 4.]]), np.array([[5.], [6.]]))
    assert out.tolist() == [[17.0], [39.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_ewise_examples():
    assert ewise("add", np.array([1., 2.]), np.array([3., 4.])).tolist() == [4., 6.]
    assert ewise("div", np.array([0., 1.]), np.array([.5, .5])).tolist() == [0., 2.]
    out = ewise("mul", np.array([[1., 2.], [3., 4.]]), np.array([10., 100.]))
    assert out.tolist() == [[10., 200.], [30., 400.]]


def test_ewise_errors():
    with pytest.raises(ShapeError):
        ewise("add", np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(DomainError):
        ewise("div", np.ones(2), np.array([1.0, 0.0]))


def test_softmax_examples():
    assert np.allclose(softmax_rows(np.zeros((1, 4))), 0.25)
    assert np.allclose(softmax_rows(np.array([[math.log(3), 0.0]])), [[0.75, 0.25]])
    big = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(big)) and big[0, 0] == 1.0


def test_mean_rows_examples():
    assert mean_rows(np.array([[1., 3.], [3., 5.]])).tolist() == [[2., 4.]]
    assert mean_rows(np.array([[7., 8.]])).tolist() == [[7., 8.]]
    assert mean_rows(np.array([[1., -1.], [-1., 1.]])).tolist() == [[0., 0.]]
    with pytest.raises(EmptyBatchError):
        mean_rows(np.zeros((0, 3)))


def test_argmax_examples():
    assert argmax_rows(np.array([[0.2, 0.5, 0.3]])) == [1]
    assert argmax_rows(np.array([[1., 1.]])) == [0]
    assert argmax_rows(np.array([[-3., -1., -2.]])) == [1]


def test_one_hot_helpers():
    y = one_hot([2, 0], 3)
    assert y.tolist() == [[0, 0, 1], [1, 0, 0]]
    assert is_one_hot(y)
    assert not is_one_hot(np.array([[0.5, 0.5]]))
    assert not is_one_hot(np.array([[1, 1]]))


@given(matrices())
def test_softmax_rows_on_simplex(x):
    s = softmax_rows(x)
    assert np.all(s > 0)
    assert np.max(np.abs(s.sum(axis=1) - 1)) <= 1e-6


@given(matrices(), st.floats(-100, 100))
def test_softmax_shift_invariance(x, k):
    shifted = softmax_rows(x + np.float32(k))
    assert np.max(np.abs(shifted - softmax_rows(x))) <= 1e-6


@given(matrices())
def test_argmax_survives_softmax(x):
    top = np.sort(x, axis=1)
    if x.shape[1] > 1 and np.any(top[:, -1] - top[:, -2] < 1e-3):
        return  # near-ties can collapse after rounding
    assert argmax_rows(softmax_rows(x)) == argmax_rows(x)


@given(arrays(np.float32, st.tuples(st.just(1), st.integers(1, 20)), elements=finite))
def test_mean_of_single_row_is_bitwise(row):
    assert np.array_equal(mean_rows(row), row)


@settings(max_examples=50)
@given(matrices())
def test_matmul_identity_is_bitwise(a):
    assert np.array_equal(matmul(a, np.eye(a.shape[1], dtype=a.dtype)), a)
