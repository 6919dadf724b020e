import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ecglab.errors import DataError, ShapeError
from ecglab.loss import (
    EPSILON, LossConfig, bce_with_logits, build_mask, masked_bce, masked_bce_grad,
)


def naive_masked_bce(logits, Y, eps=EPSILON):
    """Loop over entries, skip -1, plain sigmoid-then-log BCE."""
    total, count = 0.0, 0
    for i in range(len(Y)):
        for j in range(len(Y[i])):
            if Y[i][j] == -1:
                continue
            p = 1.0 / (1.0 + math.exp(-logits[i][j]))
            total += -(Y[i][j] * math.log(p) + (1 - Y[i][j]) * math.log(1 - p))
            count += 1
    return total / (count + eps)


def central_differences(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_mask_worked_example():
    M, Yp = build_mask([[1, -1, 0]])
    np.testing.assert_array_equal(M, [[1, 0, 1]])
    np.testing.assert_array_equal(Yp, [[1, 0, 0]])


def test_mask_all_missing():
    M, Yp = build_mask(-np.ones((3, 4)))
    assert not M.any() and not Yp.any()


def test_mask_identity_when_observed():
    Y = np.array([[0, 1], [1, 1]])
    M, Yp = build_mask(Y)
    assert M.all()
    np.testing.assert_array_equal(Yp, Y)


def test_mask_rejects_other_values():
    with pytest.raises(DataError):
        build_mask([[2, 0]])


def test_loss_hand_values():
    # -log sigmoid(0) over one valid label
    assert masked_bce([[0.0, 0.0]], [[1, -1]]) == pytest.approx(math.log(2), abs=1e-6)
    # -log sigmoid(10) = log1p(exp(-10))
    assert masked_bce([[10.0]], [[1]]) == pytest.approx(4.54e-5, abs=1e-7)


def test_loss_all_missing_is_zero():
    assert masked_bce(np.random.default_rng(0).normal(size=(4, 5)), -np.ones((4, 5))) == 0.0


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        masked_bce(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        masked_bce_grad(np.zeros(3), np.zeros(3))


def test_grad_hand_value():
    g = masked_bce_grad([[0.0]], [[1]])
    # (sigmoid(0) - 1) / (1 + eps)
    assert g[0, 0] == pytest.approx(-0.5 / (1 + EPSILON), abs=1e-15)
    assert abs(g[0, 0] + 0.5) < 1e-8


def test_grad_zero_at_masked_positions():
    rng = np.random.default_rng(1)
    L = rng.normal(size=(5, 7)) * 5
    Y = rng.integers(-1, 2, size=(5, 7))
    g = masked_bce_grad(L, Y)
    assert np.all(g[Y == -1] == 0.0)


def test_grad_finite_differences_random_4x6():
    rng = np.random.default_rng(2)
    L = rng.normal(size=(4, 6)) * 2
    Y = rng.integers(-1, 2, size=(4, 6))
    fd = central_differences(lambda x: masked_bce(x, Y), L)
    np.testing.assert_allclose(masked_bce_grad(L, Y), fd, rtol=1e-5, atol=1e-10)


def test_matches_naive_reference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n, c = rng.integers(1, 9), rng.integers(1, 17)
        L = rng.normal(size=(n, c)) * 3
        Y = rng.integers(-1, 2, size=(n, c))
        assert masked_bce(L, Y) == pytest.approx(naive_masked_bce(L, Y), rel=1e-10, abs=0)


label_mats = st.tuples(st.integers(1, 8), st.integers(1, 16)).flatmap(
    lambda s: st.tuples(arrays(np.float64, s, elements=st.floats(-50, 50)),
                        arrays(np.int64, s, elements=st.sampled_from([-1, 0, 1]))))


@settings(max_examples=100)
@given(label_mats, st.data())
def test_masked_logits_do_not_matter(lm, data):
    L, Y = lm
    L2 = L.copy()
    noise = data.draw(arrays(np.float64, L.shape, elements=st.floats(-1e4, 1e4)))
    L2[Y == -1] = noise[Y == -1]
    assert masked_bce(L, Y) == masked_bce(L2, Y)


@settings(max_examples=100)
@given(label_mats)
def test_row_permutation_invariance(lm):
    L, Y = lm
    perm = np.random.default_rng(0).permutation(len(L))
    assert masked_bce(L[perm], Y[perm]) == pytest.approx(masked_bce(L, Y), rel=1e-12, abs=1e-300)


@given(st.floats(-20, 20), st.sampled_from([0, 1]), st.integers(1, 8), st.integers(1, 8))
def test_constant_terms_normalize(logit, y, n, c):
    b = float(bce_with_logits(logit, y))
    Y = np.full((n, c), y)
    count = n * c
    assert masked_bce(np.full((n, c), logit), Y) == pytest.approx(b * count / (count + EPSILON),
                                                                  rel=1e-12)


def test_stable_for_huge_logits():
    L = np.array([[1e4, -1e4, 1e4, -1e4]])
    Y = np.array([[1, 0, 0, 1]])
    val = masked_bce(L, Y)
    assert np.isfinite(val)
    assert val == pytest.approx(1e4 / 2, rel=1e-6)
    assert np.all(np.isfinite(masked_bce_grad(L, Y)))


def test_loss_config_validates():
    with pytest.raises(ValueError):
        LossConfig(0.0)
