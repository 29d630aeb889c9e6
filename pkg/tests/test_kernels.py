"""Kernel backends: compiled and numpy implementations must agree exactly."""

import numpy as np
import pytest

from emoloop import kernels
from emoloop.kernels import conv_np


def cases():
    rng = np.random.default_rng(11)
    return [
        (rng.normal(size=(2, 3, 8, 8)), 3, 3, 1),
        (rng.normal(size=(1, 1, 5, 7)), 3, 3, 1),
        (rng.normal(size=(3, 4, 6, 6)), 1, 1, 0),
        (rng.normal(size=(2, 2, 4, 4)), 3, 3, 0),
    ]


@pytest.mark.parametrize("idx", range(4))
def test_im2col_backends_agree(idx):
    x, kh, kw, pad = cases()[idx]
    a = kernels.im2col(np.ascontiguousarray(x), kh, kw, pad)
    b = conv_np.im2col(x, kh, kw, pad)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("idx", range(4))
def test_col2im_backends_agree(idx):
    x, kh, kw, pad = cases()[idx]
    _, c, h, w = x.shape
    cols = kernels.im2col(np.ascontiguousarray(x), kh, kw, pad)
    a = kernels.col2im(np.ascontiguousarray(cols), c, h, w, kh, kw, pad)
    b = conv_np.col2im(cols, c, h, w, kh, kw, pad)
    assert np.array_equal(a, b)


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), y> == <x, col2im(y)> for random y: the pair is a valid
    # linear-operator transpose, which is what conv backward relies on.
    rng = np.random.default_rng(12)
    x = rng.normal(size=(2, 3, 6, 6))
    cols = kernels.im2col(np.ascontiguousarray(x), 3, 3, 1)
    y = rng.normal(size=cols.shape)
    lhs = float((cols * y).sum())
    back = kernels.col2im(np.ascontiguousarray(y), 3, 6, 6, 3, 3, 1)
    rhs = float((x * back).sum())
    assert abs(lhs - rhs) < 1e-9


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "numpy")
