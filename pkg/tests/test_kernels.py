"""Compiled and numpy kernel backends must agree bit for bit."""

import numpy as np
import pytest

from agbpipe import kernels
from agbpipe.numcore import Tensor, ops

needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(), reason="compiled kernels not built"
)


@pytest.fixture
def both_backends():
    prev = kernels.active_backend()
    yield
    kernels.set_backend(prev)


def _cases(seed=0):
    r = np.random.default_rng(seed)
    for dtype in (np.float32, np.float64):
        for shape, k, stride, pad in [
            ((2, 3, 9, 7), 3, 2, 1),
            ((1, 1, 4, 4), 4, 4, 0),
            ((2, 6, 16, 16), 1, 1, 0),
            ((1, 2, 5, 5), 3, 1, 2),
        ]:
            yield r.standard_normal(shape).astype(dtype), k, stride, pad


@needs_compiled
def test_im2col_col2im_parity(both_backends):
    for x, k, stride, pad in _cases():
        B, C, H, W = x.shape
        kernels.set_backend("python")
        cols_py = kernels.im2col(x, k, k, stride, pad)
        kernels.set_backend("compiled")
        cols_c = kernels.im2col(x, k, k, stride, pad)
        assert np.array_equal(cols_py, cols_c)

        g = np.random.default_rng(1).standard_normal(cols_py.shape).astype(x.dtype)
        kernels.set_backend("python")
        back_py = kernels.col2im(g, B, C, H, W, k, k, stride, pad)
        kernels.set_backend("compiled")
        back_c = kernels.col2im(g, B, C, H, W, k, k, stride, pad)
        assert np.array_equal(back_py, back_c)


@needs_compiled
def test_masked_median_parity(both_backends):
    r = np.random.default_rng(2)
    for dtype in (np.float32, np.float64):
        vals = r.standard_normal((7, 500)).astype(dtype)
        valid = r.random((7, 500)) > 0.35
        valid[:, 0] = False  # exercise the empty column
        kernels.set_backend("python")
        a = kernels.masked_median(vals, valid, -9999.0)
        kernels.set_backend("compiled")
        b = kernels.masked_median(vals, valid, -9999.0)
        assert np.array_equal(a, b)
        assert a[0] == dtype(-9999.0)


@needs_compiled
def test_conv_forward_backward_identical_across_backends(both_backends):
    r = np.random.default_rng(3)
    x = r.standard_normal((2, 3, 10, 10)).astype(np.float32)
    w = r.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = r.standard_normal(4).astype(np.float32)

    results = {}
    for backend in ("python", "compiled"):
        kernels.set_backend(backend)
        xt = Tensor(x.copy(), requires_grad=True)
        wt = Tensor(w.copy(), requires_grad=True)
        bt = Tensor(b.copy(), requires_grad=True)
        y = ops.conv2d(xt, wt, bt, stride=1, padding=1)
        (y * y).sum().backward()
        results[backend] = (y.data, xt.grad, wt.grad, bt.grad)
    for a, bb in zip(results["python"], results["compiled"]):
        assert np.array_equal(a, bb)


def test_backend_selection_errors():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")
