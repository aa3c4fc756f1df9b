import numpy as np
import pytest

from fdcheck import finite_difference, max_rel_error
from hlsdelta.autodiff import (
    Tensor,
    concat,
    div,
    exp,
    gather_rows,
    leaky_relu,
    matmul,
    mul,
    relu,
    segment_max,
    segment_min,
    segment_sum,
    smooth_l1,
    smooth_l1_value,
    sqrt,
    tmean,
    tsum,
)


def check_grad(build, *arrays, tol=1e-7):
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()
    analytic = [t.grad.copy() for t in tensors]
    fds = [finite_difference(lambda: build(*tensors).item(), a) for a in arrays]
    assert max_rel_error(analytic, fds) < tol


def test_add_mul_broadcast_grads():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    b = rng.normal(size=(3,))
    s = rng.normal(size=(4, 1))
    check_grad(lambda tx, tb, ts: tsum(mul(tx + tb, ts)), x, b, s)


def test_matmul_div_exp_sqrt_grads():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    d = rng.uniform(1.0, 2.0, size=(3, 2))
    check_grad(lambda ta, tw, td: tsum(div(exp(matmul(ta, tw)) , td)), a, w, d)
    check_grad(lambda ta: tsum(sqrt(mul(ta, ta) + Tensor(np.full_like(a, 0.5)))), a)


def test_relu_leaky_grads_away_from_kink():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 4))
    x[np.abs(x) < 0.05] = 0.2
    check_grad(lambda t: tsum(relu(t)), x)
    check_grad(lambda t: tsum(leaky_relu(t, 0.2)), x)


def test_sum_mean_axes():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    out = tsum(x, axis=0)
    assert np.allclose(out.data, [3.0, 5.0, 7.0])
    assert tmean(x).item() == pytest.approx(2.5)
    tsum(mul(out, out)).backward()
    assert x.grad.shape == x.data.shape


def test_concat_grad_routing():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.full((2, 3), 2.0), requires_grad=True)
    out = concat([a, b], axis=1)
    assert out.data.shape == (2, 5)
    g = np.arange(10.0).reshape(2, 5)
    out.backward(g)
    assert np.array_equal(a.grad, g[:, :2])
    assert np.array_equal(b.grad, g[:, 2:])


def test_gather_and_segment_sum_adjoint():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3))
    idx = np.array([0, 2, 2, 3, 1])
    seg = np.array([0, 0, 1, 2, 2])
    check_grad(lambda t: tsum(mul(gather_rows(t, idx), gather_rows(t, idx))), x)
    check_grad(lambda t: tsum(mul(segment_sum(gather_rows(t, idx), seg, 3),
                                  Tensor(np.array([[1.0, 2, 3], [4, 5, 6], [7, 8, 9]])))), x)


def test_segment_sum_scatter_fast_path_matches():
    from scipy.sparse import csr_matrix

    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 2))
    seg = np.array([0, 0, 1, 1, 1, 3])
    sc = csr_matrix(
        (np.ones(6), (seg, np.arange(6))), shape=(4, 6)
    )
    slow = segment_sum(Tensor(x), seg, 4).data
    fast = segment_sum(Tensor(x), seg, 4, scatter=sc).data
    assert np.allclose(slow, fast)
    assert np.allclose(slow[2], 0.0)


def test_segment_extremes_and_bounds():
    x = np.array([[1.0], [5.0], [2.0], [-3.0], [4.0]])
    seg = np.array([0, 0, 1, 1, 1])
    counts = np.bincount(seg, minlength=3)
    nonempty = counts > 0
    starts = np.searchsorted(seg, np.arange(3))[nonempty]
    hi = segment_max(Tensor(x), seg, 3, bounds=(starts, nonempty))
    lo = segment_min(Tensor(x), seg, 3, bounds=(starts, nonempty))
    assert np.allclose(hi.data.ravel(), [5.0, 4.0, 0.0])
    assert np.allclose(lo.data.ravel(), [1.0, -3.0, 0.0])

    rng = np.random.default_rng(5)
    xr = rng.normal(size=(5, 2))
    check_grad(lambda t: tsum(mul(segment_max(t, seg, 3), Tensor(np.array([[1.0, 2], [3, 4], [5, 6]])))), xr)
    check_grad(lambda t: tsum(mul(segment_min(t, seg, 3), Tensor(np.array([[1.0, 2], [3, 4], [5, 6]])))), xr)


def test_smooth_l1_values_and_grad():
    assert smooth_l1_value(1.0, 1.0) == 0.0
    assert smooth_l1_value(0.5, 0.0) == pytest.approx(0.125)
    assert smooth_l1_value(3.0, 0.0) == pytest.approx(2.5)
    rng = np.random.default_rng(6)
    a = rng.normal(scale=2.0, size=(8,))
    b = rng.normal(scale=2.0, size=(8,))
    a[np.abs(a - b) < 0.05] += 0.2  # keep clear of the |e| = beta kink region
    check_grad(lambda t: tsum(smooth_l1(t, Tensor(b))), a)


def test_dtype_preserved_under_float32():
    x = Tensor(np.ones((3, 2), dtype=np.float32), requires_grad=True)
    out = tsum(relu(mul(x + 1.0, x)))
    assert out.data.dtype == np.float32
    out.backward()
    assert x.grad.dtype == np.float32
