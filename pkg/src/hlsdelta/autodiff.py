"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for message-passing layers, per-graph normalization
and small MLP heads: elementwise arithmetic with broadcasting, matmul,
a few nonlinearities, reductions, concatenation, and the segment
(scatter/gather) operations that graph batching needs.

All ops preserve the dtype of their inputs, so the same model code runs
at float32 (training default) and float64 (gradient verification).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "relu",
    "leaky_relu",
    "exp",
    "sqrt",
    "tsum",
    "tmean",
    "concat",
    "gather_rows",
    "segment_sum",
    "segment_max",
    "segment_min",
    "smooth_l1",
    "smooth_l1_value",
]


class Tensor:
    """numpy array plus the plumbing needed to backpropagate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def backward(self, grad=None) -> None:
        """Accumulate gradients of self w.r.t. every reachable leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(_topo_order(self)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    # operator sugar; right-hand constants are wrapped at matching dtype
    def __add__(self, other):
        return add(self, as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, as_tensor(-1.0, self.dtype))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    return Tensor(arr)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _op(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _op(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _op(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _op(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _op(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _op(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    data = np.where(mask, x.data, 0.0).astype(x.data.dtype)

    def backward(g):
        _accum(x, np.where(mask, g, 0.0).astype(x.data.dtype))

    return _op(data, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    data = np.where(mask, x.data, slope * x.data).astype(x.data.dtype)

    def backward(g):
        _accum(x, np.where(mask, g, slope * g).astype(x.data.dtype))

    return _op(data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)

    def backward(g):
        _accum(x, g * data)

    return _op(data, (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)

    def backward(g):
        _accum(x, g / (2.0 * data))

    return _op(data, (x,), backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype))
        else:
            g_exp = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g_exp, x.data.shape).astype(x.data.dtype))

    return _op(data, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), as_tensor(1.0 / count, x.dtype))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _op(data, tuple(tensors), backward)


def gather_rows(x: Tensor, index: np.ndarray, scatter=None) -> Tensor:
    """out[i] = x[index[i]]; the scatter-add adjoint of row indexing.

    `scatter` may supply a precomputed (rows x len(index)) CSR matrix whose
    product with g performs the adjoint scatter-add (fast path for batches).
    """
    data = x.data[index]

    def backward(g):
        if scatter is not None:
            _accum(x, scatter @ g)
        else:
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            _accum(x, gx)

    return _op(data, (x,), backward)


def segment_sum(x: Tensor, segments: np.ndarray, num_segments: int, scatter=None) -> Tensor:
    """Row-wise scatter-add: out[s] = sum of x rows with segments == s."""
    if scatter is not None:
        data = scatter @ x.data
    else:
        data = np.zeros((num_segments,) + x.data.shape[1:], dtype=x.data.dtype)
        np.add.at(data, segments, x.data)

    def backward(g):
        _accum(x, g[segments])

    return _op(data, (x,), backward)


def _segment_extreme(x: Tensor, segments: np.ndarray, num_segments: int,
                     is_max: bool, bounds=None) -> Tensor:
    ufunc = np.maximum if is_max else np.minimum
    shape = (num_segments,) + x.data.shape[1:]
    if bounds is not None:
        # segments sorted ascending; bounds = (starts of nonempty, nonempty mask)
        starts, nonempty = bounds
        data = np.zeros(shape, dtype=x.data.dtype)
        if starts.size:
            data[nonempty] = ufunc.reduceat(x.data, starts, axis=0)
        empty = np.broadcast_to(~nonempty[:, None], shape)
    else:
        fill = -np.inf if is_max else np.inf
        data = np.full(shape, fill, dtype=x.data.dtype)
        ufunc.at(data, segments, x.data)
        empty = np.isinf(data)
        data = np.where(empty, 0.0, data).astype(x.data.dtype)

    def backward(g):
        winners = (x.data == data[segments]) & ~empty[segments]
        wf = winners.astype(x.data.dtype)
        ties = np.zeros(shape, dtype=x.data.dtype)
        if bounds is not None and bounds[0].size:
            ties[bounds[1]] = np.add.reduceat(wf, bounds[0], axis=0)
        else:
            np.add.at(ties, segments, wf)
        ties = np.maximum(ties, 1.0)
        # gradient split evenly across tied extrema within a segment
        _accum(x, np.where(winners, g[segments] / ties[segments], 0.0).astype(x.data.dtype))

    return _op(data, (x,), backward)


def segment_max(x: Tensor, segments: np.ndarray, num_segments: int, bounds=None) -> Tensor:
    """Per-segment column-wise max; empty segments yield 0."""
    return _segment_extreme(x, segments, num_segments, is_max=True, bounds=bounds)


def segment_min(x: Tensor, segments: np.ndarray, num_segments: int, bounds=None) -> Tensor:
    """Per-segment column-wise min; empty segments yield 0."""
    return _segment_extreme(x, segments, num_segments, is_max=False, bounds=bounds)


def smooth_l1_value(a, b, beta: float = 1.0):
    """SmoothL1(a, b): 0.5*(a-b)^2 where |a-b| < beta, else |a-b| - 0.5*beta."""
    e = np.asarray(a) - np.asarray(b)
    ae = np.abs(e)
    return np.where(ae < beta, 0.5 * e * e, ae - 0.5 * beta)


def smooth_l1(pred: Tensor, target: Tensor, beta: float = 1.0) -> Tensor:
    e = pred.data - target.data
    ae = np.abs(e)
    quad = ae < beta
    data = np.where(quad, 0.5 * e * e, ae - 0.5 * beta).astype(pred.data.dtype)

    def backward(g):
        d = np.where(quad, e, np.sign(e)).astype(pred.data.dtype)
        _accum(pred, _unbroadcast(g * d, pred.data.shape))
        _accum(target, _unbroadcast(-g * d, target.data.shape))

    return _op(data, (pred, target), backward)
