"""Message-passing layers, GraphNorm, readout and MLP blocks.

Every block operates on a GraphBatch (disjoint union of graphs) and
autodiff Tensors, so analytic gradients come from the reverse-mode tape
and can be verified against central finite differences.

Layer semantics:

* GCN      h'_i = W * sum_{j in N(i) u {i}} h_j / sqrt(dhat_i dhat_j), dhat = deg + 1
* SAGE     h'_i = W_self h_i + W_nbr mean_{j in N(i)} h_j   (empty mean = 0)
* GAT      4 heads, attention softmax over N(i) u {i}, LeakyReLU(0.2) logits,
           head outputs averaged
* PNA      {mean, max, min, std} x {1, log(d+1)/delta, delta/log(d+1)} over
           N(i), concatenated with h_i, then a linear map; d = 0 rows get an
           all-zero aggregation block

Neighborhoods N(i) are taken over the symmetrized edge set (self edges
dropped); edge kinds are carried by the data format but do not alter
aggregation.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    as_tensor,
    concat,
    exp,
    gather_rows,
    leaky_relu,
    matmul,
    relu,
    segment_max,
    segment_min,
    segment_sum,
    sqrt,
)
from .graphs import GraphBatch

BACKBONES = ("GCN", "SAGE", "GAT", "PNA")
GAT_HEADS = 4
GAT_SLOPE = 0.2
PNA_STD_EPS = 1e-8
GRAPHNORM_EPS = 1e-5
MLP_HIDDEN = (128, 64)


class ShapeError(ValueError):
    """Input feature width does not match the layer's declared input_dim."""


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def zeros_param(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-rate) so eval is identity."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an RNG")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * Tensor(keep)


def _check_dim(x: Tensor, expected: int, who: str) -> None:
    if x.data.ndim != 2 or x.data.shape[1] != expected:
        raise ShapeError(f"{who} expected input dim {expected}, got {x.data.shape}")


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng, dtype, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = glorot(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        self.b = zeros_param((out_dim,), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        _check_dim(x, self.in_dim, "Linear")
        out = matmul(x, self.W)
        return out + self.b if self.b is not None else out

    def named_parameters(self, prefix: str):
        yield f"{prefix}.W", self.W
        if self.b is not None:
            yield f"{prefix}.b", self.b


def _inv_counts(batch: GraphBatch, dtype) -> Tensor:
    counts = np.maximum(batch.degrees, 1).astype(dtype)
    return Tensor((1.0 / counts)[:, None])


def _neighbor_mean(batch: GraphBatch, x: Tensor) -> Tensor:
    gathered = gather_rows(x, batch.msg_src, scatter=batch.scatter_for("msg_src"))
    total = segment_sum(
        gathered, batch.msg_dst, batch.num_nodes, scatter=batch.scatter_for("msg_dst")
    )
    return total * _inv_counts(batch, x.dtype)


class GcnLayer:
    backbone = "GCN"

    def __init__(self, in_dim: int, out_dim: int, rng, dtype, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = glorot(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        self.b = zeros_param((out_dim,), dtype) if bias else None

    def __call__(self, batch: GraphBatch, x: Tensor) -> Tensor:
        _check_dim(x, self.in_dim, "GcnLayer")
        dtype = x.data.dtype
        dhat = (batch.degrees + 1).astype(dtype)
        xw = matmul(x, self.W)
        coef = (1.0 / np.sqrt(dhat[batch.msg_dst] * dhat[batch.msg_src]))[:, None]
        msgs = gather_rows(xw, batch.msg_src, scatter=batch.scatter_for("msg_src")) * Tensor(coef)
        agg = segment_sum(
            msgs, batch.msg_dst, batch.num_nodes, scatter=batch.scatter_for("msg_dst")
        )
        out = agg + xw * Tensor((1.0 / dhat)[:, None])
        return out + self.b if self.b is not None else out

    def named_parameters(self, prefix: str):
        yield f"{prefix}.W", self.W
        if self.b is not None:
            yield f"{prefix}.b", self.b


class SageLayer:
    backbone = "SAGE"

    def __init__(self, in_dim: int, out_dim: int, rng, dtype, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W_self = glorot(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        self.W_nbr = glorot(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        self.b = zeros_param((out_dim,), dtype) if bias else None

    def __call__(self, batch: GraphBatch, x: Tensor) -> Tensor:
        _check_dim(x, self.in_dim, "SageLayer")
        out = matmul(x, self.W_self) + matmul(_neighbor_mean(batch, x), self.W_nbr)
        return out + self.b if self.b is not None else out

    def named_parameters(self, prefix: str):
        yield f"{prefix}.W_self", self.W_self
        yield f"{prefix}.W_nbr", self.W_nbr
        if self.b is not None:
            yield f"{prefix}.b", self.b


class GatLayer:
    backbone = "GAT"

    def __init__(self, in_dim: int, out_dim: int, rng, dtype, bias: bool = True,
                 heads: int = GAT_HEADS):
        self.in_dim, self.out_dim, self.heads = in_dim, out_dim, heads
        self.W = [glorot(rng, in_dim, out_dim, (in_dim, out_dim), dtype) for _ in range(heads)]
        self.a_self = [glorot(rng, out_dim, 1, (out_dim, 1), dtype) for _ in range(heads)]
        self.a_neigh = [glorot(rng, out_dim, 1, (out_dim, 1), dtype) for _ in range(heads)]
        self.b = zeros_param((out_dim,), dtype) if bias else None

    def _head(self, batch: GraphBatch, x: Tensor, h: int, esrc, edst):
        n = batch.num_nodes
        sc_src = batch.scatter_for("gat_src")
        sc_dst = batch.scatter_for("gat_dst")
        bounds = batch.bounds_for("gat_dst")
        z = matmul(x, self.W[h])
        s_self = matmul(z, self.a_self[h])
        s_neigh = matmul(z, self.a_neigh[h])
        logits = leaky_relu(
            gather_rows(s_self, edst, scatter=sc_dst)
            + gather_rows(s_neigh, esrc, scatter=sc_src),
            GAT_SLOPE,
        )
        shift = gather_rows(segment_max(logits, edst, n, bounds=bounds), edst, scatter=sc_dst)
        weights = exp(logits - shift)
        denom = segment_sum(weights, edst, n, scatter=sc_dst)
        alpha = weights / gather_rows(denom, edst, scatter=sc_dst)
        msgs = gather_rows(z, esrc, scatter=sc_src) * alpha
        return segment_sum(msgs, edst, n, scatter=sc_dst), alpha

    def __call__(self, batch: GraphBatch, x: Tensor) -> Tensor:
        out, _ = self.forward_with_attention(batch, x)
        return out

    def forward_with_attention(self, batch: GraphBatch, x: Tensor):
        """Returns (output, (edge_src, edge_dst, per-head alpha arrays))."""
        _check_dim(x, self.in_dim, "GatLayer")
        esrc, edst = batch.gat_edges
        total = None
        alphas = []
        for h in range(self.heads):
            hout, alpha = self._head(batch, x, h, esrc, edst)
            total = hout if total is None else total + hout
            alphas.append(alpha.data)
        out = total * as_tensor(1.0 / self.heads, x.dtype)
        if self.b is not None:
            out = out + self.b
        return out, (esrc, edst, alphas)

    def named_parameters(self, prefix: str):
        for h in range(self.heads):
            yield f"{prefix}.head{h}.W", self.W[h]
            yield f"{prefix}.head{h}.a_self", self.a_self[h]
            yield f"{prefix}.head{h}.a_neigh", self.a_neigh[h]
        if self.b is not None:
            yield f"{prefix}.b", self.b


class PnaLayer:
    backbone = "PNA"

    AGGREGATORS = ("mean", "max", "min", "std")
    SCALERS = ("identity", "amplification", "attenuation")

    def __init__(self, in_dim: int, out_dim: int, rng, dtype, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        mix_dim = in_dim * (1 + len(self.AGGREGATORS) * len(self.SCALERS))
        self.W = glorot(rng, mix_dim, out_dim, (mix_dim, out_dim), dtype)
        self.b = zeros_param((out_dim,), dtype) if bias else None
        self.delta_scale: float | None = None

    def __call__(self, batch: GraphBatch, x: Tensor) -> Tensor:
        _check_dim(x, self.in_dim, "PnaLayer")
        if self.delta_scale is None:
            raise ValueError("PNA degree statistic delta_scale is unset")
        dtype = x.data.dtype
        n = batch.num_nodes
        deg = batch.degrees
        inv = _inv_counts(batch, dtype)

        sc_src = batch.scatter_for("msg_src")
        sc_dst = batch.scatter_for("msg_dst")
        bounds = batch.bounds_for("msg_dst")
        nb = gather_rows(x, batch.msg_src, scatter=sc_src)
        agg_mean = segment_sum(nb, batch.msg_dst, n, scatter=sc_dst) * inv
        agg_max = segment_max(nb, batch.msg_dst, n, bounds=bounds)
        agg_min = segment_min(nb, batch.msg_dst, n, bounds=bounds)
        dev = nb - gather_rows(agg_mean, batch.msg_dst, scatter=sc_dst)
        var = segment_sum(dev * dev, batch.msg_dst, n, scatter=sc_dst) * inv
        agg_std = sqrt(var + as_tensor(PNA_STD_EPS, dtype))

        logd = np.log(deg + 1.0).astype(dtype)
        mask = (deg > 0).astype(dtype)
        amp = logd / self.delta_scale
        with np.errstate(divide="ignore"):
            att = np.where(deg > 0, self.delta_scale / np.where(deg > 0, logd, 1.0), 0.0)
        scaler_cols = [
            Tensor((s * mask)[:, None].astype(dtype))
            for s in (np.ones_like(logd), amp, att)
        ]
        blocks = [x]
        for agg in (agg_mean, agg_max, agg_min, agg_std):
            for scaler in scaler_cols:
                blocks.append(agg * scaler)
        out = matmul(concat(blocks, axis=1), self.W)
        return out + self.b if self.b is not None else out

    def named_parameters(self, prefix: str):
        yield f"{prefix}.W", self.W
        if self.b is not None:
            yield f"{prefix}.b", self.b


def make_conv(backbone: str, in_dim: int, out_dim: int, rng, dtype):
    table = {"GCN": GcnLayer, "SAGE": SageLayer, "GAT": GatLayer, "PNA": PnaLayer}
    if backbone not in table:
        raise ValueError(f"unknown backbone {backbone!r}; expected one of {BACKBONES}")
    return table[backbone](in_dim, out_dim, rng, dtype)


class GraphNorm:
    """Per-graph per-feature normalization with a learnable center weight.

    out = gamma * (x - alpha*mu_g) / sqrt(Var_g[x - alpha*mu_g] + eps) + beta
    """

    def __init__(self, dim: int, dtype, eps: float = GRAPHNORM_EPS):
        self.dim = dim
        self.eps = eps
        self.alpha = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, batch: GraphBatch, x: Tensor) -> Tensor:
        _check_dim(x, self.dim, "GraphNorm")
        dtype = x.data.dtype
        g = batch.batch_size
        memb = batch.membership
        sc = batch.scatter_for("membership")
        inv_n = Tensor((1.0 / np.maximum(batch.nodes_per_graph, 1).astype(dtype))[:, None])
        mu = segment_sum(x, memb, g, scatter=sc) * inv_n
        shifted = x - gather_rows(mu, memb, scatter=sc) * self.alpha
        shifted_mean = segment_sum(shifted, memb, g, scatter=sc) * inv_n
        dev = shifted - gather_rows(shifted_mean, memb, scatter=sc)
        var = segment_sum(dev * dev, memb, g, scatter=sc) * inv_n
        denom = sqrt(var + as_tensor(self.eps, dtype))
        return self.gamma * (shifted / gather_rows(denom, memb, scatter=sc)) + self.beta

    def named_parameters(self, prefix: str):
        yield f"{prefix}.alpha", self.alpha
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta


def sum_pool(batch: GraphBatch, x: Tensor) -> Tensor:
    """Graph-level readout: row g is the sum over the nodes of graph g."""
    return segment_sum(
        x, batch.membership, batch.batch_size, scatter=batch.scatter_for("membership")
    )


class Mlp:
    """Regression head template: in -> 128 -> 64 -> 1 with one dropout slot."""

    def __init__(self, in_dim: int, rng, dtype, drop_rate: float = 0.02):
        self.in_dim = in_dim
        self.drop_rate = drop_rate
        dims = (in_dim,) + MLP_HIDDEN + (1,)
        self.layers = [
            Linear(dims[i], dims[i + 1], rng, dtype) for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        h = relu(self.layers[0](x))
        h = dropout(h, self.drop_rate, rng, training)
        h = relu(self.layers[1](h))
        return self.layers[2](h)

    def named_parameters(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.fc{i}")


class GraphEncoder:
    """Stack of (conv -> GraphNorm -> ReLU -> Dropout) blocks plus sum pooling."""

    def __init__(self, backbone: str, num_layers: int, in_dim: int, hidden_dim: int,
                 rng, dtype, drop_rate: float = 0.02):
        if num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        self.backbone = backbone
        self.drop_rate = drop_rate
        self.convs = []
        self.norms = []
        for i in range(num_layers):
            self.convs.append(make_conv(backbone, in_dim if i == 0 else hidden_dim,
                                        hidden_dim, rng, dtype))
            self.norms.append(GraphNorm(hidden_dim, dtype))

    def set_degree_stats(self, delta_scale: float) -> None:
        if delta_scale <= 0:
            raise ValueError(f"delta_scale must be positive, got {delta_scale}")
        for conv in self.convs:
            if isinstance(conv, PnaLayer):
                conv.delta_scale = float(delta_scale)

    def get_degree_stats(self) -> float | None:
        for conv in self.convs:
            if isinstance(conv, PnaLayer):
                return conv.delta_scale
        return None

    def __call__(self, batch: GraphBatch, training: bool = False, rng=None) -> Tensor:
        x = Tensor(batch.features)
        for conv, norm in zip(self.convs, self.norms):
            x = relu(norm(batch, conv(batch, x)))
            x = dropout(x, self.drop_rate, rng, training)
        return sum_pool(batch, x)

    def named_parameters(self, prefix: str):
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            yield from conv.named_parameters(f"{prefix}.conv{i}")
            yield from norm.named_parameters(f"{prefix}.norm{i}")


def degree_log_mean(batches: list[GraphBatch]) -> float:
    """Mean over all nodes of log(degree + 1); the PNA attenuation normalizer."""
    total, count = 0.0, 0
    for batch in batches:
        total += float(np.log(batch.degrees + 1.0).sum())
        count += batch.num_nodes
    if count == 0:
        raise ValueError("no nodes available for degree statistics")
    return total / count
