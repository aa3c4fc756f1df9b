"""Paired baseline/delta regression model over twin graph encoders.

Two parameter-disjoint encoders embed the kernel and design graphs.  A
kernel head predicts the pragma-free baseline from the kernel embedding
alone; a delta head sees both graph embeddings plus (optionally) an
adapted code embedding and predicts the pragma-induced change.  The
design prediction is always the literal sum of the two head outputs.

The direct variant (use_diff=False) keeps the same trunk at matched
capacity but feeds the concatenated embeddings to a single design head
trained on the design target alone.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, concat, smooth_l1, tmean
from .graphs import NODE_FEATURE_DIM, TARGETS, GraphBatch, PairedSample, batch_graphs
from .layers import BACKBONES, GraphEncoder, Linear, Mlp

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    backbone: str = "SAGE"
    num_layers: int = 2
    hidden_dim: int = 128
    code_dim: int | None = None
    use_diff: bool = True
    use_code_emb: bool = True
    dropout: float = 0.02
    target: str = "DSP"

    def validate(self) -> None:
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.use_code_emb and not (self.code_dim and self.code_dim > 0):
            raise ValueError("code_dim must be positive when use_code_emb is set")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        cfg = cls(**obj)
        cfg.validate()
        return cfg


@dataclass
class TargetNormalizer:
    """Shared affine transform for kernel and design targets; deltas scale by sigma."""

    mu: float = 0.0
    sigma: float = 1.0

    @classmethod
    def fit(cls, values) -> "TargetNormalizer":
        arr = np.asarray(values, dtype=np.float64)
        sigma = float(arr.std())
        return cls(mu=float(arr.mean()), sigma=max(sigma, 1e-12))

    def normalize(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mu) / self.sigma

    def denormalize(self, y_norm):
        return np.asarray(y_norm, dtype=np.float64) * self.sigma + self.mu

    def scale_delta(self, delta):
        return np.asarray(delta, dtype=np.float64) / self.sigma

    def unscale_delta(self, delta_norm):
        return np.asarray(delta_norm, dtype=np.float64) * self.sigma


@dataclass
class ForwardOutputs:
    """All intermediate embeddings and head outputs in normalized space."""

    h_k: Tensor
    h_d: Tensor
    h_c: Tensor | None
    h_delta: Tensor
    y_k_hat: Tensor | None
    delta_hat: Tensor | None
    y_d_hat: Tensor


class BaselineDeltaModel:
    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        d = config.hidden_dim
        self.enc_kernel = GraphEncoder(
            config.backbone, config.num_layers, NODE_FEATURE_DIM, d, rng, dtype,
            drop_rate=config.dropout,
        )
        self.enc_design = GraphEncoder(
            config.backbone, config.num_layers, NODE_FEATURE_DIM, d, rng, dtype,
            drop_rate=config.dropout,
        )
        self.adapter = (
            Linear(config.code_dim, d, rng, dtype) if config.use_code_emb else None
        )
        delta_in = 3 * d if config.use_code_emb else 2 * d
        if config.use_diff:
            self.head_kernel = Mlp(d, rng, dtype, drop_rate=config.dropout)
            self.head_delta = Mlp(delta_in, rng, dtype, drop_rate=config.dropout)
            self.head_design = None
        else:
            self.head_kernel = None
            self.head_delta = None
            self.head_design = Mlp(delta_in, rng, dtype, drop_rate=config.dropout)
        self.normalizer = TargetNormalizer()

    # -- parameters ---------------------------------------------------------

    def named_parameters(self):
        yield from self.enc_kernel.named_parameters("enc_kernel")
        yield from self.enc_design.named_parameters("enc_design")
        if self.adapter is not None:
            yield from self.adapter.named_parameters("adapter")
        if self.head_kernel is not None:
            yield from self.head_kernel.named_parameters("head_kernel")
        if self.head_delta is not None:
            yield from self.head_delta.named_parameters("head_delta")
        if self.head_design is not None:
            yield from self.head_design.named_parameters("head_design")

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def set_degree_stats(self, kernel_scale: float, design_scale: float) -> None:
        self.enc_kernel.set_degree_stats(kernel_scale)
        self.enc_design.set_degree_stats(design_scale)

    # -- forward ------------------------------------------------------------

    def adapt_code_embedding(self, z: np.ndarray) -> Tensor:
        """Affine map from code-embedding space (L) to the graph space (D)."""
        if self.adapter is None:
            raise ValueError("model was built without a code-embedding adapter")
        z = np.asarray(z, dtype=self.dtype)
        if z.ndim == 1:
            z = z[None, :]
        if z.shape[1] != self.config.code_dim:
            raise ValueError(
                f"embedding length {z.shape[1]} != configured code_dim {self.config.code_dim}"
            )
        return self.adapter(Tensor(z))

    def forward(
        self,
        batch_k: GraphBatch,
        batch_d: GraphBatch,
        embeddings: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ForwardOutputs:
        if self.config.use_code_emb and embeddings is None:
            raise ValueError("model requires code embeddings but none were given")
        if not self.config.use_code_emb and embeddings is not None:
            raise ValueError("model was built without code embeddings")
        h_k = self.enc_kernel(batch_k, training=training, rng=rng)
        h_d = self.enc_design(batch_d, training=training, rng=rng)
        h_c = None
        parts = [h_k, h_d]
        if self.config.use_code_emb:
            h_c = self.adapt_code_embedding(embeddings)
            parts.append(h_c)
        h_delta = concat(parts, axis=1)
        if self.config.use_diff:
            y_k_hat = self.head_kernel(h_k, training=training, rng=rng)
            delta_hat = self.head_delta(h_delta, training=training, rng=rng)
            y_d_hat = y_k_hat + delta_hat
        else:
            y_k_hat = None
            delta_hat = None
            y_d_hat = self.head_design(h_delta, training=training, rng=rng)
        return ForwardOutputs(h_k, h_d, h_c, h_delta, y_k_hat, delta_hat, y_d_hat)

    def forward_pair(
        self,
        sample: PairedSample,
        embedding: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ForwardOutputs:
        batch_k = batch_graphs([sample], "kernel", dtype=self.dtype)
        batch_d = batch_graphs([sample], "design", dtype=self.dtype)
        z = None if embedding is None else np.asarray(embedding)[None, :]
        return self.forward(batch_k, batch_d, z, training=training, rng=rng)

    def predict_design(self, sample: PairedSample, embedding=None) -> float:
        """Design prediction in raw target units (evaluation mode)."""
        out = self.forward_pair(sample, embedding, training=False)
        return float(self.normalizer.denormalize(out.y_d_hat.data[0, 0]))

    # -- loss ---------------------------------------------------------------

    def normalized_targets(self, samples: list[PairedSample]):
        """(y_k, delta, y_d) in normalized space; delta scales raw y_d - y_k."""
        y_k = np.array([s.y_k for s in samples], dtype=np.float64)
        y_d = np.array([s.y_d for s in samples], dtype=np.float64)
        yk_n = self.normalizer.normalize(y_k).astype(self.dtype)[:, None]
        yd_n = self.normalizer.normalize(y_d).astype(self.dtype)[:, None]
        dn = self.normalizer.scale_delta(y_d - y_k).astype(self.dtype)[:, None]
        return yk_n, dn, yd_n

    def loss(self, outputs: ForwardOutputs, yk_n, dn, yd_n) -> Tensor:
        """Three-term SmoothL1 objective (or the single design term w/o diff)."""
        yd_t = Tensor(np.asarray(yd_n, dtype=self.dtype))
        if not self.config.use_diff:
            return tmean(smooth_l1(outputs.y_d_hat, yd_t))
        yk_t = Tensor(np.asarray(yk_n, dtype=self.dtype))
        dn_t = Tensor(np.asarray(dn, dtype=self.dtype))
        term_k = tmean(smooth_l1(outputs.y_k_hat, yk_t))
        term_d = tmean(smooth_l1(outputs.delta_hat, dn_t))
        term_c = tmean(smooth_l1(outputs.y_d_hat, yd_t))
        return term_k + term_d + term_c


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> BaselineDeltaModel:
    return BaselineDeltaModel(config, np.random.default_rng(seed), dtype=dtype)


# ---------------------------------------------------------------------------
# Checkpoint format: one .npz document, parameters as little-endian float32
# ---------------------------------------------------------------------------


def save_checkpoint(model: BaselineDeltaModel, path) -> None:
    arrays = {
        name: tensor.data.astype("<f4") for name, tensor in model.named_parameters()
    }
    for side, enc in (("enc_kernel", model.enc_kernel), ("enc_design", model.enc_design)):
        scale = enc.get_degree_stats()
        if scale is not None:
            arrays[f"{side}.delta_scale"] = np.asarray(scale, dtype="<f8")
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "normalizer": {"mu": model.normalizer.mu, "sigma": model.normalizer.sigma},
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, dtype=np.float32) -> BaselineDeltaModel:
    with open(path, "rb") as fh:
        payload = io.BytesIO(fh.read())
    archive = np.load(payload)
    if "__meta__" not in archive:
        raise ValueError(f"{path} is not a model checkpoint (missing metadata)")
    meta = json.loads(bytes(archive["__meta__"].tobytes()).decode("utf-8"))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    config = ModelConfig.from_dict(meta["config"])
    model = build_model(config, seed=0, dtype=dtype)
    model.normalizer = TargetNormalizer(**meta["normalizer"])
    for name, tensor in model.named_parameters():
        if name not in archive:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        arr = archive[name].astype(dtype)
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint parameter {name!r} has shape {arr.shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = arr
    for side, enc in (("enc_kernel", model.enc_kernel), ("enc_design", model.enc_design)):
        key = f"{side}.delta_scale"
        if key in archive:
            enc.set_degree_stats(float(archive[key]))
    return model
