"""Mini-batch training: Adam, plateau LR schedule, best-checkpoint selection.

One training run owns one model instance and is fully determined by the
TrainConfig seed: minibatch order, dropout masks and parameter init (when
the model is built from the same seed) replay identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .graphs import DatasetManifest, PairedSample, SplitAssignment, batch_graphs, batch_raw_graphs
from .layers import degree_log_mean
from .metrics import MetricsReport, compute_metrics
from .model import BaselineDeltaModel, TargetNormalizer


@dataclass
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 16
    max_epochs: int = 200
    plateau_patience: int = 15
    plateau_factor: float = 0.8
    seed: int = 0
    eval_every: int = 1

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "plateau_patience": self.plateau_patience,
            "plateau_factor": self.plateau_factor,
            "seed": self.seed,
            "eval_every": self.eval_every,
        }


class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class PlateauScheduler:
    """Multiply lr by `factor` after `patience` evaluations without strict
    improvement; the counter resets on improvement and on reduction."""

    def __init__(self, lr: float, patience: int = 15, factor: float = 0.8):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = math.inf
        self.bad_count = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_count = 0
        else:
            self.bad_count += 1
            if self.bad_count >= self.patience:
                self.lr *= self.factor
                self.bad_count = 0
        return self.lr


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "lr": self.lr,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
        }


def _embedding_matrix(table: EmbeddingTable | None, samples, model) -> np.ndarray | None:
    if not model.config.use_code_emb:
        return None
    return table.matrix([s.design_id for s in samples])


def _batch_loss(model, samples, table, cache, training, rng):
    batch_k = batch_graphs(samples, "kernel", dtype=model.dtype, cache=cache)
    batch_d = batch_graphs(samples, "design", dtype=model.dtype, cache=cache)
    z = _embedding_matrix(table, samples, model)
    outputs = model.forward(batch_k, batch_d, z, training=training, rng=rng)
    targets = model.normalized_targets(samples)
    return model.loss(outputs, *targets), outputs


def dataset_loss(model, samples, table=None, cache=None, chunk: int = 64) -> float:
    """Evaluation-mode loss, sample-weighted mean over chunks."""
    total, count = 0.0, 0
    for lo in range(0, len(samples), chunk):
        part = samples[lo : lo + chunk]
        loss, _ = _batch_loss(model, part, table, cache, training=False, rng=None)
        total += loss.item() * len(part)
        count += len(part)
    return total / count


def fit_degree_stats(model: BaselineDeltaModel, train_samples: list[PairedSample]) -> None:
    """Set each encoder's PNA normalizer from the graphs it will see."""
    if model.config.backbone != "PNA":
        return
    kernel_graphs = list({s.kernel_graph.graph_id: s.kernel_graph for s in train_samples}.values())
    design_graphs = [s.design_graph for s in train_samples]
    k_scale = degree_log_mean([batch_raw_graphs(kernel_graphs, dtype=model.dtype)])
    d_scale = degree_log_mean([batch_raw_graphs(design_graphs, dtype=model.dtype)])
    model.set_degree_stats(k_scale, d_scale)


def train(
    model: BaselineDeltaModel,
    dataset: DatasetManifest,
    split: SplitAssignment,
    table: EmbeddingTable | None = None,
    cfg: TrainConfig | None = None,
) -> TrainHistory:
    """Run Algorithm-style minibatch training; leaves the model at the
    parameters of the best validation epoch and returns the history."""
    cfg = cfg or TrainConfig()
    cfg.validate()
    train_samples = split.subset(dataset, "train")
    val_samples = split.subset(dataset, "val")
    if not train_samples:
        raise ValueError("training split is empty")
    if not val_samples:
        raise ValueError("validation split is empty")
    if model.config.use_code_emb:
        if table is None:
            raise ValueError("model requires code embeddings but no table was given")
        table.check_covers(dataset.design_ids())

    model.normalizer = TargetNormalizer.fit([s.y_d for s in train_samples])
    fit_degree_stats(model, train_samples)

    root = np.random.SeedSequence(cfg.seed)
    shuffle_ss, dropout_ss = root.spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    optimizer = Adam(model.parameters(), lr=cfg.lr)
    scheduler = PlateauScheduler(cfg.lr, cfg.plateau_patience, cfg.plateau_factor)
    history = TrainHistory()
    cache: dict = {}
    best_state: dict[str, np.ndarray] | None = None

    n_train = len(train_samples)
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        for b, lo in enumerate(range(0, n_train, cfg.batch_size)):
            part = [train_samples[i] for i in order[lo : lo + cfg.batch_size]]
            loss, _ = _batch_loss(model, part, table, cache, training=True, rng=dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise RuntimeError(
                    f"non-finite training loss {value} at epoch {epoch}, batch {b}"
                )
            model.zero_grad()
            loss.backward()
            optimizer.lr = scheduler.lr
            optimizer.step()
            epoch_loss += value * len(part)
        history.train_loss.append(epoch_loss / n_train)

        if epoch % cfg.eval_every == 0:
            val = dataset_loss(model, val_samples, table, cache)
            if not math.isfinite(val):
                raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
            if val < history.best_val_loss:
                history.best_val_loss = val
                history.best_epoch = epoch
                best_state = {n: t.data.copy() for n, t in model.named_parameters()}
            history.val_loss.append(val)
            history.lr.append(scheduler.lr)
            scheduler.step(val)
        else:
            history.val_loss.append(None)
            history.lr.append(scheduler.lr)

    if best_state is not None:
        for name, tensor in model.named_parameters():
            tensor.data = best_state[name]
    return history


def evaluate(
    model: BaselineDeltaModel,
    samples: list[PairedSample],
    table: EmbeddingTable | None = None,
    chunk: int = 64,
) -> MetricsReport:
    """Metrics in raw target units for design, kernel-head and delta-head."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    cache: dict = {}
    yd_pred, yk_pred, dl_pred = [], [], []
    for lo in range(0, len(samples), chunk):
        part = samples[lo : lo + chunk]
        batch_k = batch_graphs(part, "kernel", dtype=model.dtype, cache=cache)
        batch_d = batch_graphs(part, "design", dtype=model.dtype, cache=cache)
        z = _embedding_matrix(table, part, model)
        out = model.forward(batch_k, batch_d, z, training=False)
        yd_pred.append(model.normalizer.denormalize(out.y_d_hat.data[:, 0]))
        if model.config.use_diff:
            yk_pred.append(model.normalizer.denormalize(out.y_k_hat.data[:, 0]))
            dl_pred.append(model.normalizer.unscale_delta(out.delta_hat.data[:, 0]))

    y_d = np.array([s.y_d for s in samples], dtype=np.float64)
    design = compute_metrics(y_d, np.concatenate(yd_pred))
    kernel = delta = None
    if model.config.use_diff:
        y_k = np.array([s.y_k for s in samples], dtype=np.float64)
        kernel = compute_metrics(y_k, np.concatenate(yk_pred))
        delta = compute_metrics(y_d - y_k, np.concatenate(dl_pred))
    return MetricsReport(design=design, kernel=kernel, delta=delta, n_samples=len(samples))
