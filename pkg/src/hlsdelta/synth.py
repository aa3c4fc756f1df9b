"""Synthetic paired-dataset generator with a closed-form target oracle.

Kernels are random DAGs; each design is its kernel plus a pragma-flagged
region and a grid of appended nodes encoding the pragma parameters
(unroll u, partition p, pipeline flag).  Targets follow a linear oracle

    y_k   = c0 + c1 * n_nodes
    delta = c2 * u + c3 * p + pipeline * c2 + noise
    y_d   = y_k + delta

so failures of a learner are attributable to the learner, not the task.
Default coefficients are calibrated so every generated value stays inside
the observed per-target ranges used by validate_ranges.

The marker-node layout makes u, p and pipeline linearly recoverable from
sum-pooled one-hot counts: appended row-head nodes are "call" (the corner
turns "branch" when pipelined) and first-row tail nodes are "getptr",
while random kernel nodes never use those three categories.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, load_embeddings, save_embeddings
from .graphs import (
    FORMAT_VERSION,
    OP_CATEGORIES,
    TARGET_RANGES,
    CdfgGraph,
    DatasetManifest,
    NodeAttr,
    PairedSample,
    load_dataset,
    save_dataset,
    split_design_level,
)
from .model import ModelConfig, build_model
from .training import TrainConfig, evaluate, train

MARKER_OPS = ("call", "getptr", "branch")
KERNEL_OPS = tuple(op for op in OP_CATEGORIES if op not in MARKER_OPS)
BITWIDTH_CHOICES = (1, 8, 16, 32, 64)
PRAGMA_LIMIT = 16

# (c0, c1, c2, c3, noise_std) per target, valid for node_range (10, 40) and
# unroll/partition factors in {1, 2, 4, 8}
_CALIBRATION = {
    "DSP": (-3.5, 0.78, 2.0, 2.0, 0.3),
    "FF": (-300.0, 100.0, 400.0, 400.0, 20.0),
    "LUT": (500.0, 100.0, 400.0, 400.0, 20.0),
    "CP": (5.01, 0.05, 0.034, 0.034, 0.004),
}


@dataclass(frozen=True)
class PragmaSpec:
    """Pragma parameters of one synthetic design."""

    unroll: int = 1
    pipeline: bool = False
    partition: int = 1

    def validate(self) -> None:
        if not 1 <= self.unroll <= PRAGMA_LIMIT:
            raise ValueError(f"unroll factor {self.unroll} outside [1, {PRAGMA_LIMIT}]")
        if not 1 <= self.partition <= PRAGMA_LIMIT:
            raise ValueError(f"partition factor {self.partition} outside [1, {PRAGMA_LIMIT}]")


@dataclass
class SynthConfig:
    target: str = "DSP"
    n_kernels: int = 20
    designs_per_kernel: int = 50
    node_range: tuple[int, int] = (10, 40)
    seed: int = 0
    c0: float = -3.5
    c1: float = 0.78
    c2: float = 2.0
    c3: float = 2.0
    noise_std: float = 0.3
    unroll_choices: tuple[int, ...] = (1, 2, 4, 8)
    partition_choices: tuple[int, ...] = (1, 2, 4, 8)
    edge_prob: float = 0.3
    embed_dim: int = 32
    emit_embeddings: bool = True
    ranges: dict | None = None

    def validate(self) -> None:
        if self.n_kernels < 2:
            raise ValueError("n_kernels must be >= 2")
        if self.designs_per_kernel < 2:
            raise ValueError("designs_per_kernel must be >= 2")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.node_range[0] < 1 or self.node_range[1] < self.node_range[0]:
            raise ValueError(f"bad node_range {self.node_range}")
        for f in self.unroll_choices + self.partition_choices:
            if not 1 <= f <= PRAGMA_LIMIT:
                raise ValueError(f"pragma factor {f} outside [1, {PRAGMA_LIMIT}]")
        if self.embed_dim < 4:
            raise ValueError("embed_dim must be >= 4")

    def resolved_ranges(self) -> dict:
        return self.ranges if self.ranges is not None else TARGET_RANGES[self.target]

    def baseline_span(self) -> float:
        return self.c1 * (self.node_range[1] - self.node_range[0])

    def delta_span(self) -> float:
        lo = self.c2 * min(self.unroll_choices) + self.c3 * min(self.partition_choices)
        hi = (
            self.c2 * (max(self.unroll_choices) + 1)
            + self.c3 * max(self.partition_choices)
        )
        return hi - lo

    @classmethod
    def emulating(cls, target: str, **overrides) -> "SynthConfig":
        """Coefficients calibrated so all values land inside the observed
        ranges for the given target (at the default node/pragma ranges)."""
        if target not in _CALIBRATION:
            raise ValueError(f"unknown target {target!r}")
        c0, c1, c2, c3, noise = _CALIBRATION[target]
        fields = dict(target=target, c0=c0, c1=c1, c2=c2, c3=c3, noise_std=noise)
        fields.update(overrides)
        return cls(**fields)

    @classmethod
    def differential_advantage(cls, **overrides) -> "SynthConfig":
        """Baseline spread >= 100x delta spread: the regime where composing a
        kernel baseline with a learned delta should beat direct regression."""
        fields = dict(
            target="FF",
            node_range=(10, 60),
            c0=1000.0,
            c1=100.0,
            c2=1.5,
            c3=1.5,
            noise_std=0.25,
        )
        fields.update(overrides)
        return cls(**fields)


def surrogate_embedding(design_id: str, dim: int, pragma: PragmaSpec | None = None) -> np.ndarray:
    """Deterministic hash-derived vector; leading slots carry the pragma
    parameters so the code-embedding pathway sees pragma-aware content."""
    digest = hashlib.sha256(design_id.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    if pragma is not None:
        vec[0] = pragma.unroll / PRAGMA_LIMIT
        vec[1] = pragma.partition / PRAGMA_LIMIT
        vec[2] = 1.0 if pragma.pipeline else 0.0
        vec[3] = (pragma.unroll * pragma.partition) / (PRAGMA_LIMIT * PRAGMA_LIMIT)
    return vec.astype(np.float32)


def _random_kernel(rng: np.random.Generator, cfg: SynthConfig, kernel_id: str) -> CdfgGraph:
    lo, hi = cfg.node_range
    n = int(rng.integers(lo, hi + 1))
    ops = rng.choice(len(KERNEL_OPS), size=n)
    bws = rng.choice(BITWIDTH_CHOICES, size=n)
    nodes = tuple(
        NodeAttr(KERNEL_OPS[int(o)], int(b), False) for o, b in zip(ops, bws)
    )
    upper = np.triu(rng.random((n, n)) < cfg.edge_prob, k=1)
    srcs, dsts = np.nonzero(upper)
    kinds = rng.random(len(srcs)) < 0.2
    edges = tuple(
        (int(s), int(d), "control" if k else "data")
        for s, d, k in zip(srcs, dsts, kinds)
    )
    return CdfgGraph(kernel_id, nodes, edges)


def _design_graph(
    rng: np.random.Generator, kernel: CdfgGraph, design_id: str, pragma: PragmaSpec
) -> CdfgGraph:
    n = kernel.num_nodes
    region_len = max(1, n // 3)
    region_start = int(rng.integers(0, n))
    region = set(range(region_start, min(region_start + region_len, n)))

    nodes = [
        NodeAttr(node.op_category, node.bitwidth, i in region)
        for i, node in enumerate(kernel.nodes)
    ]
    edges = list(kernel.edges)
    u, p = pragma.unroll, pragma.partition
    for r in range(u):
        for c in range(p):
            if c == 0:
                op = "branch" if (r == 0 and pragma.pipeline) else "call"
            elif r == 0:
                op = "getptr"
            else:
                op = "arith"
            nodes.append(NodeAttr(op, 32, True))
            idx = n + r * p + c
            if c > 0:
                edges.append((idx - 1, idx, "data"))
        edges.append((region_start, n + r * p, "control"))
    return CdfgGraph(design_id, tuple(nodes), tuple(edges))


def generate(cfg: SynthConfig, out_dir: Path) -> DatasetManifest:
    """Write manifest, graph files, oracle sidecar and (optionally) surrogate
    embeddings under out_dir; returns the re-loaded, validated dataset."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(cfg.seed)
    kernel_seeds = root.spawn(cfg.n_kernels)

    samples: list[PairedSample] = []
    pragmas: dict[str, dict] = {}
    for ki, kseed in enumerate(kernel_seeds):
        krng = np.random.default_rng(kseed)
        kernel_id = f"k{ki:03d}"
        kernel = _random_kernel(krng, cfg, kernel_id)
        y_k = cfg.c0 + cfg.c1 * kernel.num_nodes
        for dj in range(cfg.designs_per_kernel):
            design_id = f"{kernel_id}_d{dj:03d}"
            pragma = PragmaSpec(
                unroll=int(krng.choice(cfg.unroll_choices)),
                pipeline=bool(krng.random() < 0.5),
                partition=int(krng.choice(cfg.partition_choices)),
            )
            pragma.validate()
            design = _design_graph(krng, kernel, design_id, pragma)
            noise = 0.0
            if cfg.noise_std > 0:
                noise = float(
                    np.clip(
                        krng.normal(0.0, cfg.noise_std),
                        -4.0 * cfg.noise_std,
                        4.0 * cfg.noise_std,
                    )
                )
            delta = (
                cfg.c2 * pragma.unroll
                + cfg.c3 * pragma.partition
                + (cfg.c2 if pragma.pipeline else 0.0)
                + noise
            )
            samples.append(
                PairedSample(
                    kernel_id=kernel_id,
                    design_id=design_id,
                    kernel_graph=kernel,
                    design_graph=design,
                    y_k=y_k,
                    y_d=y_k + delta,
                )
            )
            pragmas[design_id] = {
                "unroll": pragma.unroll,
                "partition": pragma.partition,
                "pipeline": pragma.pipeline,
                "noise": noise,
            }

    dataset = DatasetManifest(
        target_name=cfg.target,
        samples=samples,
        embedding_file=Path("embeddings.bin") if cfg.emit_embeddings else None,
    )
    manifest_path = save_dataset(dataset, out_dir)

    oracle = {
        "format_version": FORMAT_VERSION,
        "target": cfg.target,
        "coefficients": {
            "c0": cfg.c0,
            "c1": cfg.c1,
            "c2": cfg.c2,
            "c3": cfg.c3,
            "noise_std": cfg.noise_std,
        },
        "designs": pragmas,
    }
    (out_dir / "oracle.json").write_text(json.dumps(oracle, indent=2, sort_keys=True) + "\n")

    if cfg.emit_embeddings:
        rows = {
            s.design_id: surrogate_embedding(
                s.design_id,
                cfg.embed_dim,
                PragmaSpec(
                    pragmas[s.design_id]["unroll"],
                    pragmas[s.design_id]["pipeline"],
                    pragmas[s.design_id]["partition"],
                ),
            )
            for s in samples
        }
        table = EmbeddingTable(dim=cfg.embed_dim, rows=rows, source_model="surrogate-hash-v1")
        save_embeddings(table, out_dir / "embeddings.bin")

    return load_dataset(manifest_path)


def differential_advantage_experiment(
    cfg: SynthConfig | None = None,
    train_cfg: TrainConfig | None = None,
    out_dir: Path | None = None,
    seeds: tuple[int, ...] = (0, 1, 2),
    backbone: str = "SAGE",
    hidden_dim: int = 48,
) -> dict:
    """Train the full differential model and the direct (use_diff=False)
    variant on identical splits/seeds; report design-level MAPE for both.

    Experiment defaults differ from the per-target training defaults: a
    narrower hidden size, higher LR and dropout 0 keep desk-scale runtime
    while letting the kernel head memorize the per-kernel baselines.
    """
    import tempfile

    cfg = cfg or SynthConfig.differential_advantage()
    train_cfg = train_cfg or TrainConfig(lr=3e-3, max_epochs=120, plateau_patience=8)
    if len(seeds) < 3:
        raise ValueError("need at least 3 seeds")
    if cfg.baseline_span() < 100.0 * cfg.delta_span():
        raise ValueError(
            f"baseline span {cfg.baseline_span():g} must be >= 100x delta span "
            f"{cfg.delta_span():g}"
        )

    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="hlsdelta-synth-")
        out_dir = Path(tmp.name)
    else:
        tmp = None
        out_dir = Path(out_dir)

    try:
        dataset = generate(cfg, out_dir)
        table = load_embeddings(dataset.embedding_file)
        results = {"full": [], "direct": []}
        for seed in seeds:
            split = split_design_level(dataset, seed=seed)
            for variant, use_diff in (("full", True), ("direct", False)):
                mc = ModelConfig(
                    backbone=backbone,
                    hidden_dim=hidden_dim,
                    use_diff=use_diff,
                    use_code_emb=True,
                    code_dim=table.dim,
                    dropout=0.0,
                    target=cfg.target,
                )
                model = build_model(mc, seed=seed)
                run_cfg = replace(train_cfg, seed=seed)
                train(model, dataset, split, table, run_cfg)
                report = evaluate(model, split.subset(dataset, "test"), table)
                results[variant].append(report.design.mape)
    finally:
        if tmp is not None:
            tmp.cleanup()

    full_mean = float(np.mean(results["full"]))
    direct_mean = float(np.mean(results["direct"]))
    return {
        "backbone": backbone,
        "seeds": list(seeds),
        "full_mape_per_seed": results["full"],
        "direct_mape_per_seed": results["direct"],
        "full_mape_mean": full_mean,
        "direct_mape_mean": direct_mean,
        "ratio": full_mean / direct_mean if direct_mean else None,
    }


def format_advantage_report(report: dict) -> str:
    lines = [
        f"backbone: {report['backbone']}   seeds: {report['seeds']}",
        f"{'variant':<10} {'design MAPE % per seed':<30} {'mean':>8}",
    ]
    for variant in ("full", "direct"):
        per_seed = " ".join(f"{m:7.3f}" for m in report[f"{variant}_mape_per_seed"])
        lines.append(f"{variant:<10} {per_seed:<30} {report[f'{variant}_mape_mean']:8.3f}")
    lines.append(f"ratio full/direct: {report['ratio']:.3f}")
    return "\n".join(lines)
