import json
from pathlib import Path

import numpy as np
import pytest

from hlsdelta.embeddings import load_embeddings
from hlsdelta.graphs import TARGETS, load_dataset, split_design_level, validate_ranges
from hlsdelta.model import ModelConfig, build_model
from hlsdelta.synth import (
    KERNEL_OPS,
    MARKER_OPS,
    PragmaSpec,
    SynthConfig,
    differential_advantage_experiment,
    generate,
    surrogate_embedding,
)
from hlsdelta.training import TrainConfig, evaluate, train


def small_cfg(**overrides):
    base = dict(
        n_kernels=3,
        designs_per_kernel=4,
        node_range=(5, 9),
        unroll_choices=(1, 2),
        partition_choices=(1, 2),
        seed=5,
    )
    base.update(overrides)
    return SynthConfig(**base)


def test_pragma_spec_bounds():
    PragmaSpec(16, True, 16).validate()
    with pytest.raises(ValueError, match="unroll"):
        PragmaSpec(17, False, 1).validate()
    with pytest.raises(ValueError, match="partition"):
        PragmaSpec(1, False, 0).validate()


def test_config_invariants():
    with pytest.raises(ValueError, match="n_kernels"):
        SynthConfig(n_kernels=1).validate()
    with pytest.raises(ValueError, match="noise_std"):
        SynthConfig(noise_std=-1.0).validate()
    SynthConfig().validate()


def test_baseline_oracle_value(tmp_path):
    cfg = small_cfg(node_range=(5, 5), c0=1000.0, c1=100.0)
    ds = generate(cfg, tmp_path)
    assert all(s.y_k == pytest.approx(1500.0) for s in ds.samples)


def test_null_pragma_zero_delta(tmp_path):
    cfg = small_cfg(c2=0.0, c3=0.0, noise_std=0.0)
    ds = generate(cfg, tmp_path)
    for s in ds.samples:
        assert s.y_d == s.y_k
        assert s.delta == 0.0


def test_delta_matches_oracle_formula(tmp_path):
    cfg = small_cfg(noise_std=0.0)
    ds = generate(cfg, tmp_path)
    oracle = json.loads((tmp_path / "oracle.json").read_text())
    for s in ds.samples:
        rec = oracle["designs"][s.design_id]
        expected = (
            cfg.c2 * rec["unroll"]
            + cfg.c3 * rec["partition"]
            + (cfg.c2 if rec["pipeline"] else 0.0)
        )
        assert s.delta == pytest.approx(expected, rel=1e-12)


def test_same_seed_byte_identical(tmp_path):
    cfg = small_cfg()
    generate(cfg, tmp_path / "a")
    generate(cfg, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_different_seed_differs(tmp_path):
    a = generate(small_cfg(seed=1), tmp_path / "a")
    b = generate(small_cfg(seed=2), tmp_path / "b")
    assert [s.y_k for s in a.samples] != [s.y_k for s in b.samples]


@pytest.mark.parametrize("target", TARGETS)
def test_emulated_targets_stay_in_ranges(tmp_path, target):
    cfg = SynthConfig.emulating(target, n_kernels=4, designs_per_kernel=10, seed=9)
    ds = generate(cfg, tmp_path / target)
    assert ds.target_name == target
    assert validate_ranges(ds) == []


def test_design_graph_structure(tmp_path):
    ds = generate(small_cfg(), tmp_path)
    oracle = json.loads((tmp_path / "oracle.json").read_text())
    for s in ds.samples:
        rec = oracle["designs"][s.design_id]
        u, p, pipe = rec["unroll"], rec["partition"], rec["pipeline"]
        extra = s.design_graph.num_nodes - s.kernel_graph.num_nodes
        assert extra == u * p
        ops = [n.op_category for n in s.design_graph.nodes]
        assert ops.count("call") + ops.count("branch") == u
        assert ops.count("branch") == (1 if pipe else 0)
        assert ops.count("getptr") == p - 1
        # kernel nodes never use the marker categories
        for node in s.kernel_graph.nodes:
            assert node.op_category in KERNEL_OPS
            assert node.op_category not in MARKER_OPS
        # design keeps the kernel's edges and appends pragma wiring
        assert set(s.kernel_graph.edges).issubset(set(s.design_graph.edges))
        assert any(n.is_pragma_affected for n in s.design_graph.nodes)


def test_surrogate_embeddings_round_trip(tmp_path):
    cfg = small_cfg()
    ds = generate(cfg, tmp_path)
    table = load_embeddings(ds.embedding_file)
    assert table.dim == cfg.embed_dim
    assert table.source_model == "surrogate-hash-v1"
    oracle = json.loads((tmp_path / "oracle.json").read_text())
    for s in ds.samples:
        rec = oracle["designs"][s.design_id]
        expected = surrogate_embedding(
            s.design_id, cfg.embed_dim,
            PragmaSpec(rec["unroll"], rec["pipeline"], rec["partition"]),
        )
        assert np.array_equal(table.lookup(s.design_id), expected)


def test_surrogate_embedding_deterministic():
    a = surrogate_embedding("design-x", 16)
    b = surrogate_embedding("design-x", 16)
    c = surrogate_embedding("design-y", 16)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_advantage_precondition_rejected():
    cfg = SynthConfig.differential_advantage(c2=50.0, c3=50.0)
    with pytest.raises(ValueError, match="baseline span"):
        differential_advantage_experiment(cfg, seeds=(0, 1, 2))


def test_advantage_requires_three_seeds():
    with pytest.raises(ValueError, match="3 seeds"):
        differential_advantage_experiment(seeds=(0,))


@pytest.mark.slow
def test_noiseless_linear_oracle_learnable(tmp_path):
    cfg = SynthConfig.differential_advantage(noise_std=0.0, seed=2)
    ds = generate(cfg, tmp_path)
    table = load_embeddings(ds.embedding_file)
    split = split_design_level(ds, seed=0)
    mc = ModelConfig(backbone="SAGE", hidden_dim=48, dropout=0.0,
                     code_dim=table.dim, target=cfg.target)
    model = build_model(mc, seed=0)
    train(model, ds, split, table,
          TrainConfig(lr=3e-3, max_epochs=120, plateau_patience=8, seed=0))
    report = evaluate(model, split.subset(ds, "test"), table)
    assert report.design.mape < 1.0


@pytest.mark.slow
def test_zero_delta_span_equalizes_variants(tmp_path):
    cfg = SynthConfig.differential_advantage(
        n_kernels=8, designs_per_kernel=15, c2=0.0, c3=0.0, noise_std=0.0, seed=4
    )
    report = differential_advantage_experiment(
        cfg,
        TrainConfig(lr=3e-3, max_epochs=30, plateau_patience=8),
        out_dir=tmp_path,
    )
    assert 0.3 < report["ratio"] < 3.0
