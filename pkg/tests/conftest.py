import numpy as np
import pytest

from hlsdelta.graphs import CdfgGraph, NodeAttr, PairedSample

OPS = ("arith", "mul", "load", "store", "cmp", "phi", "cast", "other")


def random_graph(rng, n, gid, edge_prob=0.4):
    nodes = tuple(
        NodeAttr(
            OPS[int(rng.integers(len(OPS)))],
            int(rng.choice([8, 16, 32])),
            bool(rng.random() < 0.3),
        )
        for _ in range(n)
    )
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                kind = "data" if rng.random() < 0.8 else "control"
                edges.append((i, j, kind))
    return CdfgGraph(gid, nodes, tuple(edges))


def toy_pairs(rng, count=2, kernel_nodes=5, design_nodes=7):
    samples = []
    for i in range(count):
        k = random_graph(rng, kernel_nodes, f"k{i}")
        d = random_graph(rng, design_nodes, f"k{i}_d0")
        samples.append(
            PairedSample(f"k{i}", f"k{i}_d0", k, d, 3.0 + i, 5.0 + 2.0 * i)
        )
    return samples


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """Small generated dataset (N=12 designs) shared across tests."""
    from hlsdelta.synth import SynthConfig, generate

    out = tmp_path_factory.mktemp("tinyset")
    cfg = SynthConfig(
        n_kernels=3,
        designs_per_kernel=4,
        node_range=(5, 9),
        unroll_choices=(1, 2),
        partition_choices=(1, 2),
        seed=7,
    )
    generate(cfg, out)
    return out
