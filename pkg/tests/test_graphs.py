import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from hlsdelta.graphs import (
    NODE_FEATURE_DIM,
    TARGET_RANGES,
    CdfgGraph,
    DataError,
    DatasetManifest,
    NodeAttr,
    PairedSample,
    batch_graphs,
    batch_raw_graphs,
    encode_features,
    graph_from_json,
    graph_to_json,
    load_dataset,
    save_dataset,
    split_design_level,
    validate_ranges,
)


def make_sample(kernel_id, design_id, y_k, y_d, n=3):
    nodes = tuple(NodeAttr("arith", 32) for _ in range(n))
    k = CdfgGraph(f"{kernel_id}_g", nodes, ((0, 1, "data"),))
    d = CdfgGraph(f"{design_id}_g", nodes, ((0, 2, "control"),))
    return PairedSample(kernel_id, design_id, k, d, y_k, y_d)


# -- schema and features ------------------------------------------------------


def test_node_feature_encoding_shape_and_values():
    g = CdfgGraph(
        "g",
        (NodeAttr("mul", 512, True), NodeAttr("other", 1, False)),
        ((0, 1, "data"),),
    )
    feats = encode_features(g)
    assert feats.shape == (2, NODE_FEATURE_DIM)
    assert feats[0, 1] == 1.0 and feats[0].sum() == pytest.approx(1.0 + 1.0 + 1.0)
    assert feats[0, 16] == 1.0  # 512/512
    assert feats[1, 16] == pytest.approx(1 / 512)
    assert feats[1, 17] == 0.0


def test_graph_validation_errors():
    nodes = (NodeAttr("arith", 32),)
    with pytest.raises(DataError, match="edge endpoint out of range"):
        CdfgGraph("g", nodes, ((0, 7, "data"),)).validate()
    with pytest.raises(DataError, match="op_category"):
        CdfgGraph("g", (NodeAttr("nonsense", 32),), ()).validate()
    with pytest.raises(DataError, match="bitwidth"):
        CdfgGraph("g", (NodeAttr("arith", 1024),), ()).validate()
    with pytest.raises(DataError, match="node count"):
        CdfgGraph("g", (), ()).validate()


def test_delta_always_recomputed():
    s = make_sample("k0", "d0", 3.0, 5.0)
    assert s.delta == 2.0


# -- JSON round-trips ---------------------------------------------------------


def test_graph_json_write_read_write_byte_identical(rng):
    g = random_graph(rng, 9, "kjson")
    text = graph_to_json(g)
    again = graph_to_json(graph_from_json(text))
    assert text.encode() == again.encode()


def test_dataset_save_load_round_trip(tmp_path):
    samples = [make_sample("k0", f"d{i}", 3.0, 5.0 + i) for i in range(3)]
    samples = [
        PairedSample(s.kernel_id, s.design_id, samples[0].kernel_graph,
                     CdfgGraph(f"d{i}_g", s.design_graph.nodes, s.design_graph.edges),
                     s.y_k, s.y_d)
        for i, s in enumerate(samples)
    ]
    ds = DatasetManifest("DSP", samples)
    path = save_dataset(ds, tmp_path)
    loaded = load_dataset(path)
    assert [s.design_id for s in loaded.samples] == ["d0", "d1", "d2"]
    assert loaded.samples[1].delta == pytest.approx(3.0)
    # writing the loaded dataset again reproduces identical bytes
    again_dir = tmp_path / "again"
    path2 = save_dataset(loaded, again_dir)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_duplicate_design_id(tmp_path):
    s = make_sample("k0", "d0", 3.0, 5.0)
    ds = DatasetManifest("DSP", [s])
    path = save_dataset(ds, tmp_path)
    obj = json.loads(path.read_text())
    obj["samples"].append(obj["samples"][0])
    path.write_text(json.dumps(obj))
    with pytest.raises(DataError, match="duplicate design_id"):
        load_dataset(path)


def test_load_rejects_out_of_range_edge(tmp_path):
    s = make_sample("k0", "d0", 3.0, 5.0)
    path = save_dataset(DatasetManifest("DSP", [s]), tmp_path)
    graph_file = tmp_path / "graphs" / "d0_g.json"
    obj = json.loads(graph_file.read_text())
    obj["edges"].append([0, 7, "data"])
    graph_file.write_text(json.dumps(obj))
    with pytest.raises(DataError, match="edge endpoint out of range"):
        load_dataset(path)


def test_load_missing_graph_file(tmp_path):
    s = make_sample("k0", "d0", 3.0, 5.0)
    path = save_dataset(DatasetManifest("DSP", [s]), tmp_path)
    (tmp_path / "graphs" / "d0_g.json").unlink()
    with pytest.raises(DataError, match="missing graph file"):
        load_dataset(path)


# -- range validation ---------------------------------------------------------


def test_validate_ranges_inclusive_boundaries():
    # kernel at the DSP minimum and delta at the DSP minimum (via a different
    # sample) are both inclusive, so neither warns
    ds = DatasetManifest(
        "DSP",
        [
            make_sample("k0", "d0", 3.0, 5.0),    # kernel at min bound
            make_sample("k1", "d1", 29.0, 22.0),  # delta at min bound (-7)
        ],
    )
    assert validate_ranges(ds) == []


def test_validate_ranges_ff_delta_boundary_inclusive():
    ds = DatasetManifest("FF", [make_sample("k0", "d0", 1000.0, 26414.0)])
    assert ds.samples[0].delta == 25414.0
    assert validate_ranges(ds) == []


def test_validate_ranges_cp_design_warning_names_sample_and_bound():
    ds = DatasetManifest("CP", [make_sample("k0", "d0", 7.05, 7.80)])
    warnings = validate_ranges(ds)
    assert len(warnings) == 1
    assert "d0" in warnings[0]
    assert "design CP 7.8 outside [5.55, 7.75]" in warnings[0]


def test_validate_ranges_counts_each_offending_value_once():
    ds = DatasetManifest("CP", [make_sample("k0", "d0", 1.0, 2.0)])
    warnings = validate_ranges(ds)
    # kernel, delta and design are all out of range here
    assert len(warnings) == 3


def test_table_ranges_match_reported_values():
    assert TARGET_RANGES["DSP"]["design"] == (5.0, 94.0)
    assert TARGET_RANGES["FF"]["delta"] == (-174.0, 25414.0)
    assert TARGET_RANGES["LUT"]["kernel"] == (1214.0, 5192.0)
    assert TARGET_RANGES["CP"]["design"] == (5.55, 7.75)


# -- splitting ---------------------------------------------------------------


def _dataset_of(n):
    return DatasetManifest(
        "DSP", [make_sample(f"k{i % 5}", f"d{i:04d}", 3.0, 5.0) for i in range(n)]
    )


def test_split_sizes_large_scale():
    ds = _dataset_of(10108)
    split = split_design_level(ds, seed=0)
    assert (len(split.train), len(split.val), len(split.test)) == (8086, 1010, 1012)


def test_split_exact_ratio_n10():
    split = split_design_level(_dataset_of(10), seed=3)
    assert (len(split.train), len(split.val), len(split.test)) == (8, 1, 1)


def test_split_rejects_small_dataset():
    with pytest.raises(DataError, match="too small"):
        split_design_level(_dataset_of(9), seed=0)


def test_split_deterministic_and_seed_sensitive():
    ds = _dataset_of(100)
    a = split_design_level(ds, seed=11)
    b = split_design_level(ds, seed=11)
    c = split_design_level(ds, seed=12)
    assert a == b
    assert a != c


@settings(max_examples=20, deadline=None)
@given(n=st.integers(min_value=10, max_value=400), seed=st.integers(0, 2**32 - 1))
def test_split_partitions_designs(n, seed):
    ds = _dataset_of(n)
    split = split_design_level(ds, seed=seed)
    parts = [set(split.train), set(split.val), set(split.test)]
    assert sum(len(p) for p in parts) == n
    assert parts[0] | parts[1] | parts[2] == set(ds.design_ids())
    assert len(split.train) == math.floor(0.8 * n)
    assert len(split.val) == math.floor(0.1 * n)


def test_kernel_level_split_keeps_kernels_whole():
    ds = _dataset_of(50)
    split = split_design_level(ds, seed=5, kernel_level=True)
    kernel_of = {s.design_id: s.kernel_id for s in ds.samples}
    for part in (split.train, split.val, split.test):
        kernels = {kernel_of[d] for d in part}
        for other in (split.train, split.val, split.test):
            if other is part:
                continue
            assert kernels.isdisjoint({kernel_of[d] for d in other})


# -- batching ----------------------------------------------------------------


def test_batch_membership_and_offsets(rng):
    g1 = random_graph(rng, 3, "a")
    g2 = random_graph(rng, 4, "b")
    batch = batch_raw_graphs([g1, g2])
    assert batch.num_nodes == 7
    assert list(batch.membership) == [0, 0, 0, 1, 1, 1, 1]
    assert batch.features.shape == (7, NODE_FEATURE_DIM)
    # second graph's edge indices shifted by the first graph's node count
    mask = batch.membership[batch.edge_src] == 1
    if mask.any():
        assert batch.edge_src[mask].min() >= 3


def test_batch_edge_offsets_hand_checked():
    nodes2 = (NodeAttr("arith", 32), NodeAttr("mul", 32))
    ga = CdfgGraph("ga", nodes2, ((0, 1, "data"), (1, 0, "control")))
    gb = CdfgGraph("gb", nodes2, ((0, 1, "control"), (1, 0, "data")))
    batch = batch_raw_graphs([ga, gb])
    assert len(batch.edge_src) == 4
    assert sorted(zip(batch.edge_src.tolist(), batch.edge_dst.tolist())) == [
        (0, 1), (1, 0), (2, 3), (3, 2),
    ]


def test_no_edge_crosses_graph_boundaries(rng):
    graphs = [random_graph(rng, int(rng.integers(2, 8)), f"g{i}") for i in range(5)]
    batch = batch_raw_graphs(graphs)
    assert np.array_equal(
        batch.membership[batch.edge_src], batch.membership[batch.edge_dst]
    )
    assert np.array_equal(
        batch.membership[batch.msg_src], batch.membership[batch.msg_dst]
    )


def test_batch_unbatch_round_trip(rng):
    graphs = [random_graph(rng, int(rng.integers(1, 9)), f"g{i}") for i in range(4)]
    recovered = batch_raw_graphs(graphs).unbatch()
    for orig, back in zip(graphs, recovered):
        assert back.graph_id == orig.graph_id
        assert back.nodes == orig.nodes
        assert sorted(back.edges) == sorted(orig.edges)


def test_single_graph_batch_is_identity(rng):
    g = random_graph(rng, 5, "solo")
    batch = batch_raw_graphs([g])
    assert list(batch.membership) == [0] * 5
    assert batch.unbatch()[0].nodes == g.nodes


def test_batch_empty_list_rejected():
    with pytest.raises(DataError, match="empty"):
        batch_graphs([], "kernel")


def test_msg_edges_symmetrized_dedup():
    nodes = (NodeAttr("arith", 32), NodeAttr("mul", 32))
    g = CdfgGraph("g", nodes, ((0, 1, "data"), (1, 0, "control")))
    batch = batch_raw_graphs([g])
    pairs = sorted(zip(batch.msg_src.tolist(), batch.msg_dst.tolist()))
    assert pairs == [(0, 1), (1, 0)]
    assert list(batch.degrees) == [1, 1]
