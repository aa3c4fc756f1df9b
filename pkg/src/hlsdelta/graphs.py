"""Paired kernel/design graph data: schemas, JSON formats, splits, batching.

A dataset is a manifest JSON listing (kernel, design) pairs with their

measured targets, plus one JSON file per graph.  Graphs are attributed
directed CDFG-style IR graphs with a fixed 18-dimensional node feature
encoding and two edge kinds.  All formats carry ``format_version`` and
round-trip byte-identically through the canonical writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

OP_CATEGORIES = (
    "arith",
    "mul",
    "div",
    "cmp",
    "logic",
    "shift",
    "load",
    "store",
    "phi",
    "branch",
    "call",
    "const",
    "cast",
    "alloca",
    "getptr",
    "other",
)
OP_INDEX = {name: i for i, name in enumerate(OP_CATEGORIES)}

EDGE_KINDS = ("data", "control")
EDGE_KIND_INDEX = {name: i for i, name in enumerate(EDGE_KINDS)}

MAX_BITWIDTH = 512
NODE_FEATURE_DIM = len(OP_CATEGORIES) + 2

TARGETS = ("DSP", "FF", "LUT", "CP")

# Observed [min, max] per target for kernel baseline, delta and design values;
# used as advisory validation bounds and as synthetic-generator calibration.
TARGET_RANGES = {
    "DSP": {"kernel": (3.0, 29.0), "delta": (-7.0, 75.0), "design": (5.0, 94.0)},
    "FF": {"kernel": (495.0, 3994.0), "delta": (-174.0, 25414.0), "design": (1296.0, 28967.0)},
    "LUT": {"kernel": (1214.0, 5192.0), "delta": (151.0, 35865.0), "design": (1842.0, 39464.0)},
    "CP": {"kernel": (5.31, 7.21), "delta": (-0.10, 0.78), "design": (5.55, 7.75)},
}


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass(frozen=True)
class NodeAttr:
    """One IR operation node: opcode category, bitwidth, pragma-region flag."""

    op_category: str
    bitwidth: int
    is_pragma_affected: bool = False

    def validate(self) -> None:
        if self.op_category not in OP_INDEX:
            raise DataError(f"unknown op_category {self.op_category!r}")
        if not 1 <= int(self.bitwidth) <= MAX_BITWIDTH:
            raise DataError(f"bitwidth {self.bitwidth} outside [1, {MAX_BITWIDTH}]")


@dataclass(frozen=True)
class CdfgGraph:
    """Attributed directed graph for one kernel or design IR."""

    graph_id: str
    nodes: tuple[NodeAttr, ...]
    edges: tuple[tuple[int, int, str], ...]

    def validate(self) -> None:
        if not self.graph_id:
            raise DataError("graph_id must be nonempty")
        n = len(self.nodes)
        if n < 1:
            raise DataError(f"graph {self.graph_id}: node count must be >= 1")
        for node in self.nodes:
            node.validate()
        for src, dst, kind in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise DataError(
                    f"graph {self.graph_id}: edge endpoint out of range "
                    f"({src}->{dst} with {n} nodes)"
                )
            if kind not in EDGE_KIND_INDEX:
                raise DataError(f"graph {self.graph_id}: unknown edge kind {kind!r}")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


def encode_features(graph: CdfgGraph, dtype=np.float32) -> np.ndarray:
    """18-dim raw node features: 16-way op one-hot, bitwidth/512, pragma flag."""
    n = len(graph.nodes)
    feats = np.zeros((n, NODE_FEATURE_DIM), dtype=dtype)
    for i, node in enumerate(graph.nodes):
        feats[i, OP_INDEX[node.op_category]] = 1.0
        feats[i, len(OP_CATEGORIES)] = node.bitwidth / MAX_BITWIDTH
        feats[i, len(OP_CATEGORIES) + 1] = 1.0 if node.is_pragma_affected else 0.0
    return feats


def decode_features(feats: np.ndarray) -> list[NodeAttr]:
    """Inverse of encode_features; exact because bitwidth/512 is dyadic."""
    nodes = []
    for row in np.asarray(feats):
        op = OP_CATEGORIES[int(np.argmax(row[: len(OP_CATEGORIES)]))]
        bw = int(round(float(row[len(OP_CATEGORIES)]) * MAX_BITWIDTH))
        flag = row[len(OP_CATEGORIES) + 1] > 0.5
        nodes.append(NodeAttr(op, bw, bool(flag)))
    return nodes


@dataclass(frozen=True)
class PairedSample:
    """One (kernel, design) pair with measured targets; delta is derived."""

    kernel_id: str
    design_id: str
    kernel_graph: CdfgGraph
    design_graph: CdfgGraph
    y_k: float
    y_d: float

    @property
    def delta(self) -> float:
        return self.y_d - self.y_k


@dataclass
class DatasetManifest:
    """All pairs of one per-target dataset plus the optional embedding sidecar."""

    target_name: str
    samples: list[PairedSample]
    embedding_file: Path | None = None
    root: Path | None = None

    def design_ids(self) -> list[str]:
        return [s.design_id for s in self.samples]

    def by_design_id(self) -> dict[str, PairedSample]:
        return {s.design_id: s for s in self.samples}


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint design-id lists covering the dataset."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def subset(self, dataset: DatasetManifest, part: str) -> list[PairedSample]:
        wanted = set(getattr(self, part))
        return [s for s in dataset.samples if s.design_id in wanted]


# ---------------------------------------------------------------------------
# JSON formats
# ---------------------------------------------------------------------------


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def graph_to_json(graph: CdfgGraph) -> str:
    obj = {
        "format_version": FORMAT_VERSION,
        "graph_id": graph.graph_id,
        "nodes": [
            {"op": n.op_category, "bw": int(n.bitwidth), "pragma": int(n.is_pragma_affected)}
            for n in graph.nodes
        ],
        "edges": [[int(s), int(d), k] for s, d, k in graph.edges],
    }
    return _canonical_json(obj)


def graph_from_json(text: str) -> CdfgGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise DataError(f"malformed graph JSON: {err}") from err
    try:
        if obj["format_version"] != FORMAT_VERSION:
            raise DataError(f"unsupported graph format_version {obj['format_version']}")
        nodes = tuple(
            NodeAttr(n["op"], int(n["bw"]), bool(n["pragma"])) for n in obj["nodes"]
        )
        edges = tuple((int(s), int(d), str(k)) for s, d, k in obj["edges"])
        graph = CdfgGraph(obj["graph_id"], nodes, edges)
    except (KeyError, TypeError) as err:
        raise DataError(f"malformed graph record: {err}") from err
    graph.validate()
    return graph


def save_graph(graph: CdfgGraph, path: Path) -> None:
    Path(path).write_text(graph_to_json(graph))


def load_graph(path: Path) -> CdfgGraph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing graph file {path}")
    return graph_from_json(path.read_text())


def manifest_to_json(dataset: DatasetManifest, graph_paths: dict[str, str]) -> str:
    obj = {
        "format_version": FORMAT_VERSION,
        "target_name": dataset.target_name,
        "embedding_file": str(dataset.embedding_file) if dataset.embedding_file else None,
        "samples": [
            {
                "kernel_id": s.kernel_id,
                "design_id": s.design_id,
                "kernel_graph": graph_paths[s.kernel_graph.graph_id],
                "design_graph": graph_paths[s.design_graph.graph_id],
                "y_k": s.y_k,
                "y_d": s.y_d,
            }
            for s in dataset.samples
        ],
    }
    return _canonical_json(obj)


def save_dataset(dataset: DatasetManifest, out_dir: Path) -> Path:
    """Write manifest.json plus graphs/<graph_id>.json under out_dir."""
    out_dir = Path(out_dir)
    graph_dir = out_dir / "graphs"
    graph_dir.mkdir(parents=True, exist_ok=True)
    graph_paths: dict[str, str] = {}
    for sample in dataset.samples:
        for graph in (sample.kernel_graph, sample.design_graph):
            if graph.graph_id not in graph_paths:
                rel = f"graphs/{graph.graph_id}.json"
                save_graph(graph, out_dir / rel)
                graph_paths[graph.graph_id] = rel
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(manifest_to_json(dataset, graph_paths))
    return manifest_path


def load_dataset(manifest_path: Path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"missing manifest file {manifest_path}")
    try:
        obj = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"malformed manifest JSON: {err}") from err
    if obj.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported manifest format_version {obj.get('format_version')}")
    target = obj.get("target_name")
    if target not in TARGETS:
        raise DataError(f"unknown target_name {target!r}")

    root = manifest_path.parent
    graph_cache: dict[str, CdfgGraph] = {}

    def graph_at(rel: str) -> CdfgGraph:
        if rel not in graph_cache:
            graph_cache[rel] = load_graph(root / rel)
        return graph_cache[rel]

    samples: list[PairedSample] = []
    seen_design: set[str] = set()
    kernel_graph_of: dict[str, str] = {}
    for rec in obj.get("samples", []):
        try:
            sample = PairedSample(
                kernel_id=rec["kernel_id"],
                design_id=rec["design_id"],
                kernel_graph=graph_at(rec["kernel_graph"]),
                design_graph=graph_at(rec["design_graph"]),
                y_k=float(rec["y_k"]),
                y_d=float(rec["y_d"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, DataError):
                raise
            raise DataError(f"malformed sample record: {err}") from err
        if sample.design_id in seen_design:
            raise DataError(f"duplicate design_id {sample.design_id!r}")
        seen_design.add(sample.design_id)
        prev = kernel_graph_of.setdefault(sample.kernel_id, sample.kernel_graph.graph_id)
        if prev != sample.kernel_graph.graph_id:
            raise DataError(
                f"kernel_id {sample.kernel_id!r} maps to multiple kernel graphs"
            )
        samples.append(sample)

    embedding_file = obj.get("embedding_file")
    return DatasetManifest(
        target_name=target,
        samples=samples,
        embedding_file=(root / embedding_file) if embedding_file else None,
        root=root,
    )


# ---------------------------------------------------------------------------
# Range validation, splitting
# ---------------------------------------------------------------------------


def validate_ranges(dataset: DatasetManifest, target: str | None = None) -> list[str]:
    """Advisory per-sample warnings for values outside the observed ranges.

    Bounds are inclusive; one warning per offending value, never mutates data.
    """
    target = target or dataset.target_name
    if target not in TARGET_RANGES:
        raise DataError(f"unknown target {target!r}")
    ranges = TARGET_RANGES[target]
    warnings = []
    for s in dataset.samples:
        for part, value in (("kernel", s.y_k), ("delta", s.delta), ("design", s.y_d)):
            lo, hi = ranges[part]
            if not lo <= value <= hi:
                warnings.append(
                    f"{s.design_id}: {part} {target} {value:g} outside [{lo:g}, {hi:g}]"
                )
    return warnings


def split_design_level(
    dataset: DatasetManifest, seed: int, kernel_level: bool = False
) -> SplitAssignment:
    """Seeded 8:1:1 split over design ids: floor(0.8N) / floor(0.1N) / rest.

    With kernel_level=True all designs of one kernel land in the same part
    (sizes then only approximate the ratios).
    """
    n = len(dataset.samples)
    if n < 10:
        raise DataError(f"dataset too small to split (N={n} < 10)")
    rng = np.random.default_rng(seed)
    n_train = math.floor(0.8 * n)
    n_val = math.floor(0.1 * n)

    if kernel_level:
        by_kernel: dict[str, list[str]] = {}
        for s in dataset.samples:
            by_kernel.setdefault(s.kernel_id, []).append(s.design_id)
        kernels = sorted(by_kernel)
        order = rng.permutation(len(kernels))
        train: list[str] = []
        val: list[str] = []
        test: list[str] = []
        for idx in order:
            designs = by_kernel[kernels[idx]]
            if len(train) < n_train:
                train.extend(designs)
            elif len(val) < n_val:
                val.extend(designs)
            else:
                test.extend(designs)
        return SplitAssignment(tuple(train), tuple(val), tuple(test))

    ids = sorted(dataset.design_ids())
    order = rng.permutation(n)
    shuffled = [ids[i] for i in order]
    return SplitAssignment(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
    )


# ---------------------------------------------------------------------------
# Mini-batching (disjoint union)
# ---------------------------------------------------------------------------


class GraphBatch:
    """Disjoint union of graphs: stacked node features, offset-shifted edges.

    Symmetrized message-passing structure (neighbor lists without self
    loops, degrees, normalization coefficients) is derived lazily and
    cached; edge kinds are retained so batching is lossless.
    """

    def __init__(
        self,
        features: np.ndarray,
        edge_src: np.ndarray,
        edge_dst: np.ndarray,
        edge_kind: np.ndarray,
        membership: np.ndarray,
        node_offsets: np.ndarray,
        graph_ids: tuple[str, ...],
        sym_edges: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        self.features = features
        self.edge_src = edge_src
        self.edge_dst = edge_dst
        self.edge_kind = edge_kind
        self.membership = membership
        self.node_offsets = node_offsets
        self.graph_ids = graph_ids
        if sym_edges is not None:
            self.__dict__["_sym_edges"] = sym_edges

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def batch_size(self) -> int:
        return len(self.graph_ids)

    @cached_property
    def _sym_edges(self) -> tuple[np.ndarray, np.ndarray]:
        return _symmetrize(self.edge_src, self.edge_dst)

    @property
    def msg_src(self) -> np.ndarray:
        """Neighbor j for each directed message j -> i."""
        return self._sym_edges[0]

    @property
    def msg_dst(self) -> np.ndarray:
        """Receiving node i for each directed message j -> i (sorted ascending)."""
        return self._sym_edges[1]

    @cached_property
    def degrees(self) -> np.ndarray:
        """|N(i)| over the symmetrized neighbor sets."""
        return np.bincount(self.msg_dst, minlength=self.num_nodes)

    @cached_property
    def nodes_per_graph(self) -> np.ndarray:
        return np.diff(self.node_offsets)

    @cached_property
    def gat_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Messages plus self loops, sorted by destination."""
        loops = np.arange(self.num_nodes, dtype=np.int64)
        esrc = np.concatenate([self.msg_src, loops])
        edst = np.concatenate([self.msg_dst, loops])
        order = np.lexsort((esrc, edst))
        return esrc[order], edst[order]

    def scatter_for(self, which: str):
        """Cached CSR scatter-add operator for one of the index arrays."""
        cache = self.__dict__.setdefault("_scatter_cache", {})
        if which not in cache:
            from scipy.sparse import csr_matrix

            index, rows = {
                "msg_src": (self.msg_src, self.num_nodes),
                "msg_dst": (self.msg_dst, self.num_nodes),
                "membership": (self.membership, self.batch_size),
                "gat_src": (self.gat_edges[0], self.num_nodes),
                "gat_dst": (self.gat_edges[1], self.num_nodes),
            }[which]
            n_entries = len(index)
            cache[which] = csr_matrix(
                (
                    np.ones(n_entries, dtype=self.features.dtype),
                    (index, np.arange(n_entries, dtype=np.int64)),
                ),
                shape=(rows, n_entries),
            )
        return cache[which]

    def bounds_for(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """(starts of nonempty segments, nonempty mask) for a sorted index."""
        cache = self.__dict__.setdefault("_bounds_cache", {})
        if which not in cache:
            index, rows = {
                "msg_dst": (self.msg_dst, self.num_nodes),
                "membership": (self.membership, self.batch_size),
                "gat_dst": (self.gat_edges[1], self.num_nodes),
            }[which]
            counts = np.bincount(index, minlength=rows)
            nonempty = counts > 0
            starts = np.searchsorted(index, np.arange(rows, dtype=np.int64))
            cache[which] = (starts[nonempty], nonempty)
        return cache[which]

    def unbatch(self) -> list[CdfgGraph]:
        """Recover the original graphs exactly (inverse of batch_graphs)."""
        graphs = []
        for slot, gid in enumerate(self.graph_ids):
            lo, hi = self.node_offsets[slot], self.node_offsets[slot + 1]
            nodes = tuple(decode_features(self.features[lo:hi]))
            mask = self.membership[self.edge_src] == slot
            edges = tuple(
                (int(s - lo), int(d - lo), EDGE_KINDS[int(k)])
                for s, d, k in zip(
                    self.edge_src[mask], self.edge_dst[mask], self.edge_kind[mask]
                )
            )
            graphs.append(CdfgGraph(gid, nodes, edges))
        return graphs


def _symmetrize(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Directed message list (msg_src, msg_dst) over neighborhoods: both
    directions, self edges dropped, duplicates collapsed, sorted by dst."""
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    keep = a != b
    if not keep.any():
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    pairs = np.unique(np.stack([b[keep], a[keep]], axis=1), axis=0)
    return np.ascontiguousarray(pairs[:, 1]), np.ascontiguousarray(pairs[:, 0])


def _graph_arrays(graph: CdfgGraph, dtype, cache: dict | None):
    key = (id(graph), np.dtype(dtype).str)
    if cache is not None and key in cache:
        return cache[key]
    feats = encode_features(graph, dtype=dtype)
    if graph.edges:
        triples = np.array(
            [(s, d, EDGE_KIND_INDEX[k]) for s, d, k in graph.edges], dtype=np.int64
        )
        src, dst, kind = triples[:, 0], triples[:, 1], triples[:, 2]
    else:
        src = dst = kind = np.zeros(0, dtype=np.int64)
    msg_src, msg_dst = _symmetrize(src, dst)
    out = (feats, src, dst, kind, msg_src, msg_dst)
    if cache is not None:
        cache[key] = out
    return out


def batch_graphs(
    samples: list[PairedSample], side: str, dtype=np.float32, cache: dict | None = None
) -> GraphBatch:
    """Stack the kernel or design graphs of the given samples into one batch.

    An optional cache dict memoizes per-graph arrays across calls (keyed by
    graph object identity; callers must keep the graphs alive).
    """
    if not samples:
        raise DataError("cannot batch an empty sample list")
    if side not in ("kernel", "design"):
        raise DataError(f"side must be 'kernel' or 'design', got {side!r}")
    graphs = [
        s.kernel_graph if side == "kernel" else s.design_graph for s in samples
    ]
    return batch_raw_graphs(graphs, dtype=dtype, cache=cache)


def batch_raw_graphs(
    graphs: list[CdfgGraph], dtype=np.float32, cache: dict | None = None
) -> GraphBatch:
    if not graphs:
        raise DataError("cannot batch an empty graph list")
    arrays = [_graph_arrays(g, dtype, cache) for g in graphs]
    counts = [a[0].shape[0] for a in arrays]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    membership = np.repeat(np.arange(len(graphs), dtype=np.int64), counts)
    return GraphBatch(
        features=np.concatenate([a[0] for a in arrays], axis=0),
        edge_src=np.concatenate([a[1] + off for a, off in zip(arrays, offsets[:-1])]),
        edge_dst=np.concatenate([a[2] + off for a, off in zip(arrays, offsets[:-1])]),
        edge_kind=np.concatenate([a[3] for a in arrays]),
        membership=membership,
        node_offsets=offsets,
        graph_ids=tuple(g.graph_id for g in graphs),
        sym_edges=(
            np.concatenate([a[4] + off for a, off in zip(arrays, offsets[:-1])]),
            np.concatenate([a[5] + off for a, off in zip(arrays, offsets[:-1])]),
        ),
    )
