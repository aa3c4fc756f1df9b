"""Frozen code-embedding sidecar files: binary payload plus JSON manifest.

Binary layout (bit-exact across ecosystems):

    bytes 0..7    magic "DHLSEMB1"
    bytes 8..11   u32 little-endian row count
    bytes 12..15  u32 little-endian embedding dimension L
    rest          count * L float32 little-endian values, row-major

The companion manifest at ``<path>.json`` maps design_id -> row index and
records the producing model identifier.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import FORMAT_VERSION, DataError

MAGIC = b"DHLSEMB1"
_HEADER_LEN = len(MAGIC) + 8


def manifest_path_for(path: Path) -> Path:
    return Path(str(path) + ".json")


@dataclass
class EmbeddingTable:
    """design_id -> fixed-length float32 vector, all rows sharing dimension."""

    dim: int
    rows: dict[str, np.ndarray]
    source_model: str

    def lookup(self, design_id: str) -> np.ndarray:
        """Exact stored vector for the design; unknown ids raise."""
        try:
            return self.rows[design_id].copy()
        except KeyError:
            raise DataError(f"no embedding for design {design_id!r}") from None

    def matrix(self, design_ids: list[str]) -> np.ndarray:
        return np.stack([self.lookup(d) for d in design_ids], axis=0)

    def check_covers(self, design_ids) -> None:
        missing = [d for d in design_ids if d not in self.rows]
        if missing:
            raise DataError(
                f"embedding table missing {len(missing)} design(s), "
                f"first: {missing[0]!r}"
            )


def save_embeddings(table: EmbeddingTable, path: Path) -> None:
    """Canonical writer: rows serialized in index order, ids sorted in JSON."""
    path = Path(path)
    ids = sorted(table.rows)
    payload = np.stack([table.rows[d] for d in ids], axis=0).astype("<f4")
    if payload.shape[1] != table.dim:
        raise DataError(
            f"row dimension {payload.shape[1]} != declared dim {table.dim}"
        )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(ids), table.dim))
        fh.write(payload.tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "source_model": table.source_model,
        "rows": {design_id: i for i, design_id in enumerate(ids)},
    }
    manifest_path_for(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _parse_manifest(path: Path) -> tuple[str, dict[str, int]]:
    if not path.exists():
        raise DataError(f"missing embedding manifest {path}")

    def reject_duplicates(pairs):
        keys = [k for k, _ in pairs]
        if len(keys) != len(set(keys)):
            raise DataError(f"duplicate design_id in embedding manifest {path}")
        return dict(pairs)

    try:
        obj = json.loads(path.read_text(), object_pairs_hook=reject_duplicates)
    except json.JSONDecodeError as err:
        raise DataError(f"malformed embedding manifest: {err}") from err
    if obj.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"unsupported embedding manifest format_version {obj.get('format_version')}"
        )
    rows = obj.get("rows")
    if not isinstance(rows, dict):
        raise DataError("embedding manifest missing 'rows' mapping")
    return str(obj.get("source_model", "")), {str(k): int(v) for k, v in rows.items()}


def load_embeddings(path: Path) -> EmbeddingTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing embedding file {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER_LEN or blob[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not an embedding file (bad magic)")
    count, dim = struct.unpack("<II", blob[len(MAGIC) : _HEADER_LEN])
    expected = _HEADER_LEN + count * dim * 4
    if len(blob) < expected:
        raise DataError(
            f"truncated embedding payload: {len(blob)} bytes, expected {expected}"
        )
    if len(blob) > expected:
        raise DataError(f"trailing bytes after embedding payload in {path}")
    payload = np.frombuffer(blob, dtype="<f4", offset=_HEADER_LEN)
    matrix = payload.reshape(count, dim) if count else payload.reshape(0, dim)

    source_model, index = _parse_manifest(manifest_path_for(path))
    if len(index) != count:
        raise DataError(
            f"manifest/payload count mismatch: {len(index)} ids vs {count} rows"
        )
    used = sorted(index.values())
    if used != list(range(count)):
        raise DataError("embedding manifest row indices are not a permutation")

    rows: dict[str, np.ndarray] = {}
    for design_id, row_idx in index.items():
        vec = matrix[row_idx].copy()
        if not np.isfinite(vec).all():
            raise DataError(f"non-finite embedding for design {design_id!r}")
        rows[design_id] = vec
    return EmbeddingTable(dim=dim, rows=rows, source_model=source_model)
