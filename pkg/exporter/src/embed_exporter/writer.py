"""DHLSEMB1 writer and manifest emitter.

Deliberately self-contained (struct + numpy only) so the exporter talks to
the training side purely through the on-disk format:

    bytes 0..7    magic "DHLSEMB1"
    bytes 8..11   u32 little-endian row count
    bytes 12..15  u32 little-endian embedding dimension L
    rest          count * L float32 little-endian values, row-major

plus ``<path>.json`` mapping design_id -> row index with the source model.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DHLSEMB1"
HEADER_LEN = len(MAGIC) + 8
FORMAT_VERSION = 1


def manifest_path_for(path: Path) -> Path:
    return Path(str(path) + ".json")


def write_embedding_file(
    path: Path, rows: dict[str, np.ndarray], source_model: str
) -> None:
    """Rows are serialized in sorted design_id order, cast to float32 LE."""
    path = Path(path)
    ids = sorted(rows)
    if not ids:
        raise ValueError("refusing to write an empty embedding file")
    dim = int(np.asarray(rows[ids[0]]).shape[-1])
    payload = np.stack([np.asarray(rows[d], dtype="<f4").ravel() for d in ids])
    if payload.shape != (len(ids), dim):
        raise ValueError("embedding rows disagree on dimension")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(ids), dim))
        fh.write(payload.astype("<f4").tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "source_model": source_model,
        "rows": {design_id: i for i, design_id in enumerate(ids)},
    }
    manifest_path_for(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def read_embedding_file(path: Path) -> tuple[np.ndarray, dict[str, int], str]:
    """Independent reader used by verification; returns (matrix, index, model)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER_LEN or blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    count, dim = struct.unpack("<II", blob[len(MAGIC) : HEADER_LEN])
    expected = HEADER_LEN + count * dim * 4
    if len(blob) != expected:
        raise ValueError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    matrix = np.frombuffer(blob, dtype="<f4", offset=HEADER_LEN).reshape(count, dim)
    manifest = json.loads(manifest_path_for(path).read_text())
    index = {str(k): int(v) for k, v in manifest["rows"].items()}
    if len(index) != count:
        raise ValueError(f"{path}: manifest lists {len(index)} ids for {count} rows")
    return matrix, index, str(manifest.get("source_model", ""))
