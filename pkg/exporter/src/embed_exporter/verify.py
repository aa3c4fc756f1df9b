"""Standalone verification of an exported embedding file."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .writer import read_embedding_file


def verify_export(path: Path) -> dict:
    """Re-open with the independent reader; check magic, counts and values.

    Returns a report dict; raises ValueError on any structural problem.
    """
    matrix, index, source_model = read_embedding_file(Path(path))
    by_row = {v: k for k, v in index.items()}
    norms = {}
    for row in range(matrix.shape[0]):
        design_id = by_row.get(row)
        if design_id is None:
            raise ValueError(f"row {row} has no design_id in the manifest")
        if not np.isfinite(matrix[row]).all():
            raise ValueError(f"non-finite values in row {row} ({design_id})")
        norms[design_id] = float(np.linalg.norm(matrix[row]))
    return {
        "rows": matrix.shape[0],
        "dim": matrix.shape[1],
        "source_model": source_model,
        "norms": norms,
    }
