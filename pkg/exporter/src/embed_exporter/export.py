"""Embedding export: concatenate design sources, run the frozen model once,
keep the final layer's hidden state at the last token.

Per design: source files are concatenated in sorted path order, tokenized,
truncated head-first to the token budget (pragmas sit at the top of design
files, so the head carries the signal), and embedded with a single forward
pass.  Rows are written in sorted design_id order for determinism.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import DEFAULT_MODEL, Backend, load_backend
from .writer import write_embedding_file


class ExportError(ValueError):
    """Invalid job description or unusable source files."""


@dataclass
class ExportJob:
    sources: dict[str, list[Path]]
    out_path: Path
    model_id: str = DEFAULT_MODEL
    max_tokens: int = 4096

    def validate(self) -> None:
        if not self.sources:
            raise ExportError("export job lists no designs")
        for design_id, files in self.sources.items():
            if not files:
                raise ExportError(f"design {design_id!r} has no source files")
        if self.max_tokens < 1:
            raise ExportError("max_tokens must be >= 1")


def concatenate_sources(files: list[Path]) -> str:
    parts = []
    for path in sorted(Path(f) for f in files):
        try:
            parts.append(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ExportError(f"missing source file {path}")
        except UnicodeDecodeError as err:
            raise ExportError(f"source file {path} is not readable text: {err}")
    return "\n".join(parts)


def embed_design(backend: Backend, files: list[Path], max_tokens: int) -> np.ndarray:
    text = concatenate_sources(files)
    token_ids = backend.tokenize(text)
    if not token_ids:
        raise ExportError("tokenization produced no tokens")
    token_ids = token_ids[:max_tokens]
    hidden = backend.last_hidden_states(token_ids)
    if hidden.shape != (len(token_ids), backend.hidden_size):
        raise ExportError(
            f"backend returned states of shape {hidden.shape}, expected "
            f"({len(token_ids)}, {backend.hidden_size})"
        )
    return hidden[-1].astype(np.float32)


def export_embeddings(job: ExportJob, backend: Backend | None = None) -> dict:
    """Writes the embedding file plus manifest; returns a summary dict."""
    job.validate()
    backend = backend or load_backend(job.model_id)
    rows: dict[str, np.ndarray] = {}
    for design_id in sorted(job.sources):
        vec = embed_design(backend, job.sources[design_id], job.max_tokens)
        if vec.shape != (backend.hidden_size,):
            raise ExportError(
                f"design {design_id!r}: dimension drift "
                f"({vec.shape} vs hidden width {backend.hidden_size})"
            )
        rows[design_id] = vec
    write_embedding_file(job.out_path, rows, source_model=backend.model_id)
    return {
        "designs": len(rows),
        "dim": backend.hidden_size,
        "model": backend.model_id,
        "out": str(job.out_path),
    }
