"""Frozen code-LLM embedding exporter for HLS design sources."""

from .backends import DEFAULT_MODEL, KNOWN_MODELS, load_backend, register_backend
from .export import ExportError, ExportJob, embed_design, export_embeddings
from .verify import verify_export
from .writer import read_embedding_file, write_embedding_file

__version__ = "0.1.0"
