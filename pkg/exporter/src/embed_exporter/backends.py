"""Frozen code-LLM backends: tokenizer plus last-layer hidden states.

A backend owns one pretrained model in evaluation mode and reports its
hidden width straight from the model configuration; nothing is hardcoded
per model.  Known published checkpoints are resolved by short name; tests
and offline runs may register alternative factories.
"""

from __future__ import annotations

from typing import Callable, Protocol

import numpy as np

KNOWN_MODELS = {
    "Qwen2.5-Coder-1.5B": "Qwen/Qwen2.5-Coder-1.5B",
    "Llama-3.2-1B": "meta-llama/Llama-3.2-1B",
}

DEFAULT_MODEL = "Qwen2.5-Coder-1.5B"

_REGISTRY: dict[str, Callable[[], "Backend"]] = {}


class Backend(Protocol):
    model_id: str
    hidden_size: int

    def tokenize(self, text: str) -> list[int]: ...

    def last_hidden_states(self, token_ids: list[int]) -> np.ndarray: ...


def register_backend(model_id: str, factory: Callable[[], Backend]) -> None:
    """Override or extend model resolution (used for offline/test backends)."""
    _REGISTRY[model_id] = factory


def load_backend(model_id: str = DEFAULT_MODEL) -> Backend:
    if model_id in _REGISTRY:
        return _REGISTRY[model_id]()
    return HuggingFaceBackend(model_id)


class HuggingFaceBackend:
    """Loads a pretrained causal code LM in frozen evaluation mode."""

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.model_id = model_id
        checkpoint = KNOWN_MODELS.get(model_id, model_id)
        self._tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self._model = AutoModel.from_pretrained(checkpoint, torch_dtype=torch.float32)
        self._model.eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self.hidden_size = int(self._model.config.hidden_size)
        self._torch = torch

    def tokenize(self, text: str) -> list[int]:
        return self._tokenizer.encode(text, add_special_tokens=True)

    def last_hidden_states(self, token_ids: list[int]) -> np.ndarray:
        torch = self._torch
        ids = torch.tensor([token_ids], dtype=torch.long)
        with torch.no_grad():
            out = self._model(input_ids=ids)
        return out.last_hidden_state[0].to(torch.float32).numpy()
