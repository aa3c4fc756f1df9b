import numpy as np
import pytest


class TinyByteBackend:
    """Offline stand-in for a pretrained code LM: a small randomly initialized
    Qwen2 trunk (fixed seed) with a byte-level tokenizer.  Deterministic and
    shaped exactly like the production backends."""

    model_id = "tiny-byte-qwen"

    def __init__(self, hidden_size=32, seed=0):
        import torch
        from transformers import Qwen2Config, Qwen2Model

        config = Qwen2Config(
            hidden_size=hidden_size,
            num_hidden_layers=2,
            num_attention_heads=4,
            num_key_value_heads=2,
            intermediate_size=64,
            vocab_size=260,
            max_position_embeddings=8192,
        )
        torch.manual_seed(seed)
        self._model = Qwen2Model(config).eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self.hidden_size = int(self._model.config.hidden_size)
        self._torch = torch

    def tokenize(self, text):
        return [min(b, 255) for b in text.encode("utf-8")]

    def last_hidden_states(self, token_ids):
        torch = self._torch
        ids = torch.tensor([token_ids], dtype=torch.long)
        with torch.no_grad():
            out = self._model(input_ids=ids)
        return out.last_hidden_state[0].to(torch.float32).numpy()


@pytest.fixture(scope="session")
def backend():
    return TinyByteBackend()


@pytest.fixture
def design_sources(tmp_path):
    a = tmp_path / "top.cpp"
    a.write_text(
        "void top(int a[8], int b[8]) {\n"
        "#pragma HLS ARRAY_PARTITION variable=a factor=2\n"
        "  for (int i = 0; i < 8; i++) {\n"
        "#pragma HLS UNROLL factor=2\n"
        "    b[i] = a[i] + 1;\n  }\n}\n"
    )
    b = tmp_path / "helpers.h"
    b.write_text("static inline int sq(int x) { return x * x; }\n")
    return {"design_a": [a, b], "design_b": [a]}
