"""Encoders that turn images and class prompts into embedding vectors.

The stub encoder needs no model weights: it derives a deterministic unit
vector from the content bytes, which is enough to exercise the file formats
end to end. Real checkpoints plug in through the same two-method surface.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np


class Encoder(Protocol):
    dim: int

    def encode_images(self, batch: Sequence[np.ndarray]) -> np.ndarray: ...

    def encode_texts(self, prompts: Sequence[str]) -> np.ndarray: ...


def _hash_to_vector(data: bytes, dim: int, salt: bytes) -> np.ndarray:
    digest = hashlib.sha256(salt + data).digest()
    rng = np.random.default_rng(np.frombuffer(digest[:8], dtype=np.uint64)[0])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class StubEncoder:
    """Deterministic content-hash encoder for tests and dry runs."""

    def __init__(self, dim: int = 32):
        self.dim = dim

    def encode_images(self, batch):
        return np.stack([
            _hash_to_vector(np.ascontiguousarray(img).tobytes(), self.dim, b"img:")
            for img in batch
        ]).astype(np.float32)

    def encode_texts(self, prompts):
        return np.stack([
            _hash_to_vector(p.encode("utf-8"), self.dim, b"txt:") for p in prompts
        ]).astype(np.float32)


def resolve_encoder(model: str) -> Encoder:
    """Supported identifiers: 'stub', 'stub:<dim>', 'hf:<checkpoint>'."""
    if model == "stub":
        return StubEncoder()
    if model.startswith("stub:"):
        return StubEncoder(dim=int(model.split(":", 1)[1]))
    if model.startswith("hf:"):
        return _HfClipEncoder(model.split(":", 1)[1])
    raise ValueError(f"unknown model identifier {model!r}")


class _HfClipEncoder:
    """CLIP-style dual encoder loaded through transformers (optional extra)."""

    def __init__(self, checkpoint: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ValueError(
                "hf: encoders need torch and transformers installed"
            ) from exc
        self._model = CLIPModel.from_pretrained(checkpoint)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(checkpoint)
        self.dim = self._model.config.projection_dim

    def encode_images(self, batch):
        import torch

        inputs = self._processor(images=list(batch), return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.numpy().astype(np.float32)

    def encode_texts(self, prompts):
        import torch

        inputs = self._processor(text=list(prompts), return_tensors="pt", padding=True)
        with torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.numpy().astype(np.float32)
