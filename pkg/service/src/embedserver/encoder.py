"""Frozen-transformer loading and pooled sentence inference.

Inference is read-only by construction: eval mode, gradients off,
``torch.inference_mode`` around every forward pass. Determinism for a
fixed (model, text, max_tokens, pooling) follows from that plus eager
CPU execution.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

import torch
from transformers import AutoModel, AutoTokenizer

from .registry import ModelSpec

POOLINGS = ("pooler", "mean")
MAX_TOKEN_CAP = 512

_INFER_BATCH = 32  # chunk size within one request; bounds peak memory


class EncoderError(Exception):
    """Checkpoint failed to load or produce usable vectors."""


def weights_checksum(model: torch.nn.Module) -> str:
    """SHA-256 over every entry of the state dict, in name order."""
    h = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        h.update(key.encode("utf-8"))
        h.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _pool(output: Any, attention_mask: torch.Tensor, pooling: str) -> torch.Tensor:
    pooler = getattr(output, "pooler_output", None)
    if pooling == "pooler" and pooler is not None:
        return pooler
    # mean over real tokens only; also the fallback when a checkpoint
    # ships without a pooler head
    hidden = output.last_hidden_state
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts


@dataclass
class LoadedEncoder:
    spec: ModelSpec
    tokenizer: Any
    model: Any
    dim: int
    fingerprint: str

    def encode(self, texts: list[str], max_tokens: int, pooling: str) -> list[list[float]]:
        """Pooled vectors, one row per text, in input order."""
        if pooling not in POOLINGS:
            raise EncoderError(f"unknown pooling {pooling!r}; expected one of {POOLINGS}")
        if not (1 <= max_tokens <= MAX_TOKEN_CAP):
            raise EncoderError(f"max_tokens must be in 1..{MAX_TOKEN_CAP}, got {max_tokens}")
        rows: list[list[float]] = []
        for start in range(0, len(texts), _INFER_BATCH):
            chunk = list(texts[start : start + _INFER_BATCH])
            enc = self.tokenizer(
                chunk,
                padding=True,
                truncation=True,
                max_length=max_tokens,
                return_tensors="pt",
            )
            with torch.inference_mode():
                out = self.model(**enc)
                pooled = _pool(out, enc["attention_mask"], pooling)
            if not torch.isfinite(pooled).all():
                raise EncoderError(f"{self.spec.name} produced non-finite values")
            rows.extend(pooled.to(torch.float32).tolist())
        return rows


def load_encoder(spec: ModelSpec) -> LoadedEncoder:
    """Load tokenizer plus frozen weights and fingerprint them."""
    try:
        tokenizer = AutoTokenizer.from_pretrained(spec.source)
        model = AutoModel.from_pretrained(spec.source)
    except Exception as exc:  # hub, file, and config errors are all terminal here
        raise EncoderError(f"failed to load {spec.name!r} from {spec.source!r}: {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    dim = int(getattr(model.config, "hidden_size", 0))
    if dim <= 0:
        raise EncoderError(f"{spec.name}: checkpoint config reports no hidden size")
    fingerprint = f"{spec.name}:d{dim}:{weights_checksum(model)[:12]}"
    return LoadedEncoder(spec=spec, tokenizer=tokenizer, model=model, dim=dim, fingerprint=fingerprint)
