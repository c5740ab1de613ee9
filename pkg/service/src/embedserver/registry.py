"""Checkpoint registry: which encoders the sidecar is allowed to serve.

Clients address models by short name; each name maps to a ``source``
that ``AutoModel.from_pretrained`` understands (a hub id or a local
directory), which is how tests swap in a tiny offline checkpoint
without touching the HTTP surface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

TOKENIZATIONS = ("word", "char")


class RegistryError(Exception):
    """Bad registry configuration."""


class UnknownModelError(KeyError):
    """Requested name is not in the registry."""

    def __init__(self, name: str, known: tuple[str, ...]) -> None:
        super().__init__(name)
        self.name = name
        self.known = known

    def __str__(self) -> str:
        return f"unknown model {self.name!r}; expected one of: {', '.join(self.known)}"


def _infer_tokenization(name: str) -> str:
    # the char-level checkpoints advertise themselves in the name
    return "char" if "-char" in name else "word"


@dataclass(frozen=True)
class ModelSpec:
    """One servable checkpoint.

    ``dim`` is the advertised hidden size; it is re-read from the
    checkpoint config at load time, so a stale value here cannot
    corrupt responses, only the /v1/models listing of unloaded models.
    """

    name: str
    source: str
    dim: int
    tokenization: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise RegistryError("model name must be non-empty")
        if not self.source:
            raise RegistryError(f"model {self.name!r} has an empty source")
        if self.dim <= 0:
            raise RegistryError(f"model {self.name!r} has non-positive dim {self.dim}")
        if not self.tokenization:
            object.__setattr__(self, "tokenization", _infer_tokenization(self.name))
        if self.tokenization not in TOKENIZATIONS:
            raise RegistryError(
                f"model {self.name!r} has tokenization {self.tokenization!r}; "
                f"expected one of {TOKENIZATIONS}"
            )


DEFAULT_SPECS = (
    ModelSpec("bert-base-japanese-v3", "cl-tohoku/bert-base-japanese-v3", 768),
    ModelSpec("bert-base-japanese-char-v3", "cl-tohoku/bert-base-japanese-char-v3", 768),
    ModelSpec("bert-large-japanese-v2", "cl-tohoku/bert-large-japanese-v2", 1024),
    ModelSpec("bert-large-japanese-char-v2", "cl-tohoku/bert-large-japanese-char-v2", 1024),
)


class Registry:
    """Ordered, immutable name -> ModelSpec lookup."""

    def __init__(self, specs: Iterable[ModelSpec] = DEFAULT_SPECS) -> None:
        specs = tuple(specs)
        if not specs:
            raise RegistryError("registry needs at least one model")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise RegistryError(f"duplicate model names in registry: {names}")
        self._specs = specs
        self._by_name = {s.name: s for s in specs}

    @property
    def specs(self) -> tuple[ModelSpec, ...]:
        return self._specs

    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self._specs)

    def get(self, name: str) -> ModelSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownModelError(name, self.names()) from None


def load_registry(path: str | Path) -> Registry:
    """Read a JSON config file.

    Shape: ``{"models": [{"name": ..., "source": ..., "dim": ...,
    "tokenization"?: "word"|"char"}, ...]}``.
    """
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise RegistryError(f"registry config not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry config {p} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("models"), list):
        raise RegistryError(f"registry config {p} must be an object with a 'models' list")
    specs = []
    for i, entry in enumerate(raw["models"]):
        if not isinstance(entry, dict):
            raise RegistryError(f"models[{i}] must be an object")
        unknown = set(entry) - {"name", "source", "dim", "tokenization"}
        if unknown:
            raise RegistryError(f"models[{i}] has unknown keys {sorted(unknown)}")
        try:
            dim = int(entry.get("dim", 0))
        except (TypeError, ValueError):
            raise RegistryError(f"models[{i}] has a non-integer dim") from None
        specs.append(
            ModelSpec(
                name=str(entry.get("name", "")),
                source=str(entry.get("source", "")),
                dim=dim,
                tokenization=str(entry.get("tokenization", "")),
            )
        )
    return Registry(specs)
