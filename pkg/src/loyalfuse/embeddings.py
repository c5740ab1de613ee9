"""Fixed-width text feature maps from a frozen encoder.

Three interchangeable providers fill the same contract: ``stub`` hashes
byte n-grams into a signed-count vector (deterministic, dependency-free,
used by the test suite and the synthetic experiments), ``service`` calls
the HTTP embedding sidecar, and ``file`` restores a previously saved
matrix.  The encoder is inference-only everywhere: nothing in this
package ever updates an embedding row.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np
import requests

PROVIDERS = ("file", "stub", "service")

# Checkpoint names accepted for the service provider.
SERVICE_MODELS = (
    "bert-base-japanese-v3",
    "bert-base-japanese-char-v3",
    "bert-large-japanese-v2",
    "bert-large-japanese-char-v2",
)

SERVICE_BATCH = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_EMB_MAGIC = b"EMB1"


class EmbeddingError(Exception):
    """Invalid embedding configuration or payload."""


class EmbeddingFileError(EmbeddingError):
    """Corrupt, truncated, or foreign embedding file."""


class ServiceError(EmbeddingError):
    """Embedding service unreachable or returned a bad response."""


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "stub"
    d_text: int = 200
    model_name: str | None = None
    len_max: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.provider not in PROVIDERS:
            raise EmbeddingError(f"unknown provider {self.provider!r}; expected one of {PROVIDERS}")
        if self.d_text <= 0:
            raise EmbeddingError(f"d_text must be positive, got {self.d_text}")
        if not (1 <= self.len_max <= 512):
            raise EmbeddingError(f"len_max must be in 1..512, got {self.len_max}")
        if self.provider == "service" and self.model_name not in SERVICE_MODELS:
            raise EmbeddingError(
                f"model_name {self.model_name!r} is not a known checkpoint; "
                f"expected one of {', '.join(SERVICE_MODELS)}"
            )


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-per-record feature map plus provenance fingerprint."""

    rows: np.ndarray
    ids: tuple[str, ...] = field(default_factory=tuple)
    provider_fingerprint: str = ""

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", tuple(self.ids))
        if rows.ndim != 2:
            raise EmbeddingError(f"rows must be a 2-d matrix, got shape {rows.shape}")
        if rows.shape[1] <= 0:
            raise EmbeddingError("embedding width must be positive")
        if rows.shape[0] != len(self.ids):
            raise EmbeddingError(
                f"row count {rows.shape[0]} does not match id count {len(self.ids)}"
            )
        if rows.size and not np.all(np.isfinite(rows)):
            raise EmbeddingError("embedding matrix contains non-finite entries")
        if not self.provider_fingerprint:
            raise EmbeddingError("provider fingerprint must be non-empty")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d_text(self) -> int:
        return self.rows.shape[1]

    def checksum(self) -> str:
        h = sha256()
        h.update(self.provider_fingerprint.encode("utf-8"))
        h.update(struct.pack("<II", self.n, self.d_text))
        for id_ in self.ids:
            h.update(id_.encode("utf-8") + b"\x00")
        h.update(np.ascontiguousarray(self.rows, dtype="<f8").tobytes())
        return h.hexdigest()


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a; a non-zero seed is XOR-folded into the offset basis."""
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def embed_stub(texts: list[str], cfg: EmbeddingConfig) -> EmbeddingMatrix:
    """Signed byte n-gram hashing into ``d_text`` buckets, L2-normalised.

    Every byte n-gram (n in 1..3) of the UTF-8 encoding is hashed with
    FNV-1a 64; the hash picks a bucket (mod d_text) and a sign (+1 when
    bit 63 is clear), and the signed counts are accumulated.  Non-zero
    vectors are scaled to unit L2 norm; the zero vector (empty text)
    stays zero.  Byte level, so behaviour is encoding-exact for
    multibyte Japanese text.
    """
    if cfg.provider != "stub":
        raise EmbeddingError(f"embed_stub called with provider {cfg.provider!r}")
    d = cfg.d_text
    rows = np.zeros((len(texts), d), dtype=np.float64)
    sign_bit = 1 << 63
    for r, text in enumerate(texts):
        data = text.encode("utf-8")
        row = rows[r]
        for n in (1, 2, 3):
            for i in range(len(data) - n + 1):
                h = fnv1a64(data[i : i + n], cfg.seed)
                row[h % d] += -1.0 if h & sign_bit else 1.0
        norm = np.linalg.norm(row)
        if norm > 0.0:
            row /= norm
    return EmbeddingMatrix(rows=rows, ids=tuple(f"t{i}" for i in range(len(texts))),
                           provider_fingerprint=stub_fingerprint(cfg))


def stub_fingerprint(cfg: EmbeddingConfig) -> str:
    return f"stub:fnv1a64:d{cfg.d_text}:s{cfg.seed}"


def embed_texts(texts: list[str], ids: list[str], cfg: EmbeddingConfig,
                endpoint: str | None = None, emb_path: str | None = None) -> EmbeddingMatrix:
    """Provider dispatch, attaching the given record ids to the rows."""
    if cfg.provider == "stub":
        matrix = embed_stub(texts, cfg)
        return EmbeddingMatrix(rows=matrix.rows, ids=tuple(ids),
                               provider_fingerprint=matrix.provider_fingerprint)
    if cfg.provider == "service":
        if endpoint is None:
            raise ServiceError("service provider requires an endpoint")
        matrix = embed_via_service(texts, cfg, endpoint)
        return EmbeddingMatrix(rows=matrix.rows, ids=tuple(ids),
                               provider_fingerprint=matrix.provider_fingerprint)
    if emb_path is None:
        raise EmbeddingError("file provider requires a path to a saved embedding file")
    matrix = load_embeddings(emb_path)
    if list(matrix.ids) != list(ids):
        raise EmbeddingFileError(
            f"embedding file ids do not match dataset ids ({emb_path})"
        )
    return matrix


def embed_via_service(texts: list[str], cfg: EmbeddingConfig, endpoint: str) -> EmbeddingMatrix:
    """Fetch embeddings over HTTP in input order, batching at most 64 texts.

    The reported dimension must be identical across batches and every
    value finite; anything else aborts with the endpoint in the message.
    """
    if cfg.provider != "service":
        raise EmbeddingError(f"embed_via_service called with provider {cfg.provider!r}")
    url = endpoint.rstrip("/") + "/v1/embed"
    chunks: list[np.ndarray] = []
    dim: int | None = None
    fingerprint: str | None = None
    for start in range(0, len(texts), SERVICE_BATCH):
        batch = texts[start : start + SERVICE_BATCH]
        payload = {"model": cfg.model_name, "texts": batch, "max_tokens": cfg.len_max}
        try:
            resp = requests.post(url, json=payload, timeout=300)
        except requests.RequestException as exc:
            raise ServiceError(f"embedding service unreachable at {endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise ServiceError(
                f"embedding service at {endpoint} returned {resp.status_code}: {resp.text[:300]}"
            )
        try:
            body = resp.json()
            batch_dim = int(body["dim"])
            vectors = np.asarray(body["vectors"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ServiceError(f"malformed response from {endpoint}: {exc}") from exc
        if vectors.ndim != 2 or vectors.shape != (len(batch), batch_dim):
            raise ServiceError(
                f"embedding service at {endpoint} returned shape {vectors.shape} "
                f"for a batch of {len(batch)} texts with dim {batch_dim}"
            )
        if dim is None:
            dim = batch_dim
            fingerprint = body.get("model_fingerprint") or f"service:{cfg.model_name}:d{dim}"
        elif batch_dim != dim:
            raise ServiceError(
                f"embedding service at {endpoint} switched dimension {dim} -> {batch_dim} between batches"
            )
        if not np.all(np.isfinite(vectors)):
            raise ServiceError(f"embedding service at {endpoint} returned non-finite values")
        chunks.append(vectors)
    if dim is None:  # zero texts
        dim = cfg.d_text
        fingerprint = f"service:{cfg.model_name}:d{dim}"
    rows = np.vstack(chunks) if chunks else np.zeros((0, dim))
    return EmbeddingMatrix(rows=rows, ids=tuple(f"t{i}" for i in range(len(texts))),
                           provider_fingerprint=fingerprint or "")


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the binary embedding file (magic ``EMB1``, little-endian)."""
    fp = matrix.provider_fingerprint.encode("utf-8")
    if len(fp) > 0xFFFF:
        raise EmbeddingFileError("fingerprint longer than 65535 bytes")
    parts = [_EMB_MAGIC, struct.pack("<II", matrix.n, matrix.d_text),
             struct.pack("<H", len(fp)), fp]
    for id_ in matrix.ids:
        raw = id_.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingFileError(f"id longer than 65535 bytes: {id_[:32]!r}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(matrix.rows, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise EmbeddingFileError(f"truncated embedding file: {self.path}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Restore a matrix written by :func:`save_embeddings`, bit-exactly."""
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != _EMB_MAGIC:
        raise EmbeddingFileError(f"not an embedding file (bad magic): {path}")
    n, d = struct.unpack("<II", reader.take(8))
    if d == 0:
        raise EmbeddingFileError(f"invalid header (d_text=0): {path}")
    (fp_len,) = struct.unpack("<H", reader.take(2))
    fingerprint = reader.take(fp_len).decode("utf-8")
    ids = []
    for _ in range(n):
        (id_len,) = struct.unpack("<H", reader.take(2))
        ids.append(reader.take(id_len).decode("utf-8"))
    raw = reader.take(n * d * 8)
    if reader.pos != len(reader.data):
        raise EmbeddingFileError(f"trailing bytes after embedding payload: {path}")
    rows = np.frombuffer(raw, dtype="<f8").reshape(n, d).copy()
    return EmbeddingMatrix(rows=rows, ids=tuple(ids), provider_fingerprint=fingerprint)
