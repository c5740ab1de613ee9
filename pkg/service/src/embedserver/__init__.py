"""HTTP sidecar that serves pooled sentence embeddings from frozen BERT checkpoints."""

from .app import create_app
from .encoder import EncoderError, LoadedEncoder, load_encoder, weights_checksum
from .registry import ModelSpec, Registry, RegistryError, UnknownModelError, load_registry

__version__ = "0.1.0"

__all__ = [
    "create_app",
    "EncoderError",
    "LoadedEncoder",
    "load_encoder",
    "weights_checksum",
    "ModelSpec",
    "Registry",
    "RegistryError",
    "UnknownModelError",
    "load_registry",
    "__version__",
]
