"""Shared fixtures: a tiny offline BERT checkpoint registered under a real name.

The checkpoint is generated locally (seeded, so identical every run) and
saved in the standard layout, then served through the exact same loading
path as a hub checkpoint would be. No network access anywhere.
"""

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

from embedserver.encoder import load_encoder
from embedserver.registry import ModelSpec, Registry

torch.set_num_threads(1)  # keeps float reductions bit-stable across requests

TINY_NAME = "bert-base-japanese-v3"
TINY_DIM = 32

_CHARS = "あいうえおかきくけこさしすせそたちつてとなにぬねのまみむめもxyzXYZQ0123456789。、!?"


def build_tiny_checkpoint(dst) -> None:
    """Write a seeded miniature BERT plus wordpiece tokenizer into dst."""
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list(_CHARS) + ["##" + c for c in _CHARS]
    vocab_file = dst / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(vocab=str(vocab_file), do_lower_case=False)
    tokenizer.save_pretrained(str(dst))

    torch.manual_seed(0x5EED)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=TINY_DIM,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=96,
        type_vocab_size=2,
    )
    model = BertModel(config)
    model.eval()
    model.save_pretrained(str(dst))


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny-bert")
    build_tiny_checkpoint(d)
    return d


@pytest.fixture(scope="session")
def tiny_spec(checkpoint_dir):
    return ModelSpec(name=TINY_NAME, source=str(checkpoint_dir), dim=TINY_DIM)


@pytest.fixture(scope="session")
def tiny_registry(tiny_spec):
    return Registry((tiny_spec,))


@pytest.fixture(scope="session")
def tiny_encoder(tiny_spec):
    return load_encoder(tiny_spec)
