"""Synthetic review corpus with tunable text/tabular signal strengths.

Each record draws two independent latent classes, one rendered into the
text and one into the first profile feature.  Both map to the same
symmetric signal levels; the label is a noisy threshold of the weighted
signal sum:

    y = 1{ a * s_text + b * s_tab + eps > 0 },   eps ~ N(0, noise^2)

Because the per-class vocabularies use pairwise-disjoint character sets,
byte n-grams identify the text class exactly, which is what makes the
text modality informative under hash-based embeddings.  The symmetric
level grid makes the label prior exactly one half and keeps every
Bayes-optimal accuracy (text-only, tabular-only, combined) available in
closed form as a finite sum of normal CDF values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Record

LEVELS = (-1.5, -0.5, 0.5, 1.5)

# One token list per latent class; class k only ever uses characters from
# its own alphabet, so classes never share an n-gram of any order.
DEFAULT_VOCAB: tuple[tuple[str, ...], ...] = (
    ("あかい", "うえき", "おくか", "きこえ", "くうき", "けいこ", "こうい", "いえかき"),
    ("さしす", "たてと", "せそつ", "しちさ", "すてせ", "とたち", "ちつそ", "てしすた"),
    ("なにぬ", "はひふ", "ねのほ", "にへな", "ぬふひ", "ほはの", "ひねに", "ふぬはな"),
    ("まみむ", "やゆよ", "めもら", "りまゆ", "むらよ", "もやみ", "らりめ", "ゆむもま"),
)

MODALITY_KEYS = ("Both", "X1", "X2")


class SyntheticError(Exception):
    """Degenerate or inconsistent generator settings."""


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 2000
    j_in: int = 5
    a: float = 1.0          # text-signal weight
    b: float = 1.0          # tabular-signal weight
    noise: float = 0.5      # label-noise sigma
    seed: int = 0
    vocab: tuple[tuple[str, ...], ...] = DEFAULT_VOCAB

    def __post_init__(self) -> None:
        if self.n < 20:
            raise SyntheticError(f"n must be >= 20, got {self.n}")
        if self.j_in < 1:
            raise SyntheticError(f"j_in must be >= 1, got {self.j_in}")
        if self.a < 0 or self.b < 0:
            raise SyntheticError(f"signal weights must be >= 0, got a={self.a}, b={self.b}")
        if self.a == 0 and self.b == 0:
            raise SyntheticError("degenerate spec: both signal weights are zero")
        if not self.noise > 0:
            raise SyntheticError(f"noise must be > 0, got {self.noise}")
        if len(self.vocab) != len(LEVELS):
            raise SyntheticError(
                f"vocab needs {len(LEVELS)} class templates, got {len(self.vocab)}")
        if any(len(tokens) == 0 for tokens in self.vocab):
            raise SyntheticError("every class template needs at least one token")
        for k in range(len(self.vocab)):
            for m in range(k + 1, len(self.vocab)):
                if set(self.vocab[k]) & set(self.vocab[m]):
                    raise SyntheticError(f"class templates {k} and {m} share tokens")


@dataclass(frozen=True)
class SyntheticResult:
    dataset: Dataset
    bayes_accuracy: dict[str, float]  # keyed by modality
    label_prior: float


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _posteriors(spec: SyntheticSpec) -> dict[tuple[float, float], float]:
    """P(y=1 | s_text, s_tab) on the level grid."""
    return {(s1, s2): _phi((spec.a * s1 + spec.b * s2) / spec.noise)
            for s1 in LEVELS for s2 in LEVELS}


def label_prior(spec: SyntheticSpec) -> float:
    """Closed-form P(y=1); exactly 0.5 for the symmetric level grid."""
    post = _posteriors(spec)
    return sum(post.values()) / len(post)


def bayes_accuracy(spec: SyntheticSpec, modality: str) -> float:
    """Best achievable accuracy for a predictor seeing the given modality."""
    if modality not in MODALITY_KEYS:
        raise SyntheticError(f"modality must be one of {MODALITY_KEYS}, got {modality!r}")
    post = _posteriors(spec)
    if modality == "Both":
        ps = list(post.values())
    elif modality == "X1":
        ps = [np.mean([post[(s1, s2)] for s2 in LEVELS]) for s1 in LEVELS]
    else:
        ps = [np.mean([post[(s1, s2)] for s1 in LEVELS]) for s2 in LEVELS]
    return float(np.mean([max(p, 1.0 - p) for p in ps]))


def generate_synthetic(spec: SyntheticSpec) -> SyntheticResult:
    """Draw the corpus; deterministic for a fixed spec."""
    rng = np.random.default_rng(spec.seed)
    n_classes = len(LEVELS)
    records = []
    for i in range(spec.n):
        c_text = int(rng.integers(n_classes))
        c_tab = int(rng.integers(n_classes))
        s_text, s_tab = LEVELS[c_text], LEVELS[c_tab]
        eps = float(rng.normal(0.0, spec.noise))
        y = 1 if spec.a * s_text + spec.b * s_tab + eps > 0 else 0

        tokens = spec.vocab[c_text]
        n_tokens = int(rng.integers(5, 13))
        text = "".join(tokens[int(j)] for j in rng.integers(0, len(tokens), size=n_tokens))

        features = rng.normal(0.0, 1.0, size=spec.j_in)
        features[0] = s_tab
        rating = int(rng.integers(6, 8)) if y == 1 else int(rng.integers(1, 6))
        records.append(Record(id=f"s{i:05d}", text=text,
                              features=tuple(features), rating=rating))

    schema = tuple(f"f{j}" for j in range(spec.j_in))
    dataset = Dataset(records=tuple(records), schema=schema)
    bayes = {m: bayes_accuracy(spec, m) for m in MODALITY_KEYS}
    return SyntheticResult(dataset=dataset, bayes_accuracy=bayes,
                           label_prior=label_prior(spec))
