"""Review-text cleaning and token-length capping.

Survey review text arrives with line breaks, emoji and kaomoji that the
text encoder should never see.  Cleaning works on maximal runs of such
"removable" characters: a run that closes the text (only plain whitespace
between it and the end of the string) is replaced by a single sentence
period, any other run is deleted outright.  Runs of consecutive sentence
periods then collapse to one.  The pass repeats until the string is
stable, so ``clean_text`` is idempotent by construction.

The removable character set is an explicit approximation: the major emoji
code blocks, line separators, and parenthesised ASCII-art faces (paren
pairs whose content contains no letters).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

MAX_TOKEN_CAP = 512

# Line separators (removed or turned into a period, never kept).
_LINE_BREAKS = frozenset("\n\r\v\f\x85\u2028\u2029")

# Emoji / pictograph code blocks treated as removable.
_EMOJI_RANGES = (
    (0x1F300, 0x1F5FF),  # symbols and pictographs
    (0x1F600, 0x1F64F),  # emoticons
    (0x1F680, 0x1F6FF),  # transport and map symbols
    (0x1F900, 0x1F9FF),  # supplemental symbols and pictographs
    (0x2700, 0x27BF),   # dingbats
)

# Candidate kaomoji: an ASCII or full-width paren pair with no nested
# parens.  A candidate is removable only if its content is non-empty and
# letter-free, so "(笑)" and "(great)" survive while "(^_^)" does not.
_KAOMOJI_RE = re.compile(r"[(（]([^()（）]*)[)）]")


@dataclass(frozen=True)
class PreprocessConfig:
    """Cleaning and capping knobs.

    ``sentence_end_punct`` is the ordered set of characters treated as a
    sentence period; the first entry is what a sentence-closing removable
    run is replaced with.  Defaults target Japanese review text.
    """

    len_max: int = 200
    sentence_end_punct: tuple[str, ...] = ("。", ".")

    def __post_init__(self) -> None:
        if not (1 <= self.len_max <= MAX_TOKEN_CAP):
            raise ValueError(
                f"len_max must be in 1..{MAX_TOKEN_CAP}, got {self.len_max}"
            )
        if not self.sentence_end_punct:
            raise ValueError("sentence_end_punct must not be empty")
        for ch in self.sentence_end_punct:
            if len(ch) != 1:
                raise ValueError(f"sentence punctuation must be single chars, got {ch!r}")

    @property
    def period(self) -> str:
        return self.sentence_end_punct[0]


def _is_removable_char(ch: str) -> bool:
    if ch in _LINE_BREAKS:
        return True
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def _removable_mask(text: str) -> list[bool]:
    mask = [_is_removable_char(ch) for ch in text]
    for m in _KAOMOJI_RE.finditer(text):
        content = m.group(1)
        if content and not any(c.isalpha() for c in content):
            for i in range(m.start(), m.end()):
                mask[i] = True
    return mask


def is_sentence_end(text: str, position: int, cfg: PreprocessConfig | None = None) -> bool:
    """Whether the removable run containing ``position`` closes the text.

    Decision rule: expand to the maximal removable run around the
    position, then skip forward over plain whitespace; the run is a
    sentence end iff that lands on end-of-string.  A run directly
    followed by a period is *not* a sentence end: replacing it would
    only add a period that the merge step folds away, so removal gives
    the same cleaned text.
    """
    del cfg  # rule is configuration-independent
    mask = _removable_mask(text)
    if not (0 <= position < len(text)) or not mask[position]:
        raise ValueError(f"position {position} does not index a removable character")
    j = position + 1
    while j < len(text) and mask[j]:
        j += 1
    while j < len(text) and text[j].isspace():
        j += 1
    return j == len(text)


def _clean_pass(text: str, cfg: PreprocessConfig) -> str:
    mask = _removable_mask(text)
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        if not mask[i]:
            out.append(text[i])
            i += 1
            continue
        j = i
        while j < n and mask[j]:
            j += 1
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k == n:
            out.append(cfg.period)
        i = j
    # Collapse runs of sentence periods, keeping the first of each run.
    periods = set(cfg.sentence_end_punct)
    merged: list[str] = []
    prev_period = False
    for ch in out:
        if ch in periods:
            if prev_period:
                continue
            prev_period = True
        else:
            prev_period = False
        merged.append(ch)
    return "".join(merged)


def clean_text(raw: str, cfg: PreprocessConfig | None = None) -> str:
    """Clean one review string; idempotent for any unicode input.

    Repeats the removal/replacement pass until stable: deleting a run can
    butt characters together into a new kaomoji candidate, and each pass
    strictly reduces the number of removable characters, so the loop
    terminates.
    """
    cfg = cfg or PreprocessConfig()
    current = raw
    while True:
        cleaned = _clean_pass(current, cfg)
        if cleaned == current:
            return current
        current = cleaned


def cap_tokens(token_ids: list[int], cfg: PreprocessConfig | None = None) -> list[int]:
    """Truncate a token-id sequence to the configured cap, keeping the prefix."""
    cfg = cfg or PreprocessConfig()
    return list(token_ids[: cfg.len_max])
