"""Word and character n-gram token sequences over instruction text."""

from __future__ import annotations

import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)

WORD = "word"

#: Pretokenized input with no separator at all is suspicious beyond this many
#: codepoints; it is returned as a single token with a warning.
LONGEST_TOKEN_BOUND = 64


@dataclass(frozen=True)
class TokenSeq:
    """An ordered token sequence at a fixed granularity ("word" or "gramN")."""

    tokens: tuple[str, ...]
    granularity: str

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def gram_granularity(n: int) -> str:
    return f"gram{n}"


def char_ngrams(text: str, n: int) -> TokenSeq:
    """All overlapping codepoint n-grams of ``text``, in order.

    Text shorter than ``n`` but non-empty becomes a single whole-text token so
    no document ever maps to an empty sequence. No boundary padding is added.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not text:
        return TokenSeq((), gram_granularity(n))
    if len(text) < n:
        return TokenSeq((text,), gram_granularity(n))
    grams = tuple(text[i:i + n] for i in range(len(text) - n + 1))
    return TokenSeq(grams, gram_granularity(n))


def word_tokens(text: str, segmenter: str = "whitespace", separator: str = "/") -> TokenSeq:
    """Split ``text`` into word tokens.

    segmenter "whitespace" splits on Unicode whitespace runs; "pretokenized"
    splits on ``separator`` exactly (for corpora segmented upstream by a
    morphological analyzer).
    """
    if segmenter == "whitespace":
        return TokenSeq(tuple(text.split()), WORD)
    if segmenter == "pretokenized":
        if separator not in text and len(text) > LONGEST_TOKEN_BOUND:
            logger.warning(
                "pretokenized input of %d codepoints contains no %r separator; "
                "returning it as a single token", len(text), separator,
            )
        pieces = tuple(piece for piece in text.split(separator) if piece)
        return TokenSeq(pieces, WORD)
    raise ValueError(f"unknown segmenter {segmenter!r}")


def pretokenized(tokens: list[str] | tuple[str, ...]) -> TokenSeq:
    """Wrap an already-segmented token list (e.g. from a corpus file)."""
    return TokenSeq(tuple(tokens), WORD)
