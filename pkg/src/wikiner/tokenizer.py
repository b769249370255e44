"""Fallback tokenization: Unicode word/punctuation splitting.

Stands in for a proper language-specific tokenizer; the lemma defaults
to the lowercased surface so lemma-keyed resources stay usable.
"""

from __future__ import annotations

import re

from .corpus import Token

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_SENT_RE = re.compile(r"(?<=[.!?])\s+(?=[^\s])", re.UNICODE)


def tokenize_text(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def make_tokens(words: list[str]) -> list[Token]:
    return [Token(w, lemma=w.lower(), index=i) for i, w in enumerate(words)]


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENT_RE.split(text.strip()) if s]


def tokenize(text: str) -> list[list[Token]]:
    """Sentence-split and tokenize raw text into Token lists."""
    return [make_tokens(tokenize_text(s)) for s in split_sentences(text) if tokenize_text(s)]
