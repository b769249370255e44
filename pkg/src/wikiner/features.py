"""One-hot feature extractors: casing classes and gazetteer matchers.

Every extractor assigns at most one label per token; labels are encoded
as one-hot vectors with a trailing reserved slot for "no label", so the
absence of a match is itself a learnable signal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .corpus import Token

logger = logging.getLogger(__name__)

CAPITALIZATION_CLASSES = (
    "numeric",
    "mostly_numeric",
    "upper",
    "lower",
    "title",
    "contains_digit",
    "mixed",
    "other",
)


def capitalization_class(surface: str) -> str:
    """Classify the casing of a token into one of eight classes.

    Rules are tried in the order of ``CAPITALIZATION_CLASSES`` and the
    first match wins: all digits; more than half digits; all letters
    upper; all letters lower; only the initial character upper; contains
    a digit; mix of upper and lower without digits; anything else.
    """
    if not surface:
        raise ValueError("surface must be non-empty")
    n_digit = sum(c.isdigit() for c in surface)
    letters = [c for c in surface if c.isalpha()]
    if n_digit == len(surface):
        return "numeric"
    if n_digit * 2 > len(surface):
        return "mostly_numeric"
    if letters and all(c.isupper() for c in letters):
        return "upper"
    if letters and all(c.islower() for c in letters):
        return "lower"
    if surface[0].isupper() and not any(c.isupper() for c in surface[1:]):
        return "title"
    if n_digit > 0:
        return "contains_digit"
    if any(c.isupper() for c in surface) and any(c.islower() for c in surface):
        return "mixed"
    return "other"


class _TrieNode:
    __slots__ = ("children", "label")

    def __init__(self):
        self.children: dict[str, _TrieNode] = {}
        self.label: Optional[str] = None


class Gazetteer:
    """Multiword dictionary with greedy longest-match lookup over tokens.

    Keys are token sequences matched against lemmas (lowercased) or raw
    surfaces depending on ``mode``.  Built once, then immutable; matching
    is safe from any thread.
    """

    def __init__(self, name: str, mode: str = "lemma"):
        if mode not in ("lemma", "surface"):
            raise ValueError(f"unknown matching mode {mode!r}")
        self.name = name
        self.mode = mode
        self._root = _TrieNode()
        self._labels: set[str] = set()

    def _key(self, words: Sequence[str]) -> list[str]:
        return [w.lower() for w in words] if self.mode == "lemma" else list(words)

    def add(self, key_tokens: Sequence[str], label: str) -> None:
        if not key_tokens:
            raise ValueError("gazetteer keys must be non-empty")
        node = self._root
        for word in self._key(key_tokens):
            node = node.children.setdefault(word, _TrieNode())
        if node.label is not None and node.label != label:
            logger.warning("gazetteer %s: duplicate key %r keeps label %r, ignoring %r",
                           self.name, " ".join(key_tokens), node.label, label)
            return
        node.label = label
        self._labels.add(label)

    @property
    def labels(self) -> list[str]:
        return sorted(self._labels)

    def longest_match(self, words: Sequence[str], start: int) -> Optional[tuple[int, str]]:
        """Longest key starting at ``start``; returns (end, label) or None."""
        node = self._root
        best: Optional[tuple[int, str]] = None
        for i in range(start, len(words)):
            node = node.children.get(words[i])
            if node is None:
                break
            if node.label is not None:
                best = (i + 1, node.label)
        return best

    def match(self, sentence: Sequence[Token]) -> list[Optional[str]]:
        """Greedy left-to-right longest match; one label (or None) per token."""
        words = self._key([t.match_lemma if self.mode == "lemma" else t.surface
                           for t in sentence])
        labels: list[Optional[str]] = [None] * len(words)
        i = 0
        while i < len(words):
            hit = self.longest_match(words, i)
            if hit is None:
                i += 1
                continue
            end, label = hit
            for j in range(i, end):
                labels[j] = label
            i = end
        return labels


def gazetteer_build(entries: Iterable[tuple[Sequence[str], str]], mode: str = "lemma",
                    name: str = "gazetteer") -> Gazetteer:
    gaz = Gazetteer(name, mode=mode)
    for key_tokens, label in entries:
        gaz.add(key_tokens, label)
    return gaz


def gazetteer_load(stream: Iterable[str], mode: str = "lemma", name: str = "gazetteer") -> Gazetteer:
    """Load `key tokens TAB label` lines (UTF-8, keys space-separated)."""
    gaz = Gazetteer(name, mode=mode)
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected `key tokens TAB label`")
        gaz.add(parts[0].split(), parts[1])
    return gaz


@dataclass(frozen=True)
class OneHotVector:
    """One active position over an ordered vocabulary plus a reserved slot."""

    source: str
    vocabulary: tuple[str, ...]
    active: int

    @property
    def dimension(self) -> int:
        return len(self.vocabulary) + 1

    def to_array(self) -> list[float]:
        vec = [0.0] * self.dimension
        vec[self.active] = 1.0
        return vec


def encode_onehot(label: Optional[str], vocabulary: Sequence[str], source: str = "") -> OneHotVector:
    """Encode a label over a fixed vocabulary; None/unknown hit the reserved slot."""
    vocab = tuple(vocabulary)
    try:
        active = vocab.index(label) if label is not None else len(vocab)
    except ValueError:
        active = len(vocab)
    return OneHotVector(source=source, vocabulary=vocab, active=active)
