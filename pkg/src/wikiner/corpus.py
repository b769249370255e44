"""Annotated-document model and column-format codecs.

Documents are tokenized sentences with two layers of entity spans: a
``main`` layer holding the six top-level categories and a ``sub`` layer
holding subcategories plus entities demoted from the main layer by
:func:`relocate_overlaps`.  The on-disk format is UTF-8, TAB-separated,
one token per line::

    surface TAB lemma TAB main-tag TAB sub-tag [TAB entity-id]

with a blank line closing each sentence and an optional ``# doc = <id>``
line opening a new document.  Tags are BIO (or BIOES) strings such as
``B-orgName``; a ``#derived`` suffix on the category marks derived
place names.  ``_`` stands for a missing lemma or entity id.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, TextIO

MAIN_CATEGORIES = ("persName", "orgName", "geogName", "placeName", "date", "time")

SUBCATEGORIES = {
    "persName": ("forename", "surname", "addName"),
    "placeName": ("bloc", "country", "region", "settlement", "district"),
}

# Deterministic precedence used to break ties (overlap relocation, label
# propagation): main categories first, then subcategories in listed order.
_ORDERED_LABELS = list(MAIN_CATEGORIES) + [s for subs in SUBCATEGORIES.values() for s in subs]
CATEGORY_RANK = {name: i for i, name in enumerate(_ORDERED_LABELS)}

_SUB_PARENT = {s: parent for parent, subs in SUBCATEGORIES.items() for s in subs}

MISSING = "_"


class CorpusError(ValueError):
    """Malformed corpus input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class BioError(CorpusError):
    """Ill-formed BIO/BIOES tag transition."""


@dataclass(frozen=True)
class EntityCategory:
    """Entity type: main category, optional subcategory, derived flag."""

    main: str
    sub: Optional[str] = None
    derived: bool = False

    def __post_init__(self):
        if self.main not in MAIN_CATEGORIES:
            raise ValueError(f"unknown main category {self.main!r}")
        if self.sub is not None and self.sub not in SUBCATEGORIES.get(self.main, ()):
            raise ValueError(f"{self.sub!r} is not a subcategory of {self.main!r}")
        if self.derived and self.main != "placeName":
            raise ValueError("derived flag is only valid for placeName")

    @property
    def label(self) -> str:
        """Tag label: the subcategory name when present, else the main one."""
        base = self.sub if self.sub is not None else self.main
        return base + "#derived" if self.derived else base

    @property
    def rank(self) -> int:
        return CATEGORY_RANK[self.sub if self.sub is not None else self.main]

    @classmethod
    def from_label(cls, label: str) -> "EntityCategory":
        derived = label.endswith("#derived")
        if derived:
            label = label[: -len("#derived")]
        if label in MAIN_CATEGORIES:
            return cls(label, derived=derived)
        if label in _SUB_PARENT:
            return cls(_SUB_PARENT[label], sub=label, derived=derived)
        raise ValueError(f"unknown category label {label!r}")


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: Optional[str] = None
    index: int = 0

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")

    @property
    def match_lemma(self) -> str:
        """Lowercased lemma, falling back to the lowercased surface."""
        return (self.lemma if self.lemma is not None else self.surface).lower()


@dataclass(frozen=True)
class EntitySpan:
    """Half-open token span [start, end) carrying one entity category."""

    start: int
    end: int
    category: EntityCategory
    layer: str = "main"
    entity_id: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span bounds [{self.start}, {self.end})")
        if self.layer not in ("main", "sub"):
            raise ValueError(f"unknown layer {self.layer!r}")

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start < other.end and other.start < self.end

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class Sentence:
    tokens: list[Token]
    spans: list[EntitySpan] = field(default_factory=list)

    def __post_init__(self):
        self.tokens = [replace(t, index=i) for i, t in enumerate(self.tokens)]
        for s in self.spans:
            if s.end > len(self.tokens):
                raise ValueError(f"span [{s.start},{s.end}) exceeds sentence length {len(self.tokens)}")
        self.spans = sorted(self.spans, key=_span_sort_key)

    def layer(self, name: str) -> list[EntitySpan]:
        return [s for s in self.spans if s.layer == name]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


@dataclass
class Document:
    sentences: list[Sentence]
    doc_id: str = "doc0"


# ---------------------------------------------------------------------------
# BIO / BIOES codecs
# ---------------------------------------------------------------------------

def bio_encode(spans: Iterable[EntitySpan], length: int, scheme: str = "BIO") -> list[str]:
    """Encode non-overlapping spans of one layer into per-token tags."""
    if scheme not in ("BIO", "BIOES"):
        raise ValueError(f"unknown scheme {scheme!r}")
    ordered = sorted(spans, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise ValueError(f"overlapping spans [{a.start},{a.end}) and [{b.start},{b.end})")
    tags = ["O"] * length
    for s in ordered:
        if s.end > length:
            raise ValueError(f"span [{s.start},{s.end}) exceeds length {length}")
        label = s.category.label
        if scheme == "BIOES" and s.length == 1:
            tags[s.start] = f"S-{label}"
            continue
        tags[s.start] = f"B-{label}"
        for i in range(s.start + 1, s.end):
            tags[i] = f"I-{label}"
        if scheme == "BIOES":
            tags[s.end - 1] = f"E-{label}"
    return tags


def bio_decode(
    tags: Iterable[str],
    layer: str = "main",
    strict: bool = True,
) -> list[EntitySpan]:
    """Decode BIO/BIOES tags into spans.

    In strict mode an ``I-x``/``E-x`` with no open ``x`` entity raises
    :class:`BioError` (the offending 0-based position is in ``.line``);
    otherwise it is repaired into ``B-x`` per the usual CoNLL convention.
    """
    tags = list(tags)
    spans: list[EntitySpan] = []
    start: Optional[int] = None
    open_label: Optional[str] = None

    def close(end: int):
        nonlocal start, open_label
        if start is not None and open_label is not None:
            spans.append(EntitySpan(start, end, EntityCategory.from_label(open_label), layer=layer))
        start, open_label = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
            continue
        if "-" not in tag:
            raise BioError(f"malformed tag {tag!r}", line=i)
        prefix, label = tag.split("-", 1)
        EntityCategory.from_label(label)  # validate early
        if prefix in ("B", "S"):
            close(i)
            start, open_label = i, label
            if prefix == "S":
                close(i + 1)
        elif prefix in ("I", "E"):
            if open_label != label:
                if strict:
                    raise BioError(f"{tag!r} continues no open {label!r} entity", line=i)
                close(i)
                start, open_label = i, label
            if prefix == "E":
                close(i + 1)
        else:
            raise BioError(f"unknown tag prefix in {tag!r}", line=i)
    close(len(tags))
    return spans


# ---------------------------------------------------------------------------
# Column format
# ---------------------------------------------------------------------------

def parse_corpus(stream: Iterable[str] | TextIO, strict: bool = True) -> list[Document]:
    """Parse the TAB-separated column format into documents.

    Malformed lines (missing columns, bad BIO transitions) raise
    :class:`CorpusError` with the 1-based input line number.
    """
    docs: list[Document] = []
    cur_doc: Optional[Document] = None
    rows: list[tuple[str, Optional[str], str, str, Optional[str]]] = []
    sent_first_line = 0

    def doc() -> Document:
        nonlocal cur_doc
        if cur_doc is None:
            cur_doc = Document(sentences=[], doc_id=f"doc{len(docs)}")
            docs.append(cur_doc)
        return cur_doc

    def flush_sentence():
        nonlocal rows
        if not rows:
            return
        tokens = [Token(surface, lemma) for surface, lemma, _, _, _ in rows]
        spans: list[EntitySpan] = []
        for layer, col in (("main", 2), ("sub", 3)):
            try:
                decoded = bio_decode([r[col] for r in rows], layer=layer, strict=strict)
            except BioError as e:
                raise BioError(str(e).split(": ", 1)[-1], line=sent_first_line + (e.line or 0)) from None
            if layer == "main":
                ids = [r[4] for r in rows]
                decoded = [replace(s, entity_id=ids[s.start]) for s in decoded]
            spans.extend(decoded)
        doc().sentences.append(Sentence(tokens, spans))
        rows = []

    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if line.startswith("# doc"):
            flush_sentence()
            cur_doc = None
            doc_id = line.split("=", 1)[1].strip() if "=" in line else f"doc{len(docs)}"
            cur_doc = Document(sentences=[], doc_id=doc_id)
            docs.append(cur_doc)
            continue
        if not line.strip():
            flush_sentence()
            continue
        cols = line.split("\t")
        if len(cols) < 4:
            raise CorpusError(f"expected at least 4 TAB-separated columns, got {len(cols)}", line=lineno)
        if not rows:
            sent_first_line = lineno
        surface, lemma, main_tag, sub_tag = cols[0], cols[1], cols[2], cols[3]
        ent_id = cols[4] if len(cols) > 4 and cols[4] != MISSING else None
        rows.append((surface, None if lemma == MISSING else lemma, main_tag, sub_tag, ent_id))
    flush_sentence()
    return docs


def write_corpus(docs: Iterable[Document], stream: TextIO) -> None:
    """Serialize documents in the exact format :func:`parse_corpus` reads."""
    docs = list(docs)
    for doc in docs:
        stream.write(f"# doc = {doc.doc_id}\n")
        for sent in doc.sentences:
            n = len(sent.tokens)
            main_tags = bio_encode(sent.layer("main"), n)
            sub_tags = bio_encode(sent.layer("sub"), n)
            ids = [MISSING] * n
            with_ids = False
            for s in sent.layer("main"):
                if s.entity_id is not None:
                    with_ids = True
                    for i in range(s.start, s.end):
                        ids[i] = s.entity_id
            for i, tok in enumerate(sent.tokens):
                cols = [tok.surface, tok.lemma if tok.lemma is not None else MISSING,
                        main_tags[i], sub_tags[i]]
                if with_ids:
                    cols.append(ids[i])
                stream.write("\t".join(cols) + "\n")
            stream.write("\n")


def iter_sentences(docs: Iterable[Document]) -> Iterator[Sentence]:
    for doc in docs:
        yield from doc.sentences


# ---------------------------------------------------------------------------
# Span transformations
# ---------------------------------------------------------------------------

def normalize_fragmented(doc: Document) -> Document:
    """Resolve discontinuous entities marked by a shared entity id.

    Fragments separated by exactly one token are merged into a single
    continuous span covering the gap word; wider gaps leave independent
    spans.  Only same-category fragments merge.  Ids are dropped, so the
    transformation is idempotent.
    """
    out_sents = []
    for sent in doc.sentences:
        kept = [replace(s, entity_id=None) for s in sent.spans if s.entity_id is None]
        groups: dict[str, list[EntitySpan]] = {}
        for s in sent.spans:
            if s.entity_id is not None:
                groups.setdefault(s.entity_id, []).append(s)
        for frags in groups.values():
            frags.sort(key=lambda s: s.start)
            cur = frags[0]
            for nxt in frags[1:]:
                gap = nxt.start - cur.end
                if gap <= 1 and nxt.category == cur.category:
                    cur = replace(cur, end=nxt.end)
                else:
                    kept.append(replace(cur, entity_id=None))
                    cur = nxt
            kept.append(replace(cur, entity_id=None))
        out_sents.append(Sentence(sent.tokens, sorted(kept, key=_span_sort_key)))
    return Document(out_sents, doc_id=doc.doc_id)


def _span_sort_key(s: EntitySpan):
    return (s.layer, s.start, s.end, s.category.rank)


def _priority(s: EntitySpan):
    # Longest first, then leftmost, then the fixed category order.
    return (-s.length, s.start, s.category.rank)


def _select_nonoverlapping(spans: list[EntitySpan]) -> tuple[list[EntitySpan], list[EntitySpan]]:
    kept: list[EntitySpan] = []
    losers: list[EntitySpan] = []
    for s in sorted(spans, key=_priority):
        if any(s.overlaps(k) for k in kept):
            losers.append(s)
        else:
            kept.append(s)
    return kept, losers


def relocate_overlaps(doc: Document) -> Document:
    """Demote overlapping main-layer spans so each layer is overlap-free.

    Per overlap group the longest span (leftmost, then category order, on
    ties) keeps the main layer; the others join the sub layer.  Spans that
    still collide inside the sub layer are dropped — there is no third
    layer to hold them.
    """
    out_sents = []
    for sent in doc.sentences:
        main_kept, demoted = _select_nonoverlapping(sent.layer("main"))
        sub_candidates = sent.layer("sub") + [replace(s, layer="sub") for s in demoted]
        sub_kept, _dropped = _select_nonoverlapping(sub_candidates)
        out_sents.append(Sentence(sent.tokens, sorted(main_kept + sub_kept, key=_span_sort_key)))
    return Document(out_sents, doc_id=doc.doc_id)


class DerivedLexicon:
    """Lexicon of inhabitant names and relational adjectives.

    File format: ``form TAB lemma-of-place TAB {inhabitant|adjective}``.
    """

    def __init__(self, entries: dict[str, tuple[str, str]] | None = None):
        self.entries = {k.lower(): v for k, v in (entries or {}).items()}

    @classmethod
    def load(cls, stream: Iterable[str]) -> "DerivedLexicon":
        entries = {}
        for lineno, raw in enumerate(stream, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3 or cols[2] not in ("inhabitant", "adjective"):
                raise CorpusError("expected `form TAB place-lemma TAB inhabitant|adjective`", line=lineno)
            entries[cols[0]] = (cols[1], cols[2])
        return cls(entries)

    def lookup(self, lemma: str) -> Optional[tuple[str, str]]:
        return self.entries.get(lemma.lower())


def mark_derived(doc: Document, lexicon: DerivedLexicon) -> Document:
    """Flag place names derived from a location (inhabitants, adjectives).

    Single tokens whose lemma is in the lexicon either flag their existing
    single-token main placeName span as derived or, when uncovered by any
    main span, gain a fresh derived placeName span.  Pure post-processing.
    """
    derived_cat = EntityCategory("placeName", derived=True)
    out_sents = []
    for sent in doc.sentences:
        spans = list(sent.spans)
        covered = [False] * len(sent.tokens)
        for s in spans:
            if s.layer == "main":
                for i in range(s.start, s.end):
                    covered[i] = True
        for tok in sent.tokens:
            if lexicon.lookup(tok.match_lemma) is None:
                continue
            hit = next((s for s in spans
                        if s.layer == "main" and s.start == tok.index and s.end == tok.index + 1
                        and s.category.main == "placeName"), None)
            if hit is not None:
                spans[spans.index(hit)] = replace(hit, category=replace(hit.category, derived=True))
            elif not covered[tok.index]:
                spans.append(EntitySpan(tok.index, tok.index + 1, derived_cat))
                covered[tok.index] = True
        out_sents.append(Sentence(sent.tokens, sorted(spans, key=_span_sort_key)))
    return Document(out_sents, doc_id=doc.doc_id)
