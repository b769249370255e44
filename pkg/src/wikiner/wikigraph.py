"""Wiki dump ingestion, anchor/inlink statistics and label propagation.

The intermediate format is JSONL, one page per line::

    {"id": 1, "title": "Warsaw", "ns": 0, "redirect": null,
     "categories": ["Cities"], "links": [{"target": "Vistula", "anchor": "the river"}],
     "text": "plain text ..."}

``ns`` 0 is an article, 14 a category.  ``text`` is optional and only
used to count label occurrences; without it a label's occurrence count
falls back to its link count.  :func:`import_xml_dump` converts a
MediaWiki XML export into this format by extracting ``[[target|anchor]]``
links and category memberships (no template expansion).

Label propagation walks the category hierarchy: each unseeded node takes
the seed label reachable over the shortest parent path; among equally
short paths the label occurring on the most paths wins, and remaining
ties go to the fixed category order.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

from . import storage
from .corpus import MAIN_CATEGORIES
from .tokenizer import tokenize_text

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"WNSNAP\x00\x01"
SNAPSHOT_VERSION = 1

NONE_LABEL = "none"
SEED_LABELS = MAIN_CATEGORIES + (NONE_LABEL,)

# Tie-break order for propagation: NE categories first, "none" last.
_LABEL_RANK = {name: i for i, name in enumerate(SEED_LABELS)}


class GraphError(ValueError):
    pass


@dataclass
class WikiNode:
    id: int
    title: str
    kind: str  # "article" | "category"
    parents: set[int] = field(default_factory=set)


@dataclass
class WikiGraph:
    nodes: dict[int, WikiNode] = field(default_factory=dict)
    _children: Optional[dict[int, list[int]]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._by_title = {(n.kind, n.title): n.id for n in self.nodes.values()}

    def add(self, node: WikiNode) -> None:
        self.nodes[node.id] = node
        self._by_title[(node.kind, node.title)] = node.id
        self._children = None

    def find(self, title: str, kind: str) -> Optional[int]:
        return self._by_title.get((kind, title))

    def children(self, node_id: int) -> list[int]:
        if self._children is None:
            table: dict[int, list[int]] = defaultdict(list)
            for node in self.nodes.values():
                for p in node.parents:
                    table[p].append(node.id)
            for ids in table.values():
                ids.sort()
            self._children = dict(table)
        return self._children.get(node_id, [])

    def articles(self) -> Iterator[WikiNode]:
        return (n for n in self.nodes.values() if n.kind == "article")

    def search(self, query: str, limit: int = 50) -> list[WikiNode]:
        """Title matches, prefix hits first, then substring, both case-blind."""
        q = query.lower()
        prefix, inner = [], []
        for node in self.nodes.values():
            title = node.title.lower()
            if title.startswith(q):
                prefix.append(node)
            elif q in title:
                inner.append(node)
        ranked = sorted(prefix, key=lambda n: (n.title, n.id)) + sorted(inner, key=lambda n: (n.title, n.id))
        return ranked[:limit]


@dataclass
class AnchorEntry:
    occurrences: int = 0
    links: int = 0
    senses: dict[int, int] = field(default_factory=dict)


class AnchorStatistics:
    """Per-label corpus counts: occurrences, link uses, per-concept senses."""

    def __init__(self):
        self.entries: dict[str, AnchorEntry] = {}

    def entry(self, label: str) -> AnchorEntry:
        if label not in self.entries:
            self.entries[label] = AnchorEntry()
        return self.entries[label]

    def get(self, label: str) -> Optional[AnchorEntry]:
        return self.entries.get(label)

    def labels(self) -> Iterable[str]:
        return self.entries.keys()

    def validate(self) -> None:
        for label, e in self.entries.items():
            if sum(e.senses.values()) != e.links:
                raise GraphError(f"label {label!r}: sense counts do not sum to link count")
            if e.occurrences < e.links:
                raise GraphError(f"label {label!r}: occurrences < links")


class InlinkIndex:
    """Per-concept sets of linking articles plus the total article count."""

    def __init__(self, total_articles: int = 0):
        self.inlinks: dict[int, set[int]] = {}
        self.total_articles = total_articles

    def add(self, concept: int, source: int) -> None:
        self.inlinks.setdefault(concept, set()).add(source)

    def get(self, concept: int) -> set[int]:
        return self.inlinks.get(concept, set())


@dataclass(frozen=True)
class Resolution:
    """Resolved label with provenance for one node."""

    label: Optional[str]
    provenance: str  # "seed" | "inherited"
    distance: int
    path_count: int = 1
    competitors: dict = field(default_factory=dict)  # label -> shortest-path count


@dataclass
class Labeling:
    seeds: dict[int, str] = field(default_factory=dict)
    resolved: dict[int, Resolution] = field(default_factory=dict)
    stale: bool = True

    def resolved_label(self, node_id: int) -> Optional[str]:
        res = self.resolved.get(node_id)
        return res.label if res is not None else None


@dataclass
class ImportReport:
    pages: int = 0
    articles: int = 0
    categories: int = 0
    redirects: int = 0
    dropped_links: int = 0
    dangling_parents: int = 0
    duplicate_titles: int = 0


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _resolve_redirects(title: str, redirect_map: dict[str, str], limit: int = 16) -> Optional[str]:
    seen = set()
    while title in redirect_map:
        if title in seen or len(seen) >= limit:
            return None
        seen.add(title)
        title = redirect_map[title]
    return title


def import_dump(records: Iterable[dict | str]) -> tuple[WikiGraph, AnchorStatistics, InlinkIndex, ImportReport]:
    """Build the graph, anchor statistics and inlink index from JSONL records.

    Redirects are collapsed onto their targets before any counting;
    unresolvable link targets and dangling parent categories are dropped
    with counters in the report.
    """
    pages = [json.loads(r) if isinstance(r, str) else r for r in records]
    report = ImportReport(pages=len(pages))

    redirect_map: dict[str, str] = {}
    by_title: dict[tuple[int, str], dict] = {}
    for page in pages:
        ns = page.get("ns", 0)
        key = (ns, page["title"])
        if key in by_title:
            report.duplicate_titles += 1
        by_title[key] = page  # duplicates: last wins
    if report.duplicate_titles:
        logger.warning("dump contains %d duplicated titles; last occurrence wins", report.duplicate_titles)
    article_pages: list[dict] = []
    category_pages: list[dict] = []
    for (ns, _title), page in by_title.items():
        if page.get("redirect"):
            redirect_map[page["title"]] = page["redirect"]
            report.redirects += 1
        elif ns == 0:
            article_pages.append(page)
        elif ns == 14:
            category_pages.append(page)

    graph = WikiGraph()
    for page in article_pages:
        graph.add(WikiNode(page["id"], page["title"], "article"))
    for page in category_pages:
        graph.add(WikiNode(page["id"], page["title"], "category"))
    report.articles = sum(1 for n in graph.nodes.values() if n.kind == "article")
    report.categories = len(graph.nodes) - report.articles

    # Parent edges: membership in categories, for articles and categories alike.
    for page in article_pages + category_pages:
        node_id = graph.find(page["title"], "article" if page.get("ns", 0) == 0 else "category")
        node = graph.nodes[node_id]
        for cat_title in page.get("categories", []):
            cid = graph.find(cat_title, "category")
            if cid is None:
                report.dangling_parents += 1
            else:
                node.parents.add(cid)

    stats = AnchorStatistics()
    index = InlinkIndex(total_articles=report.articles)
    for page in article_pages:
        source_id = graph.find(page["title"], "article")
        for link in page.get("links", []):
            target = _resolve_redirects(link["target"], redirect_map)
            cid = graph.find(target, "article") if target is not None else None
            if cid is None:
                report.dropped_links += 1
                continue
            anchor = link.get("anchor") or link["target"]
            entry = stats.entry(anchor)
            entry.links += 1
            entry.senses[cid] = entry.senses.get(cid, 0) + 1
            index.add(cid, source_id)

    _count_occurrences(stats, article_pages)
    stats.validate()
    return graph, stats, index, report


def _count_occurrences(stats: AnchorStatistics, article_pages: list[dict]) -> None:
    """Scan article text for anchor occurrences (greedy longest match)."""
    from .features import Gazetteer  # local import: features does not need wikigraph

    trie = Gazetteer("anchors", mode="surface")
    for label in stats.labels():
        words = tuple(tokenize_text(label))
        if words:
            trie.add(words, label)
    key_by_tokens = {tuple(tokenize_text(label)): label for label in stats.labels()}

    counts: dict[str, int] = defaultdict(int)
    for page in article_pages:
        text = page.get("text")
        if not text:
            continue
        words = tokenize_text(text)
        i = 0
        while i < len(words):
            hit = trie.longest_match(words, i)
            if hit is None:
                i += 1
                continue
            end, _ = hit
            label = key_by_tokens.get(tuple(words[i:end]))
            if label is not None:
                counts[label] += 1
            i = end
    for label, entry in stats.entries.items():
        entry.occurrences = max(counts.get(label, 0), entry.links)


_LINK_RE = re.compile(r"\[\[([^\[\]\|]+)(?:\|([^\[\]]*))?\]\]")
_TEMPLATE_RE = re.compile(r"\{\{[^{}]*\}\}")
_QUOTES_RE = re.compile(r"'{2,}")


def parse_wikitext(text: str) -> tuple[list[dict], list[str], str]:
    """Extract links, category memberships and plain text from wiki markup.

    Link-extraction only: templates are removed, not expanded.  Returns
    (links, categories, plain_text); category links do not appear in the
    plain text.
    """
    for _ in range(3):  # peel nested templates
        text, n = _TEMPLATE_RE.subn("", text)
        if not n:
            break
    links: list[dict] = []
    categories: list[str] = []

    def repl(m: re.Match) -> str:
        target = m.group(1).strip()
        anchor = m.group(2)
        if target.lower().startswith("category:"):
            categories.append(target.split(":", 1)[1].strip())
            return ""
        if ":" in target:  # files, interwiki, other namespaces
            return anchor or ""
        shown = anchor if anchor is not None and anchor != "" else target
        links.append({"target": target, "anchor": shown})
        return shown

    plain = _LINK_RE.sub(repl, text)
    plain = _QUOTES_RE.sub("", plain)
    return links, categories, plain


def import_xml_dump(stream: IO[bytes] | IO[str]) -> Iterator[dict]:
    """Convert a MediaWiki XML export into JSONL page records."""
    ns_strip = re.compile(r"^\{.*\}")
    for _event, elem in ET.iterparse(stream, events=("end",)):
        tag = ns_strip.sub("", elem.tag)
        if tag != "page":
            continue
        fields: dict[str, ET.Element] = {}
        for child in elem.iter():
            fields.setdefault(ns_strip.sub("", child.tag), child)  # first wins: page id, not revision id
        title = fields["title"].text or ""
        ns = int(fields["ns"].text or 0)
        page_id = int(fields["id"].text or 0)
        redirect_el = fields.get("redirect")
        text = fields["text"].text or "" if "text" in fields else ""
        if ns == 14 and ":" in title:
            title = title.split(":", 1)[1]
        record: dict = {"id": page_id, "title": title, "ns": ns}
        if redirect_el is not None:
            target = redirect_el.get("title", "")
            if ns == 14 and ":" in target:
                target = target.split(":", 1)[1]
            record["redirect"] = target
        else:
            links, categories, plain = parse_wikitext(text)
            record["links"] = links
            record["categories"] = categories
            record["text"] = plain
        elem.clear()
        yield record


# ---------------------------------------------------------------------------
# Seeds and propagation
# ---------------------------------------------------------------------------

def set_seed_label(labeling: Labeling, graph: WikiGraph, node_id: int,
                   label: Optional[str]) -> Labeling:
    """Assign or clear a seed; resolved labels become stale until re-propagated."""
    if node_id not in graph.nodes:
        raise GraphError(f"unknown node id {node_id}")
    if label is None:
        labeling.seeds.pop(node_id, None)
    else:
        if label not in SEED_LABELS:
            raise GraphError(f"unknown seed label {label!r}")
        labeling.seeds[node_id] = label
    labeling.stale = True
    return labeling


def propagate_labels(graph: WikiGraph, seeds: dict[int, str]) -> Labeling:
    """Resolve every node reachable from the seed set.

    Multi-source BFS downward through child edges with shortest-path
    counting; paths terminate at seeded nodes, so a seed shadows anything
    above it.  Deterministic: label frequency among shortest paths breaks
    distance ties, the fixed category order breaks frequency ties.
    """
    for node_id, label in seeds.items():
        if node_id not in graph.nodes:
            raise GraphError(f"seed on unknown node id {node_id}")
        if label not in SEED_LABELS:
            raise GraphError(f"unknown seed label {label!r}")

    labeling = Labeling(seeds=dict(seeds), stale=False)
    dist: dict[int, int] = {}
    counts: dict[int, dict[str, int]] = {}
    for node_id, label in seeds.items():
        dist[node_id] = 0
        counts[node_id] = {label: 1}
        labeling.resolved[node_id] = Resolution(
            label=None if label == NONE_LABEL else label,
            provenance="seed", distance=0, path_count=1, competitors={label: 1})

    level = sorted(seeds)
    d = 0
    while level:
        next_level: set[int] = set()
        for u in level:
            for v in graph.children(u):
                if v in seeds:
                    continue  # paths stop at seeded nodes
                if v not in dist:
                    dist[v] = d + 1
                    counts[v] = defaultdict(int)
                    next_level.add(v)
                if dist[v] == d + 1:
                    for label, c in counts[u].items():
                        counts[v][label] += c
        for v in next_level:
            tally = counts[v]
            winner = min(tally, key=lambda lab: (-tally[lab], _LABEL_RANK[lab]))
            labeling.resolved[v] = Resolution(
                label=None if winner == NONE_LABEL else winner,
                provenance="inherited", distance=d + 1,
                path_count=tally[winner], competitors=dict(tally))
        level = sorted(next_level)
        d += 1
    return labeling


@dataclass
class CoverageReport:
    label_counts: dict[str, int]
    articles_total: int
    articles_labeled: int

    @property
    def percent_labeled(self) -> float:
        if self.articles_total == 0:
            return 0.0
        return 100.0 * self.articles_labeled / self.articles_total


def coverage_report(graph: WikiGraph, labeling: Labeling) -> CoverageReport:
    """Tally resolved article labels; "none" resolutions do not count as covered."""
    counts: dict[str, int] = {label: 0 for label in SEED_LABELS}
    labeled = 0
    total = 0
    for node in graph.articles():
        total += 1
        res = labeling.resolved.get(node.id)
        if res is None:
            continue
        if res.label is None:
            counts[NONE_LABEL] += 1
        else:
            counts[res.label] += 1
            labeled += 1
    return CoverageReport(label_counts=counts, articles_total=total, articles_labeled=labeled)


# ---------------------------------------------------------------------------
# Seed files and snapshot persistence
# ---------------------------------------------------------------------------

def write_seeds(seeds: dict[int, str], stream) -> None:
    for node_id in sorted(seeds):
        stream.write(f"{node_id}\t{seeds[node_id]}\n")


def read_seeds(stream: Iterable[str]) -> dict[int, str]:
    seeds: dict[int, str] = {}
    for lineno, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in SEED_LABELS:
            raise GraphError(f"line {lineno}: expected `node-id TAB label`")
        seeds[int(parts[0])] = parts[1]
    return seeds


def save_snapshot(path: str | Path, graph: WikiGraph, stats: AnchorStatistics,
                  index: InlinkIndex, seeds: Optional[dict[int, str]] = None,
                  disambiguator: Optional[dict] = None) -> None:
    payload = {
        "nodes": [
            {"id": n.id, "title": n.title, "kind": n.kind, "parents": sorted(n.parents)}
            for n in sorted(graph.nodes.values(), key=lambda n: n.id)
        ],
        "anchors": {
            label: {"occurrences": e.occurrences, "links": e.links,
                    "senses": {str(c): k for c, k in sorted(e.senses.items())}}
            for label, e in sorted(stats.entries.items())
        },
        "inlinks": {str(c): sorted(srcs) for c, srcs in sorted(index.inlinks.items())},
        "total_articles": index.total_articles,
        "seeds": {str(k): v for k, v in sorted((seeds or {}).items())},
    }
    if disambiguator is not None:
        payload["disambiguator"] = disambiguator
    storage.save_container(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, payload)


def load_snapshot(path: str | Path) -> tuple[WikiGraph, AnchorStatistics, InlinkIndex,
                                             dict[int, str], Optional[dict]]:
    _, payload = storage.load_container(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)
    graph = WikiGraph()
    for rec in payload["nodes"]:
        graph.add(WikiNode(rec["id"], rec["title"], rec["kind"], set(rec["parents"])))
    stats = AnchorStatistics()
    for label, rec in payload["anchors"].items():
        entry = stats.entry(label)
        entry.occurrences = rec["occurrences"]
        entry.links = rec["links"]
        entry.senses = {int(c): k for c, k in rec["senses"].items()}
    index = InlinkIndex(total_articles=payload["total_articles"])
    index.inlinks = {int(c): set(srcs) for c, srcs in payload["inlinks"].items()}
    seeds = {int(k): v for k, v in payload.get("seeds", {}).items()}
    return graph, stats, index, seeds, payload.get("disambiguator")
