"""Wikification: detect label mentions, disambiguate, emit NE classes.

The statistics behind the scores come from the ingested dump: a label's
prior link probability (how often its text is a link at all), per-concept
prior sense probabilities, and an inlink-overlap relatedness measure
derived from Normalized Google Distance.  Unambiguous labels anchor a
document context; ambiguous ones are scored by a small decision tree
("disambiguator") over (sense prior, context relatedness, context
quality), averaged with the context relatedness itself.  Mentions whose
winning concept carries no NE class are not emitted, and no separate
relevance model filters the survivors: recall is the point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .corpus import Token
from .features import Gazetteer
from .tokenizer import tokenize_text
from .wikigraph import AnchorStatistics, InlinkIndex, Labeling, WikiGraph

RelFn = Callable[[int, int], float]


class LinkerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Core statistics
# ---------------------------------------------------------------------------

def link_probability(stats: AnchorStatistics, label: str) -> float:
    """Fraction of the label's corpus occurrences that are links; unseen -> 0."""
    entry = stats.get(label)
    if entry is None or entry.occurrences == 0:
        return 0.0
    return entry.links / entry.occurrences


def prior_sense_probability(stats: AnchorStatistics, label: str, concept: int) -> float:
    """Fraction of the label's link uses that point at this concept."""
    entry = stats.get(label)
    if entry is None or entry.links == 0:
        raise LinkerError(f"label {label!r} has no senses")
    return entry.senses.get(concept, 0) / entry.links


def relatedness(index: InlinkIndex, a: int, b: int) -> float:
    """Inlink-overlap similarity between two concepts, clamped to [0, 1].

    1 - (log max(|A|,|B|) - log |A∩B|) / (log |W| - log min(|A|,|B|)),
    natural logs.  Empty or disjoint inlink sets give 0; the degenerate
    denominator (min as large as the whole corpus) gives 1 only for
    identical sets.
    """
    set_a, set_b = index.get(a), index.get(b)
    if not set_a or not set_b:
        return 0.0
    inter = len(set_a & set_b)
    if inter == 0:
        return 0.0
    hi, lo = max(len(set_a), len(set_b)), min(len(set_a), len(set_b))
    numer = math.log(hi) - math.log(inter)
    denom = math.log(index.total_articles) - math.log(lo)
    if denom <= 0.0:
        return 1.0 if numer == 0.0 else 0.0
    return min(1.0, max(0.0, 1.0 - numer / denom))


# ---------------------------------------------------------------------------
# Candidates and document context
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sense:
    concept: int
    ps: float
    ne_label: Optional[str] = None


@dataclass
class LabelCandidate:
    label: str
    sentence: int
    start: int
    end: int
    senses: list[Sense]
    link_prob: float

    @property
    def unambiguous(self) -> bool:
        return len(self.senses) == 1


@dataclass
class DocumentContext:
    """Unambiguous concepts with their qualities; Q is their sum."""

    concepts: list[int] = field(default_factory=list)
    qualities: dict[int, float] = field(default_factory=dict)

    @property
    def quality(self) -> float:
        return sum(self.qualities[c] for c in self.concepts)


@dataclass
class LinkerConfig:
    p_threshold: float = 0.01
    min_sense_probability: float = 0.0
    person_names: frozenset[str] = frozenset()
    common_words: frozenset[str] = frozenset()


def candidate_senses(stats: AnchorStatistics, label: str, labeling: Optional[Labeling],
                     min_sense_probability: float = 0.0) -> list[Sense]:
    entry = stats.get(label)
    if entry is None or entry.links == 0:
        return []
    senses = []
    for concept, count in sorted(entry.senses.items()):
        ps = count / entry.links
        if ps < min_sense_probability:
            continue
        ne = labeling.resolved_label(concept) if labeling is not None else None
        senses.append(Sense(concept=concept, ps=ps, ne_label=ne))
    return senses


def detect_candidates(sentences: Sequence[Sequence[Token]], stats: AnchorStatistics,
                      labeling: Optional[Labeling], config: LinkerConfig) -> list[LabelCandidate]:
    """Longest-match label detection over token surfaces, sentence by sentence.

    Labels under the prior link probability threshold are discarded here.
    """
    trie = Gazetteer("anchors", mode="surface")
    label_by_key: dict[tuple[str, ...], str] = {}
    for label in stats.labels():
        if link_probability(stats, label) < config.p_threshold:
            continue
        key = tuple(tokenize_text(label))
        if key and key not in label_by_key:
            label_by_key[key] = label
            trie.add(key, label)

    found: list[LabelCandidate] = []
    for s_idx, sent in enumerate(sentences):
        words = [t.surface for t in sent]
        i = 0
        while i < len(words):
            hit = trie.longest_match(words, i)
            if hit is None:
                i += 1
                continue
            end, label = hit
            senses = candidate_senses(stats, label, labeling, config.min_sense_probability)
            if senses:
                found.append(LabelCandidate(
                    label=label, sentence=s_idx, start=i, end=end, senses=senses,
                    link_prob=link_probability(stats, label)))
            i = end
    return found


def build_context(candidates: Sequence[LabelCandidate], stats: AnchorStatistics,
                  index: Optional[InlinkIndex], rel: Optional[RelFn] = None) -> DocumentContext:
    """Collect unambiguous concepts and score their qualities.

    A concept's quality is the mean sense prior of document labels
    referring to it times its mean relatedness to the unambiguous set
    (itself included).  No unambiguous concepts -> empty context.
    """
    if rel is None:
        if index is None:
            raise ValueError("either an inlink index or a rel function is required")
        rel = lambda a, b: relatedness(index, a, b)
    concepts: list[int] = []
    for cand in candidates:
        if cand.unambiguous and cand.senses[0].concept not in concepts:
            concepts.append(cand.senses[0].concept)
    ctx = DocumentContext()
    if not concepts:
        return ctx
    for c in concepts:
        referring = [cand for cand in candidates if any(s.concept == c for s in cand.senses)]
        ps_values = []
        for cand in referring:
            sense = next(s for s in cand.senses if s.concept == c)
            ps_values.append(sense.ps)
        avg_ps = sum(ps_values) / len(ps_values) if ps_values else 0.0
        avg_rel = sum(rel(c, ci) for ci in concepts) / len(concepts)
        ctx.concepts.append(c)
        ctx.qualities[c] = avg_ps * avg_rel
    return ctx


def context_relatedness(ctx: DocumentContext, concept: int, rel: RelFn) -> float:
    """Quality-weighted mean relatedness of a concept to the context; 0 when empty."""
    q_total = ctx.quality
    if q_total <= 0.0:
        return 0.0
    acc = sum(ctx.qualities[ci] * rel(concept, ci) for ci in ctx.concepts)
    return acc / q_total


# ---------------------------------------------------------------------------
# Heuristic pre-filters
# ---------------------------------------------------------------------------

_ROMAN_RE = re.compile(r"^(?=[IVXLCDM])M{0,4}(CM|CD|D?C{0,3})(XC|XL|L?X{0,3})(IX|IV|V?I{0,3})$")
_ARABIC_RE = re.compile(r"^\d+$")


def is_numeric_label(label: str) -> bool:
    """True for labels that are Roman or Arabic numerals (all tokens)."""
    tokens = tokenize_text(label)
    if not tokens:
        return False
    if all(_ARABIC_RE.match(t) for t in tokens):
        return True
    return all(_ROMAN_RE.match(t) for t in tokens)


def candidate_filter(candidates: Iterable[LabelCandidate],
                     person_names: Iterable[str] = (),
                     common_words: Iterable[str] = ()) -> list[LabelCandidate]:
    """Drop label-concept pairs irrelevant to entity recognition.

    Four rules: single-character labels; numeric labels (Roman or Arabic);
    person-name labels whose concept is not classed persName (senses are
    pruned pair-wise); labels made only of lowercase common words and
    digits.  Person names match the full label only.
    """
    persons = {p.lower() for p in person_names}
    commons = set(common_words)
    kept: list[LabelCandidate] = []
    for cand in candidates:
        if len(cand.label) == 1:
            continue
        if is_numeric_label(cand.label):
            continue
        tokens = tokenize_text(cand.label)
        if tokens and all(
            _ARABIC_RE.match(t) or (t == t.lower() and t.lower() in commons)
            for t in tokens
        ):
            continue
        senses = cand.senses
        if cand.label.lower() in persons:
            senses = [s for s in senses if s.ne_label == "persName"]
        if not senses:
            continue
        kept.append(LabelCandidate(label=cand.label, sentence=cand.sentence,
                                   start=cand.start, end=cand.end,
                                   senses=senses, link_prob=cand.link_prob))
    return kept


# ---------------------------------------------------------------------------
# Disambiguator: a small CART over (ps, relC, Q)
# ---------------------------------------------------------------------------

FEATURE_NAMES = ("sense_prior", "context_relatedness", "context_quality")


@dataclass
class TreeNode:
    probability: float
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


class Disambiguator:
    """Binary decision tree scoring label-concept pairs in [0, 1]."""

    def __init__(self, root: TreeNode, max_depth: Optional[int] = None):
        self.root = root
        self.max_depth = max_depth

    @classmethod
    def constant(cls, probability: float = 0.5) -> "Disambiguator":
        return cls(TreeNode(probability=probability), max_depth=0)

    def predict(self, features: Sequence[float]) -> float:
        node = self.root
        while not node.is_leaf:
            node = node.left if features[node.feature] <= node.threshold else node.right
        return node.probability

    def to_json(self) -> dict:
        def enc(node: TreeNode) -> dict:
            if node.is_leaf:
                return {"p": node.probability}
            return {"p": node.probability, "f": node.feature, "t": node.threshold,
                    "l": enc(node.left), "r": enc(node.right)}
        return {"max_depth": self.max_depth, "tree": enc(self.root)}

    @classmethod
    def from_json(cls, payload: dict) -> "Disambiguator":
        def dec(obj: dict) -> TreeNode:
            if "f" not in obj:
                return TreeNode(probability=obj["p"])
            return TreeNode(probability=obj["p"], feature=obj["f"], threshold=obj["t"],
                            left=dec(obj["l"]), right=dec(obj["r"]))
        return cls(dec(payload["tree"]), max_depth=payload.get("max_depth"))


def _gini(pos: int, total: int) -> float:
    if total == 0:
        return 0.0
    p = pos / total
    return 2.0 * p * (1.0 - p)


def _best_split(samples: list[tuple[Sequence[float], bool]]) -> Optional[tuple[int, float, float]]:
    total = len(samples)
    pos_total = sum(1 for _, y in samples if y)
    parent = _gini(pos_total, total)
    best: Optional[tuple[int, float, float]] = None  # (gain, feature, threshold) ordered
    best_gain = 1e-12
    n_features = len(samples[0][0])
    for f in range(n_features):
        ordered = sorted(samples, key=lambda s: s[0][f])
        pos_left = 0
        for i in range(1, total):
            pos_left += 1 if ordered[i - 1][1] else 0
            lo, hi = ordered[i - 1][0][f], ordered[i][0][f]
            if lo == hi:
                continue
            gini_l = _gini(pos_left, i)
            gini_r = _gini(pos_total - pos_left, total - i)
            gain = parent - (i * gini_l + (total - i) * gini_r) / total
            if gain > best_gain:
                best_gain = gain
                best = (f, (lo + hi) / 2.0, gain)
    return best


def _grow(samples: list[tuple[Sequence[float], bool]], depth: int,
          max_depth: Optional[int], min_samples_leaf: int) -> TreeNode:
    total = len(samples)
    pos = sum(1 for _, y in samples if y)
    node = TreeNode(probability=pos / total)
    if pos in (0, total) or (max_depth is not None and depth >= max_depth):
        return node
    split = _best_split(samples)
    if split is None:
        return node
    f, thr, _gain = split
    left = [s for s in samples if s[0][f] <= thr]
    right = [s for s in samples if s[0][f] > thr]
    if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
        return node
    node.feature, node.threshold = f, thr
    node.left = _grow(left, depth + 1, max_depth, min_samples_leaf)
    node.right = _grow(right, depth + 1, max_depth, min_samples_leaf)
    return node


def train_disambiguator(samples: Sequence[tuple[Sequence[float], bool]],
                        max_depth: Optional[int] = 6,
                        min_samples_leaf: int = 1) -> Disambiguator:
    """Fit a CART on (features, is-correct-sense) pairs; leaves hold the
    positive fraction.  Deterministic for a fixed sample order."""
    samples = list(samples)
    if not samples:
        raise LinkerError("cannot train a disambiguator on an empty sample set")
    root = _grow(samples, 0, max_depth, min_samples_leaf)
    return Disambiguator(root, max_depth=max_depth)


def score_candidate(d: Disambiguator, ctx: DocumentContext, stats: AnchorStatistics,
                    label: str, concept: int, rel: RelFn) -> float:
    """Disambiguation probability for one label-concept pair."""
    ps = prior_sense_probability(stats, label, concept)
    rel_c = context_relatedness(ctx, concept, rel)
    return d.predict((ps, rel_c, ctx.quality))


# ---------------------------------------------------------------------------
# Document linking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkedMention:
    sentence: int
    start: int
    end: int
    label: str
    concept: int
    ne_label: str
    score: float


def link_document(sentences: Sequence[Sequence[Token]], stats: AnchorStatistics,
                  index: InlinkIndex, labeling: Labeling,
                  disambiguator: Optional[Disambiguator] = None,
                  config: LinkerConfig = LinkerConfig()) -> list[LinkedMention]:
    """Detect, filter and disambiguate mentions; emit NE-classed concepts.

    Per surviving label the winning sense maximizes the mean of the
    disambiguator output and the context relatedness; mentions are kept
    only when the winner resolves to an NE class.
    """
    if disambiguator is None:
        disambiguator = Disambiguator.constant(0.5)
    rel: RelFn = lambda a, b: relatedness(index, a, b)
    candidates = detect_candidates(sentences, stats, labeling, config)
    candidates = candidate_filter(candidates, config.person_names, config.common_words)
    ctx = build_context(candidates, stats, index)

    mentions: list[LinkedMention] = []
    for cand in candidates:
        best: Optional[tuple[float, Sense]] = None
        for sense in cand.senses:
            rel_c = context_relatedness(ctx, sense.concept, rel)
            d_score = disambiguator.predict((sense.ps, rel_c, ctx.quality))
            score = (d_score + rel_c) / 2.0
            if best is None or score > best[0]:
                best = (score, sense)
        score, sense = best
        if sense.ne_label is None:
            continue
        mentions.append(LinkedMention(
            sentence=cand.sentence, start=cand.start, end=cand.end,
            label=cand.label, concept=sense.concept,
            ne_label=sense.ne_label, score=score))
    return mentions


# ---------------------------------------------------------------------------
# Training-data harvest from the ingested dump
# ---------------------------------------------------------------------------

def harvest_training_samples(records: Iterable[dict], stats: AnchorStatistics,
                             index: InlinkIndex, graph: WikiGraph,
                             config: LinkerConfig = LinkerConfig(),
                             validation_fraction: float = 0.2,
                             seed: int = 0) -> tuple[list, list]:
    """Build disambiguator samples from existing links in the dump.

    Each ambiguous linked anchor yields one positive (the linked concept)
    and negatives (its other senses), with context features computed from
    the page's own links.  Returns a deterministic (train, validation)
    split.
    """
    import json as _json
    import random

    samples: list[tuple[tuple[float, float, float], bool]] = []
    for rec in records:
        page = _json.loads(rec) if isinstance(rec, str) else rec
        if page.get("ns", 0) != 0 or page.get("redirect"):
            continue
        links = page.get("links", [])
        cands: list[LabelCandidate] = []
        for link in links:
            label = link.get("anchor") or link["target"]
            if link_probability(stats, label) < config.p_threshold:
                continue
            senses = candidate_senses(stats, label, None, config.min_sense_probability)
            if senses:
                cands.append(LabelCandidate(label=label, sentence=0, start=0, end=0,
                                            senses=senses,
                                            link_prob=link_probability(stats, label)))
        ctx = build_context(cands, stats, index)
        rel: RelFn = lambda a, b: relatedness(index, a, b)
        for link in links:
            label = link.get("anchor") or link["target"]
            entry = stats.get(label)
            if entry is None or len(entry.senses) < 2:
                continue
            target_id = graph.find(link["target"], "article")
            if target_id is None or target_id not in entry.senses:
                continue
            for concept in sorted(entry.senses):
                ps = entry.senses[concept] / entry.links
                rel_c = context_relatedness(ctx, concept, rel)
                samples.append(((ps, rel_c, ctx.quality), concept == target_id))
    rng = random.Random(seed)
    order = list(range(len(samples)))
    rng.shuffle(order)
    cut = int(len(samples) * (1.0 - validation_fraction))
    train = [samples[i] for i in order[:cut]]
    val = [samples[i] for i in order[cut:]]
    return train, val
