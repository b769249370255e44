"""End-to-end orchestration: configuration, annotation, scoring, sweeps.

A pipeline bundles the loaded resources (gazetteers, statistics snapshot,
tagger checkpoints) behind one annotate() call: tokenize, run feature
extractors and the entity linker, tag with the main/sub cascade, decode
spans and apply the derived-name post-process.

Scoring follows the shared-task convention: exact span+type F1, a
token-overlap F1 where a prediction counts if it shares at least one
token with an unmatched gold span of the same type, and a final score of
0.8 * overlap + 0.2 * exact (all on a 0-100 scale).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import corpus as corpus_mod
from . import entitylinker as linker_mod
from . import neural as neural_mod
from . import wikigraph as wiki_mod
from .corpus import Document, EntitySpan, Sentence, Token, bio_decode, bio_encode
from .features import CAPITALIZATION_CLASSES, Gazetteer, capitalization_class, gazetteer_load
from .tokenizer import tokenize

CAPITALIZATION_FEATURE = "capitalization"
WIKIPEDIA_FEATURE = "wikipedia"


class ConfigError(ValueError):
    pass


@dataclass
class GazetteerConfig:
    path: str
    mode: str = "lemma"


@dataclass
class PipelineConfig:
    """Key-value configuration tree, normally loaded from YAML.

    ``features`` fixes both the enabled extractors and their order, which
    determines the word-vector layout of any trained checkpoint.
    """

    features: list[str] = field(default_factory=lambda: [CAPITALIZATION_FEATURE])
    gazetteers: dict[str, GazetteerConfig] = field(default_factory=dict)
    snapshot: Optional[str] = None
    derived_lexicon: Optional[str] = None
    person_lexicon: Optional[str] = None
    common_lexicon: Optional[str] = None
    embeddings: Optional[str] = None
    contextual: Optional[str] = None
    main_checkpoint: Optional[str] = None
    sub_checkpoint: Optional[str] = None
    p_threshold: float = 0.01
    min_sense_probability: float = 0.0
    tokenizer: str = "simple"

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = ".") -> "PipelineConfig":
        def resolve(p):
            return p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)

        gazetteers = {}
        for name, entry in (raw.get("gazetteers") or {}).items():
            if isinstance(entry, str):
                entry = {"path": entry}
            gazetteers[name] = GazetteerConfig(path=resolve(entry["path"]),
                                               mode=entry.get("mode", "lemma"))
        cfg = cls(
            features=list(raw.get("features", [CAPITALIZATION_FEATURE])),
            gazetteers=gazetteers,
            snapshot=resolve(raw.get("snapshot")),
            derived_lexicon=resolve(raw.get("derived_lexicon")),
            person_lexicon=resolve(raw.get("person_lexicon")),
            common_lexicon=resolve(raw.get("common_lexicon")),
            embeddings=resolve(raw.get("embeddings")),
            contextual=resolve(raw.get("contextual")),
            main_checkpoint=resolve(raw.get("main_checkpoint")),
            sub_checkpoint=resolve(raw.get("sub_checkpoint")),
            p_threshold=float(raw.get("p_threshold", 0.01)),
            min_sense_probability=float(raw.get("min_sense_probability", 0.0)),
            tokenizer=raw.get("tokenizer", "simple"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))

    def validate(self) -> None:
        for name in self.features:
            if name not in (CAPITALIZATION_FEATURE, WIKIPEDIA_FEATURE) and name not in self.gazetteers:
                raise ConfigError(f"feature {name!r} has no gazetteer entry")
        if WIKIPEDIA_FEATURE in self.features and not self.snapshot:
            raise ConfigError("the wikipedia feature needs a statistics snapshot")
        paths = [g.path for g in self.gazetteers.values()]
        paths += [p for p in (self.snapshot, self.derived_lexicon, self.person_lexicon,
                              self.common_lexicon, self.embeddings, self.contextual,
                              self.main_checkpoint, self.sub_checkpoint) if p]
        for p in paths:
            if not os.path.exists(p):
                raise ConfigError(f"configured file does not exist: {p}")


def _load_wordlist(path: Optional[str]) -> frozenset[str]:
    if not path:
        return frozenset()
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


class FeaturePipeline:
    """Per-document feature extraction producing one label per token."""

    def __init__(self, features: Sequence[str], gazetteers: dict[str, Gazetteer],
                 linker_resources: Optional[dict] = None):
        self.features = list(features)
        self.gazetteers = gazetteers
        self.linker = linker_resources  # stats/index/labeling/disambiguator/config
        self.vocabularies: dict[str, tuple[str, ...]] = {}
        for name in self.features:
            if name == CAPITALIZATION_FEATURE:
                self.vocabularies[name] = tuple(CAPITALIZATION_CLASSES)
            elif name == WIKIPEDIA_FEATURE:
                self.vocabularies[name] = tuple(corpus_mod.MAIN_CATEGORIES)
            else:
                self.vocabularies[name] = tuple(gazetteers[name].labels)

    def extract(self, sentences: Sequence[Sequence[Token]]) -> dict[str, list[list[Optional[str]]]]:
        out: dict[str, list[list[Optional[str]]]] = {}
        for name in self.features:
            if name == CAPITALIZATION_FEATURE:
                out[name] = [[capitalization_class(t.surface) for t in sent] for sent in sentences]
            elif name == WIKIPEDIA_FEATURE:
                out[name] = self._wikipedia_labels(sentences)
            else:
                out[name] = [self.gazetteers[name].match(sent) for sent in sentences]
        return out

    def _wikipedia_labels(self, sentences: Sequence[Sequence[Token]]) -> list[list[Optional[str]]]:
        res = self.linker
        if res is None:
            raise ConfigError("wikipedia feature enabled but no linker resources loaded")
        mentions = linker_mod.link_document(
            sentences, res["stats"], res["index"], res["labeling"],
            disambiguator=res.get("disambiguator"), config=res["config"])
        labels: list[list[Optional[str]]] = [[None] * len(sent) for sent in sentences]
        for m in mentions:
            for i in range(m.start, m.end):
                labels[m.sentence][i] = m.ne_label
        return labels


def load_feature_pipeline(cfg: PipelineConfig) -> FeaturePipeline:
    gazetteers: dict[str, Gazetteer] = {}
    for name, gcfg in cfg.gazetteers.items():
        with open(gcfg.path, encoding="utf-8") as fh:
            gazetteers[name] = gazetteer_load(fh, mode=gcfg.mode, name=name)
    linker_resources = None
    if cfg.snapshot:
        graph, stats, index, seeds, disamb = wiki_mod.load_snapshot(cfg.snapshot)
        labeling = wiki_mod.propagate_labels(graph, seeds)
        linker_resources = {
            "graph": graph,
            "stats": stats,
            "index": index,
            "labeling": labeling,
            "disambiguator": (linker_mod.Disambiguator.from_json(disamb) if disamb else None),
            "config": linker_mod.LinkerConfig(
                p_threshold=cfg.p_threshold,
                min_sense_probability=cfg.min_sense_probability,
                person_names=_load_wordlist(cfg.person_lexicon),
                common_words=_load_wordlist(cfg.common_lexicon),
            ),
        }
    return FeaturePipeline(cfg.features, gazetteers, linker_resources)


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

def build_instances(docs: Sequence[Document], fp: FeaturePipeline, layer: str = "main",
                    scheme: str = "BIO", with_gold: bool = True,
                    parent_from_gold: bool = False) -> list[neural_mod.Instance]:
    """One Instance per sentence; sub-model instances take gold main tags
    as parent labels (teacher forcing) when requested."""
    instances = []
    for doc in docs:
        sentences = [s.tokens for s in doc.sentences]
        feats = fp.extract(sentences)
        for s_idx, sent in enumerate(doc.sentences):
            gold = None
            if with_gold:
                gold = bio_encode(sent.layer(layer), len(sent.tokens), scheme=scheme)
            parents = None
            if parent_from_gold:
                parents = bio_encode(sent.layer("main"), len(sent.tokens), scheme=scheme)
            instances.append(neural_mod.Instance(
                tokens=list(sent.tokens),
                feature_labels={name: per_sent[s_idx] for name, per_sent in feats.items()},
                gold_tags=gold, parent_labels=parents,
                doc_id=doc.doc_id, sent_idx=s_idx))
    return instances


def tag_vocabulary(docs: Sequence[Document], layer: str, scheme: str = "BIO") -> tuple[str, ...]:
    """O first, then B-/I-(/E-/S-) tags for every category seen in the layer."""
    labels = sorted({s.category.label for sent in corpus_mod.iter_sentences(docs)
                     for s in sent.layer(layer)})
    prefixes = ("B", "I") if scheme == "BIO" else ("B", "I", "E", "S")
    tags = ["O"]
    for label in labels:
        tags.extend(f"{p}-{label}" for p in prefixes)
    return tuple(tags)


# ---------------------------------------------------------------------------
# Annotation
# ---------------------------------------------------------------------------

class Pipeline:
    """Loaded resources plus trained checkpoints, ready to annotate."""

    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.config = cfg
        self.features = load_feature_pipeline(cfg)
        self.derived = None
        if cfg.derived_lexicon:
            with open(cfg.derived_lexicon, encoding="utf-8") as fh:
                self.derived = corpus_mod.DerivedLexicon.load(fh)
        contextual = neural_mod.ContextualTable.load(cfg.contextual) if cfg.contextual else None
        self.main_model = (neural_mod.TaggerModel.load(cfg.main_checkpoint, contextual)
                           if cfg.main_checkpoint else None)
        self.sub_model = (neural_mod.TaggerModel.load(cfg.sub_checkpoint, contextual)
                          if cfg.sub_checkpoint else None)

    @property
    def linker_resources(self) -> Optional[dict]:
        return self.features.linker

    def annotate_text(self, text: str) -> Document:
        sentences = tokenize(text) if text.strip() else []
        return self.annotate_sentences(sentences)

    def annotate_document(self, doc: Document) -> Document:
        out = self.annotate_sentences([list(s.tokens) for s in doc.sentences])
        out.doc_id = doc.doc_id
        return out

    def annotate_sentences(self, sentences: Sequence[Sequence[Token]]) -> Document:
        if self.main_model is None:
            raise ConfigError("no main tagger checkpoint configured")
        doc = Document(sentences=[Sentence(list(toks), []) for toks in sentences])
        if not sentences:
            return doc
        feats = self.features.extract(sentences)
        out_sentences = []
        for s_idx, toks in enumerate(sentences):
            inst = neural_mod.Instance(
                tokens=list(toks),
                feature_labels={name: per_sent[s_idx] for name, per_sent in feats.items()},
                doc_id=doc.doc_id, sent_idx=s_idx)
            if self.sub_model is not None:
                main_tags, sub_tags = neural_mod.predict_cascade(self.main_model, self.sub_model, inst)
            else:
                main_tags = neural_mod.predict_tags(self.main_model, inst)
                sub_tags = ["O"] * len(toks)
            spans = bio_decode(main_tags, layer="main", strict=False)
            spans += bio_decode(sub_tags, layer="sub", strict=False)
            out_sentences.append(Sentence(list(toks), spans))
        out = Document(sentences=out_sentences, doc_id=doc.doc_id)
        if self.derived is not None:
            out = corpus_mod.mark_derived(out, self.derived)
        return out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class CategoryScore:
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    @property
    def precision(self) -> float:
        return 100.0 * self.tp / self.n_pred if self.n_pred else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.tp / self.n_gold if self.n_gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalReport:
    per_category: dict[str, CategoryScore]
    exact: CategoryScore
    overlap: CategoryScore
    overlap_per_category: dict[str, CategoryScore]

    @property
    def exact_f1(self) -> float:
        return self.exact.f1

    @property
    def overlap_f1(self) -> float:
        return self.overlap.f1

    @property
    def final_score(self) -> float:
        return final_score(self.exact_f1, self.overlap_f1)


def final_score(exact: float, overlap: float) -> float:
    """Headline metric: 0.8 * overlap + 0.2 * exact (0-100 scale)."""
    return 0.8 * overlap + 0.2 * exact


def _doc_spans(docs: Sequence[Document]):
    out = []
    for d_idx, doc in enumerate(docs):
        for s_idx, sent in enumerate(doc.sentences):
            for layer in ("main", "sub"):
                for span in sent.layer(layer):
                    out.append(((d_idx, s_idx, layer), span))
    return out


def _group(spans):
    table: dict[tuple, list[EntitySpan]] = {}
    for key, span in spans:
        table.setdefault(key, []).append(span)
    return table


def evaluate(pred: Sequence[Document], gold: Sequence[Document]) -> EvalReport:
    """Exact and overlap span scores plus the combined final score.

    Overlap matching is greedy per sentence and layer: exact pairs match
    first, then each remaining prediction takes the first unmatched gold
    span of the same type it shares a token with.  Each gold span matches
    at most once, which keeps overlap >= exact.
    """
    if len(pred) != len(gold):
        raise ValueError(f"document count mismatch: {len(pred)} predicted vs {len(gold)} gold")
    for p_doc, g_doc in zip(pred, gold):
        if len(p_doc.sentences) != len(g_doc.sentences):
            raise ValueError(f"sentence count mismatch in doc {g_doc.doc_id!r}")
        for p_sent, g_sent in zip(p_doc.sentences, g_doc.sentences):
            if len(p_sent.tokens) != len(g_sent.tokens):
                raise ValueError(f"tokenization mismatch in doc {g_doc.doc_id!r}")

    per_cat: dict[str, CategoryScore] = {}
    over_cat: dict[str, CategoryScore] = {}
    exact_total = CategoryScore()
    overlap_total = CategoryScore()

    pred_groups = _group(_doc_spans(pred))
    gold_groups = _group(_doc_spans(gold))
    for key in sorted(set(pred_groups) | set(gold_groups)):
        p_spans = sorted(pred_groups.get(key, []), key=lambda s: (s.start, s.end, s.category.label))
        g_spans = sorted(gold_groups.get(key, []), key=lambda s: (s.start, s.end, s.category.label))
        for s in p_spans:
            per_cat.setdefault(s.category.label, CategoryScore()).n_pred += 1
            over_cat.setdefault(s.category.label, CategoryScore()).n_pred += 1
            exact_total.n_pred += 1
            overlap_total.n_pred += 1
        for s in g_spans:
            per_cat.setdefault(s.category.label, CategoryScore()).n_gold += 1
            over_cat.setdefault(s.category.label, CategoryScore()).n_gold += 1
            exact_total.n_gold += 1
            overlap_total.n_gold += 1

        matched_gold: set[int] = set()
        matched_pred: set[int] = set()
        # pass 1: exact span+type equality
        for p_i, p in enumerate(p_spans):
            for g_i, g in enumerate(g_spans):
                if g_i in matched_gold:
                    continue
                if p.start == g.start and p.end == g.end and p.category.label == g.category.label:
                    matched_gold.add(g_i)
                    matched_pred.add(p_i)
                    per_cat[p.category.label].tp += 1
                    over_cat[p.category.label].tp += 1
                    exact_total.tp += 1
                    overlap_total.tp += 1
                    break
        # pass 2: token overlap with type equality
        for p_i, p in enumerate(p_spans):
            if p_i in matched_pred:
                continue
            for g_i, g in enumerate(g_spans):
                if g_i in matched_gold:
                    continue
                if p.category.label == g.category.label and p.overlaps(g):
                    matched_gold.add(g_i)
                    over_cat[p.category.label].tp += 1
                    overlap_total.tp += 1
                    break
    return EvalReport(per_category=per_cat, exact=exact_total,
                      overlap=overlap_total, overlap_per_category=over_cat)


def tags_exact_f1(pred_tags: Sequence[Sequence[str]], gold_tags: Sequence[Sequence[str]]) -> float:
    """Micro exact-span F1 straight from tag sequences (0-100)."""
    score = CategoryScore()
    for p, g in zip(pred_tags, gold_tags):
        p_spans = {(s.start, s.end, s.category.label) for s in bio_decode(list(p), strict=False)}
        g_spans = {(s.start, s.end, s.category.label) for s in bio_decode(list(g), strict=False)}
        score.tp += len(p_spans & g_spans)
        score.n_pred += len(p_spans)
        score.n_gold += len(g_spans)
    return score.f1


# ---------------------------------------------------------------------------
# Hyperparameter sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    name: str
    config: neural_mod.TaggerConfig
    fold_scores: list[float]

    @property
    def mean_f1(self) -> float:
        return sum(self.fold_scores) / len(self.fold_scores)


def sweep(configs: dict[str, neural_mod.TaggerConfig],
          instances: Sequence[neural_mod.Instance],
          tags: Sequence[str],
          feature_vocabs: dict[str, Sequence[str]],
          folds: int = 10, seed: int = 0,
          embedding: Optional[neural_mod.EmbeddingTable] = None) -> list[SweepRow]:
    """Cross-validated mean exact F1 per configuration.

    Fold assignment is a seed-deterministic shuffle; every configuration
    sees the same folds.
    """
    if len(instances) < folds:
        raise ValueError(f"{len(instances)} sentences cannot fill {folds} folds")
    import numpy as np

    rng = np.random.default_rng(seed)
    order = np.arange(len(instances))
    rng.shuffle(order)
    fold_of = {int(idx): i % folds for i, idx in enumerate(order)}
    char_index = neural_mod.build_char_index([inst.tokens for inst in instances])

    rows = []
    for c_idx, (name, cfg) in enumerate(configs.items()):
        fold_scores = []
        for fold in range(folds):
            train = [inst for i, inst in enumerate(instances) if fold_of[i] != fold]
            held = [inst for i, inst in enumerate(instances) if fold_of[i] == fold]
            model = neural_mod.init_tagger(cfg, tags, feature_vocabs, char_index,
                                           seed=seed * 10007 + c_idx * 101 + fold,
                                           embedding=embedding)
            neural_mod.train_tagger(train, model, seed=seed * 10007 + c_idx * 101 + fold)
            pred = [neural_mod.predict_tags(model, inst) for inst in held]
            gold = [inst.gold_tags for inst in held]
            fold_scores.append(tags_exact_f1(pred, gold))
        rows.append(SweepRow(name=name, config=cfg, fold_scores=fold_scores))
    return rows
