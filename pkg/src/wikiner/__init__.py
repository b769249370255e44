"""Knowledge-grounded named entity recognition toolkit."""

from .corpus import (
    Document,
    EntityCategory,
    EntitySpan,
    Sentence,
    Token,
    bio_decode,
    bio_encode,
    mark_derived,
    normalize_fragmented,
    parse_corpus,
    relocate_overlaps,
    write_corpus,
)
from .features import Gazetteer, capitalization_class, encode_onehot, gazetteer_build
from .pipeline import EvalReport, Pipeline, PipelineConfig, evaluate, final_score, sweep
from .wikigraph import coverage_report, import_dump, propagate_labels, set_seed_label

__all__ = [
    "Document", "EntityCategory", "EntitySpan", "Sentence", "Token",
    "bio_decode", "bio_encode", "mark_derived", "normalize_fragmented",
    "parse_corpus", "relocate_overlaps", "write_corpus",
    "Gazetteer", "capitalization_class", "encode_onehot", "gazetteer_build",
    "EvalReport", "Pipeline", "PipelineConfig", "evaluate", "final_score", "sweep",
    "coverage_report", "import_dump", "propagate_labels", "set_seed_label",
]

__version__ = "0.1.0"
