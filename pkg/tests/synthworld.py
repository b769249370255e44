"""Synthetic fixture world for end-to-end tests.

A tiny invented universe: city articles under a category seeded
placeName, look-alike product articles under a category seeded none, and
a corpus whose templates make some entity slots decidable only through
the knowledge features (the sentence context is identical for cities and
products there).
"""

from __future__ import annotations

import numpy as np

from wikiner.corpus import Document, EntityCategory, EntitySpan, Sentence, Token
from wikiner.entitylinker import LinkerConfig
from wikiner.neural import EmbeddingTable

_PREFIXES = ["Vor", "Bel", "Dar", "Mol", "Sar", "Tel", "Kra", "Zan"]
_SUFFIXES = ["mak", "din", "pol", "vet"]
_NAMES = [p + s for p in _PREFIXES for s in _SUFFIXES]

CITIES = _NAMES[:14]
PRODUCTS = _NAMES[14:28]
PERSON_NAMES = [p + s for p in ["Ano", "Bri", "Cel", "Dor", "Eli", "Fio"]
                for s in ["ra", "la"]]

FUNCTION_WORDS = ["rano", "pojechał", "do", "ona", "kupiła", "wczoraj", "pan",
                  "mówił", "głośno", "deszcz", "padał", "cały", "dzień"]


def build_wiki_records() -> list[dict]:
    records = [
        {"id": 1000, "title": "Cities", "ns": 14, "categories": [], "links": []},
        {"id": 1001, "title": "Products", "ns": 14, "categories": [], "links": []},
    ]
    next_id = 1
    ids = {}
    for name in CITIES + PRODUCTS + ["Mira"]:
        ids[name] = next_id
        next_id += 1
    ids["Mira (product)"] = next_id

    def links_for(names):
        return [{"target": t, "anchor": t} for t in names]

    for i, name in enumerate(CITIES):
        neighbours = [CITIES[(i + 1) % len(CITIES)], CITIES[(i + 2) % len(CITIES)], "Mira"]
        records.append({"id": ids[name], "title": name, "ns": 0,
                        "categories": ["Cities"], "links": links_for(neighbours),
                        "text": " ".join([name, "is", "near"] + neighbours)})
    for i, name in enumerate(PRODUCTS):
        neighbours = [PRODUCTS[(i + 1) % len(PRODUCTS)], PRODUCTS[(i + 3) % len(PRODUCTS)]]
        links = links_for(neighbours)
        if i % 3 == 0:
            links.append({"target": "Mira (product)", "anchor": "Mira"})
        records.append({"id": ids[name], "title": name, "ns": 0,
                        "categories": ["Products"], "links": links,
                        "text": " ".join([name, "brand", "like"] + neighbours)})
    records.append({"id": ids["Mira"], "title": "Mira", "ns": 0,
                    "categories": ["Cities"], "links": links_for(CITIES[:2]),
                    "text": "Mira is near " + " ".join(CITIES[:2])})
    records.append({"id": ids["Mira (product)"], "title": "Mira (product)", "ns": 0,
                    "categories": ["Products"], "links": links_for([PRODUCTS[0]]),
                    "text": "Mira brand like " + PRODUCTS[0]})
    return records


def seed_labels(graph) -> dict[int, str]:
    return {graph.find("Cities", "category"): "placeName",
            graph.find("Products", "category"): "none"}


def linker_config() -> LinkerConfig:
    return LinkerConfig(p_threshold=0.01)


def generate_corpus(n_sentences: int, seed: int, ambiguous_city_rate: float = 0.45,
                    doc_id: str = "synth") -> Document:
    """Template corpus; in the 'bought X yesterday' template only world
    knowledge separates cities (placeName) from products (O)."""
    rng = np.random.default_rng(seed)
    place = EntityCategory("placeName")
    person = EntityCategory("persName")
    settlement = EntityCategory("placeName", sub="settlement")
    forename = EntityCategory("persName", sub="forename")
    sentences = []
    for _ in range(n_sentences):
        roll = rng.random()
        if roll < 0.25:
            city = CITIES[rng.integers(len(CITIES))]
            words = ["rano", "pojechał", "do", city]
            spans = [EntitySpan(3, 4, place), EntitySpan(3, 4, settlement, layer="sub")]
        elif roll < 0.60:
            if rng.random() < ambiguous_city_rate:
                filler = CITIES[rng.integers(len(CITIES))]
                spans = [EntitySpan(2, 3, place), EntitySpan(2, 3, settlement, layer="sub")]
            else:
                filler = PRODUCTS[rng.integers(len(PRODUCTS))]
                spans = []
            words = ["ona", "kupiła", filler, "wczoraj"]
        elif roll < 0.80:
            name = PERSON_NAMES[rng.integers(len(PERSON_NAMES))]
            words = ["pan", name, "mówił", "głośno"]
            spans = [EntitySpan(1, 2, person), EntitySpan(1, 2, forename, layer="sub")]
        else:
            words = ["deszcz", "padał", "cały", "dzień"]
            spans = []
        sentences.append(Sentence([Token(w, lemma=w.lower()) for w in words], spans))
    return Document(sentences=sentences, doc_id=doc_id)


def function_word_embeddings(dim: int = 8, seed: int = 123) -> EmbeddingTable:
    """Covers function words only; every entity surface falls back to UNK."""
    rng = np.random.default_rng(seed)
    return EmbeddingTable({w: rng.normal(size=dim) for w in FUNCTION_WORDS}, dim=dim)
