"""HTTP service for the labeling UI and programmatic callers.

Read endpoints serve an immutable graph + statistics; seed mutations are
serialized behind a lock and re-run propagation before acknowledging, so
every response reflects a consistent labeling.
"""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import entitylinker as linker_mod
from . import wikigraph as wiki_mod
from .corpus import Document
from .pipeline import Pipeline


class SeedBody(BaseModel):
    label: str


class TextBody(BaseModel):
    text: str


class ServiceState:
    def __init__(self, graph: wiki_mod.WikiGraph, stats: wiki_mod.AnchorStatistics,
                 index: wiki_mod.InlinkIndex, seeds: Optional[dict[int, str]] = None,
                 disambiguator: Optional[linker_mod.Disambiguator] = None,
                 pipeline: Optional[Pipeline] = None,
                 linker_config: Optional[linker_mod.LinkerConfig] = None,
                 snapshot_path: Optional[str] = None):
        self.graph = graph
        self.stats = stats
        self.index = index
        self.seeds = dict(seeds or {})
        self.disambiguator = disambiguator
        self.pipeline = pipeline
        self.linker_config = linker_config or linker_mod.LinkerConfig()
        self.snapshot_path = snapshot_path
        self._write_lock = threading.Lock()
        self.labeling = wiki_mod.propagate_labels(self.graph, self.seeds)

    def mutate_seed(self, node_id: int, label: Optional[str]) -> None:
        with self._write_lock:
            wiki_mod.set_seed_label(self.labeling, self.graph, node_id, label)
            self.seeds = dict(self.labeling.seeds)
            self.labeling = wiki_mod.propagate_labels(self.graph, self.seeds)
            if self.snapshot_path:
                wiki_mod.save_snapshot(
                    self.snapshot_path, self.graph, self.stats, self.index, self.seeds,
                    self.disambiguator.to_json() if self.disambiguator else None)

    @classmethod
    def from_snapshot(cls, path: str, pipeline: Optional[Pipeline] = None,
                      persist: bool = False) -> "ServiceState":
        graph, stats, index, seeds, disamb = wiki_mod.load_snapshot(path)
        return cls(graph, stats, index, seeds,
                   disambiguator=linker_mod.Disambiguator.from_json(disamb) if disamb else None,
                   pipeline=pipeline, snapshot_path=path if persist else None)


def _node_brief(state: ServiceState, node_id: int) -> dict:
    node = state.graph.nodes[node_id]
    res = state.labeling.resolved.get(node_id)
    return {
        "id": node.id,
        "title": node.title,
        "kind": node.kind,
        "resolved": res.label if res else None,
        "seed": state.labeling.seeds.get(node_id),
    }


def _resolution_payload(state: ServiceState, node_id: int) -> dict:
    res = state.labeling.resolved.get(node_id)
    if res is None:
        return {"id": node_id, "label": None, "provenance": None,
                "distance": None, "path_count": 0, "competitors": {}}
    return {"id": node_id, "label": res.label, "provenance": res.provenance,
            "distance": res.distance, "path_count": res.path_count,
            "competitors": res.competitors}


def _span_payload(doc: Document) -> dict:
    sentences = []
    for sent in doc.sentences:
        sentences.append({
            "tokens": [t.surface for t in sent.tokens],
            "spans": [
                {"start": s.start, "end": s.end, "layer": s.layer,
                 "category": s.category.main, "subcategory": s.category.sub,
                 "derived": s.category.derived}
                for s in sent.spans
            ],
        })
    return {"doc_id": doc.doc_id, "sentences": sentences}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="wikiner service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.service = state

    @app.get("/api/nodes")
    def search_nodes(q: str = "", limit: int = 50):
        if not q:
            return {"nodes": []}
        return {"nodes": [_node_brief(state, n.id) for n in state.graph.search(q, limit=limit)]}

    @app.get("/api/nodes/{node_id}")
    def node_detail(node_id: int, offset: int = 0, limit: int = 50):
        node = state.graph.nodes.get(node_id)
        if node is None:
            raise HTTPException(status_code=404, detail=f"no node {node_id}")
        children = state.graph.children(node_id)
        return {
            **_node_brief(state, node_id),
            "parents": [_node_brief(state, p) for p in sorted(node.parents)],
            "children": [_node_brief(state, c) for c in children[offset:offset + limit]],
            "children_total": len(children),
            "resolution": _resolution_payload(state, node_id),
        }

    @app.put("/api/seeds/{node_id}")
    def put_seed(node_id: int, body: SeedBody):
        if body.label not in wiki_mod.SEED_LABELS:
            raise HTTPException(status_code=422, detail=f"unknown label {body.label!r}")
        try:
            state.mutate_seed(node_id, body.label)
        except wiki_mod.GraphError as e:
            raise HTTPException(status_code=404, detail=str(e))
        return {"ok": True, "node": _node_brief(state, node_id)}

    @app.delete("/api/seeds/{node_id}")
    def delete_seed(node_id: int):
        try:
            state.mutate_seed(node_id, None)
        except wiki_mod.GraphError as e:
            raise HTTPException(status_code=404, detail=str(e))
        return {"ok": True, "node": _node_brief(state, node_id)}

    @app.get("/api/seeds")
    def list_seeds():
        return {"seeds": [{"id": nid, "label": label, "title": state.graph.nodes[nid].title}
                          for nid, label in sorted(state.labeling.seeds.items())]}

    @app.get("/api/coverage")
    def coverage():
        report = wiki_mod.coverage_report(state.graph, state.labeling)
        conflicts = []
        for nid, res in sorted(state.labeling.resolved.items()):
            if res.provenance == "inherited" and len(res.competitors) > 1:
                conflicts.append({"id": nid, "title": state.graph.nodes[nid].title,
                                  "label": res.label, "distance": res.distance,
                                  "competitors": res.competitors})
        return {"label_counts": report.label_counts,
                "articles_total": report.articles_total,
                "articles_labeled": report.articles_labeled,
                "percent_labeled": report.percent_labeled,
                "conflicts": conflicts}

    @app.get("/api/labels/{node_id}")
    def node_label(node_id: int):
        if node_id not in state.graph.nodes:
            raise HTTPException(status_code=404, detail=f"no node {node_id}")
        return _resolution_payload(state, node_id)

    @app.post("/api/annotate")
    def annotate(body: TextBody):
        if state.pipeline is None:
            raise HTTPException(status_code=503, detail="no tagger checkpoints configured")
        return _span_payload(state.pipeline.annotate_text(body.text))

    @app.post("/api/link")
    def link(body: TextBody):
        from .tokenizer import tokenize

        sentences = tokenize(body.text) if body.text.strip() else []
        mentions = linker_mod.link_document(sentences, state.stats, state.index,
                                            state.labeling, state.disambiguator,
                                            state.linker_config)
        return {"mentions": [
            {"sentence": m.sentence, "start": m.start, "end": m.end, "label": m.label,
             "concept": m.concept, "concept_title": state.graph.nodes[m.concept].title,
             "ne_label": m.ne_label, "score": m.score}
            for m in mentions
        ]}

    return app
