"""Acceptance suite: one criterion per test, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
print.  Every tolerance is pinned here; nothing is deferred.
"""

import itertools
import math
import time

import numpy as np
import pytest

from synthworld import (
    CITIES,
    build_wiki_records,
    function_word_embeddings,
    generate_corpus,
    linker_config,
    seed_labels,
)
from wikiner import neural as nm
from wikiner.corpus import Token
from wikiner.crf import CrfModel, log_partition, nll_gradient, viterbi
from wikiner.entitylinker import (
    DocumentContext,
    LabelCandidate,
    Sense,
    build_context,
    candidate_filter,
    context_relatedness,
    harvest_training_samples,
    prior_sense_probability,
    relatedness,
    train_disambiguator,
)
from wikiner.pipeline import (
    FeaturePipeline,
    Pipeline,
    PipelineConfig,
    build_instances,
    final_score,
    tag_vocabulary,
    tags_exact_f1,
)
from wikiner.wikigraph import (
    AnchorStatistics,
    InlinkIndex,
    WikiGraph,
    WikiNode,
    import_dump,
    propagate_labels,
    save_snapshot,
)


def report(criterion, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# Criterion 1: CRF oracle equivalence
# ---------------------------------------------------------------------------

def _enumerate_paths(em, model):
    n, k = em.shape
    for path in itertools.product(range(k), repeat=n):
        s = model.start[path[0]] + em[0, path[0]] + model.stop[path[-1]]
        for t in range(1, n):
            s += model.transitions[path[t - 1], path[t]] + em[t, path[t]]
        yield path, s


def test_crf_oracle_equivalence():
    rng = np.random.default_rng(2024)
    started = time.monotonic()
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        model = CrfModel(tags=tuple(f"t{i}" for i in range(k)),
                         transitions=rng.normal(size=(k, k)),
                         start=rng.normal(size=k), stop=rng.normal(size=k))
        em = rng.normal(size=(n, k))
        scores = dict(_enumerate_paths(em, model))
        oracle_logz = math.log(sum(math.exp(s) for s in scores.values()))
        oracle_best = max(scores.values())
        got_logz = log_partition(em, model)
        tags, got_best = viterbi(em, model)
        got_path = tuple(model.tags.index(t) for t in tags)
        worst = max(worst, abs(got_logz - oracle_logz), abs(got_best - oracle_best))
        assert abs(got_logz - oracle_logz) < 1e-8
        assert abs(got_best - oracle_best) < 1e-8
        assert scores[got_path] == pytest.approx(oracle_best, abs=1e-8)
    elapsed = time.monotonic() - started
    report("CRF oracle equivalence: 200 instances within 1e-8",
           elapsed < 10.0, f"max err {worst:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 2: gradient checks
# ---------------------------------------------------------------------------

def _rel_err(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def test_crf_gradient_check():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        k = 3
        model = CrfModel(tags=("a", "b", "c"),
                         transitions=rng.normal(size=(k, k)) * 0.5,
                         start=rng.normal(size=k) * 0.5, stop=rng.normal(size=k) * 0.5)
        em = rng.normal(size=(4, k)) * 0.5
        gold = [model.tags[i] for i in rng.integers(0, k, size=4)]
        grads = nll_gradient(model, em, gold)
        eps = 1e-5

        def fd_pair(read, write):
            write(eps)
            up = nll_gradient(model, em, gold).loss
            write(-2 * eps)
            down = nll_gradient(model, em, gold).loss
            write(eps)
            return (up - down) / (2 * eps)

        for (i, j), g in np.ndenumerate(grads.d_emissions):
            fd = fd_pair(None, lambda d, i=i, j=j: em.__setitem__((i, j), em[i, j] + d))
            worst = max(worst, abs(g - fd))
            assert _rel_err(g, fd) < 1e-4 or abs(g - fd) < 1e-8
        for arr, grad in ((model.transitions, grads.d_transitions),
                          (model.start, grads.d_start), (model.stop, grads.d_stop)):
            for idx, g in np.ndenumerate(grad):
                fd = fd_pair(None, lambda d, idx=idx: arr.__setitem__(idx, arr[idx] + d))
                worst = max(worst, abs(g - fd))
                assert _rel_err(g, fd) < 1e-4 or abs(g - fd) < 1e-8
    report("CRF NLL gradients match central differences within 1e-4 relative",
           True, f"max abs diff {worst:.2e}")


def _tiny_tagger():
    cfg = nm.TaggerConfig(layers=2, hidden=3, dropout=0.0, epochs=1, batch_size=2,
                          char_encoder=nm.CharEncoderConfig(kind="conv", char_dim=3,
                                                            conv_filters=4),
                          features=("capitalization",))
    rng = np.random.default_rng(55)
    emb = nm.EmbeddingTable({w: rng.normal(size=5) for w in ["anna", "likes"]}, dim=5)
    char_index = nm.build_char_index([[Token(w) for w in ["Anna", "likes", "Xq"]]])
    return nm.init_tagger(cfg, ("O", "B-persName", "B-placeName"),
                          {"capitalization": ("upper", "lower", "title", "other")},
                          char_index, seed=4, embedding=emb)


def test_neural_stack_gradient_check():
    model = _tiny_tagger()
    inst = nm.Instance(
        tokens=[Token("Anna", lemma="anna"), Token("likes", lemma="likes"),
                Token("Xq", lemma="xq")],
        feature_labels={"capitalization": ["title", "lower", "title"]},
        gold_tags=["B-persName", "O", "B-placeName"])
    _, grads = nm.sentence_loss_and_grads(model, inst, train=False)
    eps = 1e-5
    worst = 0.0
    checked = 0
    for key, arr in model.params.items():
        flat = arr.ravel()
        gflat = grads[key].ravel()
        for pos in range(0, flat.size, max(1, flat.size // 8)):
            orig = flat[pos]
            flat[pos] = orig + eps
            up, _ = nm.sentence_loss_and_grads(model, inst, train=False,
                                               grads=nm.zero_grads(model))
            flat[pos] = orig - eps
            down, _ = nm.sentence_loss_and_grads(model, inst, train=False,
                                                 grads=nm.zero_grads(model))
            flat[pos] = orig
            fd = (up - down) / (2 * eps)
            checked += 1
            worst = max(worst, abs(gflat[pos] - fd))
            assert _rel_err(gflat[pos], fd) < 1e-3 or abs(gflat[pos] - fd) < 1e-8, (key, pos)
    report("full neural-stack gradients match central differences within 1e-3 relative",
           True, f"{checked} coordinates, max abs diff {worst:.2e}")


# ---------------------------------------------------------------------------
# Criterion 3: entity-linking math
# ---------------------------------------------------------------------------

def test_entity_linking_math():
    rng = np.random.default_rng(9)
    # sense priors sum to 1 per label
    for _ in range(40):
        stats = AnchorStatistics()
        entry = stats.entry("l")
        entry.senses = {c: int(rng.integers(1, 9)) for c in range(int(rng.integers(1, 7)))}
        entry.links = sum(entry.senses.values())
        entry.occurrences = entry.links
        total = sum(prior_sense_probability(stats, "l", c) for c in entry.senses)
        assert total == pytest.approx(1.0, abs=1e-12)

    # relatedness: identity, disjoint, reference fixture
    index = InlinkIndex(total_articles=10 ** 6)
    index.inlinks = {1: set(range(100)), 2: set(range(90, 140)), 3: set(range(40)),
                     4: set(range(500, 540))}
    assert relatedness(index, 1, 1) == 1.0
    assert relatedness(index, 3, 4) == 0.0
    fixture = relatedness(index, 1, 2)  # |A|=100 |B|=50 |A∩B|=10 |W|=1e6
    oracle = 1 - (math.log(100) - math.log(10)) / (math.log(10 ** 6) - math.log(50))
    assert abs(fixture - oracle) < 1e-6
    assert round(fixture, 4) == 0.7675

    # concept/context quality against hand arithmetic
    rel_table = {(1, 1): 1.0, (2, 2): 1.0, (1, 2): 0.5, (2, 1): 0.5,
                 (1, 3): 0.0, (3, 1): 0.0, (2, 3): 0.0, (3, 2): 0.0}
    rel = lambda a, b: rel_table[(a, b)]
    candidates = [
        LabelCandidate("alpha", 0, 0, 1, [Sense(1, 0.6)], 1.0),
        LabelCandidate("beta", 0, 1, 2, [Sense(2, 1.0)], 1.0),
        LabelCandidate("gamma", 0, 2, 3, [Sense(1, 0.2), Sense(3, 0.8)], 1.0),
    ]
    ctx = build_context(candidates, AnchorStatistics(), None, rel=rel)
    assert abs(ctx.qualities[1] - 0.3) < 1e-9    # ((0.6+0.2)/2) * ((1+0.5)/2)
    assert abs(ctx.qualities[2] - 0.75) < 1e-9   # 1.0 * ((0.5+1)/2)
    assert abs(ctx.quality - 1.05) < 1e-9

    # weighted context relatedness
    ctx2 = DocumentContext(concepts=[1, 2], qualities={1: 0.2, 2: 0.8})
    rel2 = lambda a, b: {(9, 1): 1.0, (9, 2): 0.5}[(a, b)]
    assert abs(context_relatedness(ctx2, 9, rel2) - 0.6) < 1e-9
    report("entity-linking math: sense priors sum to 1; relatedness identity/disjoint/"
           "fixture; quality formulas to 1e-9", True,
           f"fixture rel {fixture:.6f}")


# ---------------------------------------------------------------------------
# Criterion 4: propagation oracle
# ---------------------------------------------------------------------------

LABEL_RANK = {"persName": 0, "orgName": 1, "geogName": 2, "placeName": 3,
              "date": 4, "time": 5, "none": 6}


def _oracle_resolve(graph, seeds, nid):
    if nid in seeds:
        return seeds[nid], 0, {seeds[nid]: 1}
    dist = {nid: 0}
    counts = {nid: 1}
    level = [nid]
    d = 0
    while level:
        nxt = []
        for u in level:
            for p in sorted(graph.nodes[u].parents):
                if p not in dist:
                    dist[p] = d + 1
                    counts[p] = 0
                    nxt.append(p)
                if dist[p] == d + 1:
                    counts[p] += counts[u]
        d += 1
        hits = [u for u in nxt if u in seeds]
        if hits:
            tally = {}
            for u in hits:
                tally[seeds[u]] = tally.get(seeds[u], 0) + counts[u]
            winner = min(tally, key=lambda lab: (-tally[lab], LABEL_RANK[lab]))
            return winner, d, tally
        level = [u for u in nxt if u not in seeds]
    return None, None, {}


def _random_graph(rng, n, avg_degree=2.5, seed_frac=0.12):
    graph = WikiGraph()
    p = min(0.9, avg_degree / max(n - 1, 1))
    for nid in range(n):
        parents = {int(x) for x in rng.choice(n, size=rng.poisson(avg_degree), replace=True)
                   if int(x) != nid} if n > 1 else set()
        _ = p
        graph.add(WikiNode(nid, f"n{nid}", "article" if rng.random() < 0.5 else "category",
                           parents))
    labels = list(LABEL_RANK)
    seeds = {nid: labels[rng.integers(len(labels))]
             for nid in range(n) if rng.random() < seed_frac}
    return graph, seeds


def test_propagation_oracle():
    rng = np.random.default_rng(777)
    sizes = [int(rng.integers(10, 150)) for _ in range(40)] + \
            [int(rng.integers(150, 500)) for _ in range(8)] + [1000, 1000]
    checked = 0
    for n in sizes:
        graph, seeds = _random_graph(rng, n)
        labeling = propagate_labels(graph, seeds)
        for nid in graph.nodes:
            label, dist, tally = _oracle_resolve(graph, seeds, nid)
            res = labeling.resolved.get(nid)
            if label is None and nid not in seeds:
                assert res is None
                continue
            expected = None if label == "none" else label
            assert res is not None and res.label == expected
            assert res.distance == dist
            assert res.competitors == tally
            checked += 1

    # two-hop label beats three-hop label regardless of category order
    fig = WikiGraph()
    for nid, title, parents in [(0, "article", {1, 10}), (1, "A1", {2}), (2, "A2", set()),
                                (10, "B1", {11}), (11, "B2", {12}), (12, "B3", set())]:
        fig.add(WikiNode(nid, title, "category" if nid else "article", parents))
    labeling = propagate_labels(fig, {2: "geogName", 12: "persName"})
    res = labeling.resolved[0]
    assert res.label == "geogName" and res.distance == 2
    report("propagation matches brute-force oracle on 50 random graphs; "
           "shorter path beats closer-ranked label", True, f"{checked} resolutions checked")


# ---------------------------------------------------------------------------
# Criterion 5: heuristic filters
# ---------------------------------------------------------------------------

def test_heuristic_filters():
    persons = ("john smith", "maria")
    commons = ("the", "old", "town")
    table = [
        # (label, senses, survives, surviving concepts)
        ("A", [Sense(1, 1.0, "orgName")], False, []),                    # rule 1
        ("III", [Sense(1, 1.0, "orgName")], False, []),                  # rule 2 roman
        ("2019", [Sense(1, 1.0, "date")], False, []),                    # rule 2 arabic
        ("John Smith", [Sense(1, 0.6, "geogName"), Sense(2, 0.4, "persName")],
         True, [2]),                                                     # rule 3 prunes
        ("Maria", [Sense(3, 1.0, "geogName")], False, []),               # rule 3 drops
        ("the old town", [Sense(4, 1.0, "placeName")], False, []),       # rule 4
        ("old town 7", [Sense(4, 1.0, "placeName")], False, []),         # rule 4 with digits
        ("The Old Town", [Sense(4, 1.0, "placeName")], True, [4]),       # casing defeats rule 4
        ("Belvet", [Sense(5, 1.0, "placeName")], True, [5]),             # untouched
    ]
    cands = [LabelCandidate(label, 0, 0, 1, senses, 1.0) for label, senses, _, _ in table]
    kept = candidate_filter(cands, persons, commons)
    kept_by_label = {c.label: [s.concept for s in c.senses] for c in kept}
    for label, _, survives, concepts in table:
        if survives:
            assert kept_by_label.get(label) == concepts, label
        else:
            assert label not in kept_by_label, label
    report("heuristic pre-filters: all four rules behave per the table", True,
           f"{len(table)} rows")


# ---------------------------------------------------------------------------
# Criterion 6 and 8: toy end-to-end, determinism
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def synth_world():
    records = build_wiki_records()
    graph, stats, index, _ = import_dump(records)
    seeds = seed_labels(graph)
    labeling = propagate_labels(graph, seeds)
    train_samples, _ = harvest_training_samples(records, stats, index, graph, seed=0)
    disamb = train_disambiguator(train_samples, max_depth=4)
    return {"graph": graph, "stats": stats, "index": index, "seeds": seeds,
            "labeling": labeling, "disambiguator": disamb}


def _train_variant(world, features, seed=0):
    linker_res = None
    if "wikipedia" in features:
        linker_res = {"stats": world["stats"], "index": world["index"],
                      "labeling": world["labeling"],
                      "disambiguator": world["disambiguator"], "config": linker_config()}
    fp = FeaturePipeline(list(features), {}, linker_res)
    train_doc = generate_corpus(200, seed=11)
    held_doc = generate_corpus(60, seed=99)
    cfg = nm.TaggerConfig(layers=1, hidden=24, dropout=0.0, epochs=25, batch_size=16,
                          learning_rate=0.01,
                          char_encoder=nm.CharEncoderConfig(kind="none"),
                          features=tuple(features))
    tags = tag_vocabulary([train_doc], "main")
    train_inst = build_instances([train_doc], fp)
    held_inst = build_instances([held_doc], fp)
    char_index = nm.build_char_index([i.tokens for i in train_inst])
    model = nm.init_tagger(cfg, tags, fp.vocabularies, char_index, seed=seed,
                           embedding=function_word_embeddings())
    losses = nm.train_tagger(train_inst, model, seed=seed)
    train_f1 = tags_exact_f1([nm.predict_tags(model, i) for i in train_inst],
                             [i.gold_tags for i in train_inst])
    held_f1 = tags_exact_f1([nm.predict_tags(model, i) for i in held_inst],
                            [i.gold_tags for i in held_inst])
    return model, losses, train_f1, held_f1


@pytest.fixture(scope="module")
def trained_variants(synth_world):
    baseline = _train_variant(synth_world, ())
    featured = _train_variant(synth_world, ("wikipedia",))
    return {"baseline": baseline, "featured": featured}


def test_toy_end_to_end(trained_variants):
    _, _, base_train, base_held = trained_variants["baseline"]
    _, _, feat_train, feat_held = trained_variants["featured"]
    ok = feat_train >= 95.0 and feat_held >= 80.0 and (feat_held - base_held) > 2.0
    report("toy end-to-end: featured tagger train F1 >= 0.95, held-out >= 0.80, "
           "linker margin > 2 points", ok,
           f"train {feat_train:.2f}, held-out {feat_held:.2f}, "
           f"baseline held-out {base_held:.2f}, margin {feat_held - base_held:.2f}")


def test_scoring_formula():
    a = final_score(86.2, 90.5)
    b = final_score(82.2, 85.9)
    ok = abs(a - 89.64) < 1e-9 and abs(b - 85.16) < 1e-9 \
        and round(a, 1) == 89.6 and abs(b - 85.1) < 0.1
    report("scoring formula arithmetic: "
           "(86.2, 90.5) -> 89.64; (82.2, 85.9) -> 85.16", ok, f"{a:.4f}, {b:.4f}")


def test_determinism(synth_world, trained_variants, tmp_path):
    world = synth_world
    # identical loss trajectories for identical seeds
    linker_res = {"stats": world["stats"], "index": world["index"],
                  "labeling": world["labeling"],
                  "disambiguator": world["disambiguator"], "config": linker_config()}
    fp = FeaturePipeline(["wikipedia"], {}, linker_res)
    doc = generate_corpus(40, seed=3)
    insts = build_instances([doc], fp)
    tags = tag_vocabulary([doc], "main")
    char_index = nm.build_char_index([i.tokens for i in insts])
    cfg = nm.TaggerConfig(layers=1, hidden=8, dropout=0.25, epochs=4, batch_size=8,
                          char_encoder=nm.CharEncoderConfig(kind="none"),
                          features=("wikipedia",))
    runs = []
    for _ in range(2):
        model = nm.init_tagger(cfg, tags, fp.vocabularies, char_index, seed=21,
                               embedding=function_word_embeddings())
        runs.append(nm.train_tagger(insts, model, seed=21))
    losses_identical = runs[0] == runs[1]

    # propagation is bit-stable
    l1 = propagate_labels(world["graph"], world["seeds"])
    l2 = propagate_labels(world["graph"], world["seeds"])
    propagation_stable = l1.resolved == l2.resolved

    # annotation through the full pipeline is bit-stable
    snap = tmp_path / "snapshot.bin"
    save_snapshot(snap, world["graph"], world["stats"], world["index"], world["seeds"],
                  world["disambiguator"].to_json())
    ckpt = tmp_path / "main.model"
    trained_variants["featured"][0].save(ckpt)
    gaz = tmp_path / "settlements.tsv"
    gaz.write_text("".join(f"{c.lower()}\tsettlement\n" for c in CITIES), encoding="utf-8")
    derived = tmp_path / "derived.tsv"
    derived.write_text("vormacki\tvormak\tadjective\n", encoding="utf-8")
    cfg_file = tmp_path / "pipeline.yaml"
    cfg_file.write_text(
        "features: [wikipedia, settlements]\n"
        f"snapshot: {snap}\n"
        f"main_checkpoint: {ckpt}\n"
        f"derived_lexicon: {derived}\n"
        "gazetteers:\n"
        f"  settlements:\n    path: {gaz}\n    mode: lemma\n",
        encoding="utf-8")
    text = f"ona kupiła {CITIES[2]} wczoraj. pan Anora mówił vormacki głośno."

    def spans_of(pipeline):
        doc = pipeline.annotate_text(text)
        return [(s_i, s.start, s.end, s.layer, s.category.label)
                for s_i, sent in enumerate(doc.sentences) for s in sent.spans]

    p1 = Pipeline(PipelineConfig.load(cfg_file))
    first = spans_of(p1)
    second = spans_of(p1)
    third = spans_of(Pipeline(PipelineConfig.load(cfg_file)))
    annotation_stable = first == second == third
    city_found = any(label == "placeName" and (start, end) == (2, 3)
                     for (_s, start, end, _l, label) in first)
    derived_found = any(label == "placeName#derived" for (_s, _a, _b, _l, label) in first)

    ok = losses_identical and propagation_stable and annotation_stable \
        and city_found and derived_found
    report("determinism: identical loss trajectories, bit-stable propagation "
           "and annotation", ok,
           f"losses equal={losses_identical}, propagation={propagation_stable}, "
           f"annotation={annotation_stable}, city span={city_found}, "
           f"derived span={derived_found}")
