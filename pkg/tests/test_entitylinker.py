import math

import numpy as np
import pytest

from wikiner.corpus import Token
from wikiner.entitylinker import (
    Disambiguator,
    DocumentContext,
    LabelCandidate,
    LinkerConfig,
    LinkerError,
    Sense,
    TreeNode,
    build_context,
    candidate_filter,
    context_relatedness,
    harvest_training_samples,
    is_numeric_label,
    link_document,
    link_probability,
    prior_sense_probability,
    relatedness,
    score_candidate,
    train_disambiguator,
)
from wikiner.wikigraph import AnchorStatistics, InlinkIndex, WikiGraph, WikiNode, propagate_labels


def make_stats(table):
    """table: label -> (occurrences, {concept: links})"""
    stats = AnchorStatistics()
    for label, (occ, senses) in table.items():
        e = stats.entry(label)
        e.senses = dict(senses)
        e.links = sum(senses.values())
        e.occurrences = max(occ, e.links)
    return stats


def make_index(total, sets):
    index = InlinkIndex(total_articles=total)
    for concept, members in sets.items():
        index.inlinks[concept] = set(members)
    return index


class TestLinkProbability:
    def test_direct_ratio(self):
        stats = make_stats({"warsaw": (20, {1: 5})})
        assert link_probability(stats, "warsaw") == pytest.approx(0.25)

    def test_never_linked(self):
        stats = AnchorStatistics()
        stats.entry("plain").occurrences = 7
        assert link_probability(stats, "plain") == 0.0

    def test_always_linked(self):
        stats = make_stats({"x": (3, {1: 3})})
        assert link_probability(stats, "x") == 1.0

    def test_unseen_label_zero(self):
        assert link_probability(AnchorStatistics(), "ghost") == 0.0


class TestPriorSenseProbability:
    def test_single_sense(self):
        stats = make_stats({"x": (1, {1: 4})})
        assert prior_sense_probability(stats, "x", 1) == 1.0

    def test_ratio(self):
        stats = make_stats({"x": (4, {1: 3, 2: 1})})
        assert prior_sense_probability(stats, "x", 1) == pytest.approx(0.75)
        assert prior_sense_probability(stats, "x", 2) == pytest.approx(0.25)

    def test_zero_for_unlinked_concept(self):
        stats = make_stats({"x": (4, {1: 3, 2: 1})})
        assert prior_sense_probability(stats, "x", 99) == 0.0

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            senses = {c: int(rng.integers(1, 9)) for c in range(int(rng.integers(1, 6)))}
            stats = make_stats({"l": (50, senses)})
            total = sum(prior_sense_probability(stats, "l", c) for c in senses)
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_no_senses_is_error(self):
        with pytest.raises(LinkerError):
            prior_sense_probability(AnchorStatistics(), "ghost", 1)


class TestRelatedness:
    def test_identity_is_one(self):
        index = make_index(1000, {1: range(40)})
        assert relatedness(index, 1, 1) == 1.0

    def test_disjoint_is_zero(self):
        index = make_index(1000, {1: range(0, 10), 2: range(50, 60)})
        assert relatedness(index, 1, 2) == 0.0

    def test_empty_side_is_zero(self):
        index = make_index(1000, {1: range(5), 2: []})
        assert relatedness(index, 1, 2) == 0.0

    def test_reference_fixture(self):
        # |A|=100, |B|=50, |A ∩ B|=10, |W|=10^6
        index = make_index(10 ** 6, {1: range(0, 100), 2: range(90, 140)})
        assert len(index.get(1) & index.get(2)) == 10
        value = relatedness(index, 1, 2)
        oracle = 1 - (math.log(100) - math.log(10)) / (math.log(10 ** 6) - math.log(50))
        assert value == pytest.approx(oracle, abs=1e-12)
        assert round(value, 4) == 0.7675

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = set(map(int, rng.integers(0, 200, size=rng.integers(1, 50))))
            b = set(map(int, rng.integers(0, 200, size=rng.integers(1, 50))))
            index = make_index(10 ** 4, {1: a, 2: b})
            assert relatedness(index, 1, 2) == relatedness(index, 2, 1)

    def test_clamped_to_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = set(map(int, rng.integers(0, 60, size=rng.integers(1, 40))))
            b = set(map(int, rng.integers(0, 60, size=rng.integers(1, 40))))
            index = make_index(100, {1: a, 2: b})
            assert 0.0 <= relatedness(index, 1, 2) <= 1.0


def cand(label, senses, sentence=0, start=0, end=1, link_prob=1.0):
    return LabelCandidate(label=label, sentence=sentence, start=start, end=end,
                          senses=senses, link_prob=link_prob)


class TestDocumentContext:
    def test_single_concept_full_quality(self):
        # one unambiguous label with ps=1: rel(c,c)=1 so q=1 and Q=1
        index = make_index(1000, {1: range(10)})
        ctx = build_context([cand("a", [Sense(1, 1.0)])], AnchorStatistics(), index)
        assert ctx.qualities[1] == pytest.approx(1.0)
        assert ctx.quality == pytest.approx(1.0)

    def test_hand_computed_two_concepts(self):
        rel_table = {(1, 1): 1.0, (2, 2): 1.0, (1, 2): 0.5, (2, 1): 0.5,
                     (1, 3): 0.0, (3, 1): 0.0, (2, 3): 0.0, (3, 2): 0.0}
        rel = lambda a, b: rel_table[(a, b)]
        candidates = [
            cand("alpha", [Sense(1, 0.6)]),
            cand("beta", [Sense(2, 1.0)]),
            cand("gamma", [Sense(1, 0.2), Sense(3, 0.8)]),  # ambiguous, refers to 1 too
        ]
        ctx = build_context(candidates, AnchorStatistics(), None, rel=rel)
        # q(1) = mean ps over labels referring to 1 = (0.6 + 0.2)/2 = 0.4,
        #        times mean rel to C = (1.0 + 0.5)/2 = 0.75 -> 0.3
        # q(2) = 1.0 * (0.5 + 1.0)/2 = 0.75;  Q = 1.05
        assert ctx.concepts == [1, 2]
        assert ctx.qualities[1] == pytest.approx(0.3, abs=1e-12)
        assert ctx.qualities[2] == pytest.approx(0.75, abs=1e-12)
        assert ctx.quality == pytest.approx(1.05, abs=1e-12)

    def test_empty_candidates(self):
        index = make_index(10, {})
        ctx = build_context([], AnchorStatistics(), index)
        assert ctx.quality == 0.0
        assert ctx.concepts == []

    def test_no_unambiguous_concepts(self):
        index = make_index(10, {})
        ctx = build_context([cand("x", [Sense(1, 0.5), Sense(2, 0.5)])],
                            AnchorStatistics(), index)
        assert ctx.quality == 0.0


class TestContextRelatedness:
    def test_single_concept_reduces_to_rel(self):
        ctx = DocumentContext(concepts=[1], qualities={1: 0.37})
        rel = lambda a, b: 0.42
        assert context_relatedness(ctx, 9, rel) == pytest.approx(0.42)

    def test_equal_qualities_plain_average(self):
        ctx = DocumentContext(concepts=[1, 2], qualities={1: 0.5, 2: 0.5})
        rel_table = {(9, 1): 0.8, (9, 2): 0.2}
        rel = lambda a, b: rel_table[(a, b)]
        assert context_relatedness(ctx, 9, rel) == pytest.approx(0.5)

    def test_weighted_hand_fixture(self):
        # q = {0.2, 0.8}, rel = {1.0, 0.5} -> (0.2*1.0 + 0.8*0.5) / 1.0 = 0.6
        ctx = DocumentContext(concepts=[1, 2], qualities={1: 0.2, 2: 0.8})
        rel_table = {(9, 1): 1.0, (9, 2): 0.5}
        rel = lambda a, b: rel_table[(a, b)]
        assert context_relatedness(ctx, 9, rel) == pytest.approx(0.6, abs=1e-12)

    def test_empty_context_zero(self):
        assert context_relatedness(DocumentContext(), 9, lambda a, b: 1.0) == 0.0


class TestCandidateFilter:
    PERSONS = ("john smith", "maria")
    COMMONS = ("the", "city", "old", "town")

    def run(self, candidates):
        return candidate_filter(candidates, self.PERSONS, self.COMMONS)

    def test_rule1_single_character(self):
        assert self.run([cand("A", [Sense(1, 1.0, "orgName")])]) == []

    def test_rule2_roman_numeral(self):
        assert self.run([cand("III", [Sense(1, 1.0, "orgName")])]) == []
        assert self.run([cand("XIV", [Sense(1, 1.0, "orgName")])]) == []

    def test_rule2_arabic_numeral(self):
        assert self.run([cand("2019", [Sense(1, 1.0, "date")])]) == []
        assert self.run([cand("12 34", [Sense(1, 1.0, "date")])]) == []

    def test_rule3_person_name_mismatch_pruned(self):
        c = cand("John Smith", [Sense(1, 0.6, "geogName"), Sense(2, 0.4, "persName")])
        kept = self.run([c])
        assert len(kept) == 1
        assert [s.concept for s in kept[0].senses] == [2]

    def test_rule3_drops_when_no_person_sense(self):
        c = cand("Maria", [Sense(1, 1.0, "geogName")])
        assert self.run([c]) == []

    def test_rule3_full_label_match_only(self):
        c = cand("John Smith Bridge", [Sense(1, 1.0, "geogName")])
        assert len(self.run([c])) == 1

    def test_rule4_lowercase_common_words(self):
        assert self.run([cand("the city", [Sense(1, 1.0, "placeName")])]) == []
        assert self.run([cand("old town 7", [Sense(1, 1.0, "placeName")])]) == []

    def test_rule4_requires_lowercase(self):
        kept = self.run([cand("The City", [Sense(1, 1.0, "placeName")])])
        assert len(kept) == 1

    def test_untouched_candidate_passes(self):
        kept = self.run([cand("Acme Corп", [Sense(1, 1.0, "orgName")])])
        assert len(kept) == 1

    def test_is_numeric_label(self):
        assert is_numeric_label("MMXIX")
        assert is_numeric_label("7")
        assert not is_numeric_label("Boeing 747")
        assert not is_numeric_label("IC")  # not a standard subtractive form


class TestDisambiguator:
    def test_linearly_separable_perfect_fit(self):
        rng = np.random.default_rng(3)
        samples = []
        for _ in range(60):
            x = rng.random(3)
            samples.append((tuple(x), bool(x[0] > 0.5)))
        model = train_disambiguator(samples, max_depth=4)
        assert all((model.predict(f) >= 0.5) == y for f, y in samples)

    def test_depth_zero_constant_base_rate(self):
        samples = [((0.1, 0.0, 0.0), True), ((0.9, 0.0, 0.0), False),
                   ((0.4, 0.0, 0.0), True), ((0.6, 0.0, 0.0), True)]
        model = train_disambiguator(samples, max_depth=0)
        for f, _ in samples:
            assert model.predict(f) == pytest.approx(0.75)

    def test_all_positive_leaves_one(self):
        samples = [((float(i), 0.0, 0.0), True) for i in range(5)]
        model = train_disambiguator(samples, max_depth=3)
        assert all(model.predict(f) == 1.0 for f, _ in samples)

    def test_empty_samples_rejected(self):
        with pytest.raises(LinkerError):
            train_disambiguator([])

    def test_unlimited_depth_memorizes_consistent_data(self):
        rng = np.random.default_rng(4)
        feats = rng.random((40, 3))
        labels = rng.random(40) > 0.5
        samples = [(tuple(f), bool(y)) for f, y in zip(feats, labels)]
        model = train_disambiguator(samples, max_depth=None)
        assert all((model.predict(f) >= 0.5) == y for f, y in samples)

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(5)
        samples = [(tuple(rng.random(3)), bool(rng.random() > 0.3)) for _ in range(50)]
        model = train_disambiguator(samples, max_depth=3)
        for _ in range(100):
            assert 0.0 <= model.predict(tuple(rng.random(3))) <= 1.0

    def test_manual_tree_walk(self):
        tree = TreeNode(probability=0.5, feature=0, threshold=0.5,
                        left=TreeNode(probability=0.2),
                        right=TreeNode(probability=0.5, feature=1, threshold=0.3,
                                       left=TreeNode(probability=0.6),
                                       right=TreeNode(probability=0.9)))
        model = Disambiguator(tree)
        assert model.predict((0.4, 0.9, 0.0)) == 0.2   # left at root
        assert model.predict((0.8, 0.1, 0.0)) == 0.6   # right, then left
        assert model.predict((0.8, 0.7, 0.0)) == 0.9   # right, then right

    def test_json_round_trip(self):
        samples = [((0.1, 0.2, 0.3), False), ((0.9, 0.8, 0.7), True)]
        model = train_disambiguator(samples, max_depth=2)
        clone = Disambiguator.from_json(model.to_json())
        rng = np.random.default_rng(6)
        for _ in range(20):
            f = tuple(rng.random(3))
            assert clone.predict(f) == model.predict(f)

    def test_score_candidate_depth_zero(self):
        stats = make_stats({"x": (4, {1: 3, 2: 1})})
        ctx = DocumentContext(concepts=[1], qualities={1: 1.0})
        d = Disambiguator.constant(0.7)
        assert score_candidate(d, ctx, stats, "x", 1, lambda a, b: 0.5) == 0.7


def linked_world():
    """3 concepts: Warsaw the city (placeName), a band also called Warsaw
    (resolved none), and Vistula (geogName) anchoring the context."""
    graph = WikiGraph()
    graph.add(WikiNode(1, "Warsaw", "article", {50}))
    graph.add(WikiNode(2, "Warsaw (band)", "article", {51}))
    graph.add(WikiNode(3, "Vistula", "article", {52}))
    graph.add(WikiNode(50, "Cities", "category"))
    graph.add(WikiNode(51, "Music groups", "category"))
    graph.add(WikiNode(52, "Rivers", "category"))
    labeling = propagate_labels(graph, {50: "placeName", 51: "none", 52: "geogName"})
    stats = make_stats({
        "Warsaw": (20, {1: 9, 2: 1}),
        "Vistula": (6, {3: 6}),
        "rare": (1000, {1: 1}),  # p(l) = 0.001, under the default threshold
    })
    # city shares inlinks with the river; the band is an island
    index = make_index(10 ** 4, {1: range(0, 100), 2: range(500, 520), 3: range(50, 150)})
    return graph, stats, index, labeling


def sent(*words):
    return [Token(w, lemma=w.lower()) for w in words]


class TestLinkDocument:
    def test_unambiguous_anchor_emits_mention(self):
        _, stats, index, labeling = linked_world()
        mentions = link_document([sent("the", "Vistula", "flows")], stats, index, labeling)
        assert len(mentions) == 1
        m = mentions[0]
        assert (m.start, m.end, m.concept, m.ne_label) == (1, 2, 3, "geogName")

    def test_context_disambiguates_toward_city(self):
        _, stats, index, labeling = linked_world()
        mentions = link_document([sent("Warsaw", "lies", "on", "the", "Vistula")],
                                 stats, index, labeling)
        warsaw = [m for m in mentions if m.label == "Warsaw"]
        assert len(warsaw) == 1
        assert warsaw[0].concept == 1
        assert warsaw[0].ne_label == "placeName"

    def test_hand_set_scores_pick_higher_average(self):
        # disambiguator: ps <= 0.5 -> 0.4, ps > 0.5 -> 0.9; no context so relC = 0;
        # averages are (0.9 + 0)/2 = 0.45 for the city vs (0.4 + 0)/2 = 0.2
        _, stats, index, labeling = linked_world()
        tree = TreeNode(probability=0.5, feature=0, threshold=0.5,
                        left=TreeNode(probability=0.4), right=TreeNode(probability=0.9))
        mentions = link_document([sent("Warsaw", "played")], stats, index, labeling,
                                 disambiguator=Disambiguator(tree))
        assert len(mentions) == 1
        assert mentions[0].concept == 1
        assert mentions[0].score == pytest.approx(0.45)

    def test_best_concept_none_no_mention(self):
        graph = WikiGraph()
        graph.add(WikiNode(2, "Warsaw (band)", "article", {51}))
        graph.add(WikiNode(51, "Music groups", "category"))
        labeling = propagate_labels(graph, {51: "none"})
        stats = make_stats({"Warsaw": (4, {2: 4})})
        index = make_index(100, {2: range(10)})
        mentions = link_document([sent("Warsaw", "played")], stats, index, labeling)
        assert mentions == []

    def test_below_threshold_dropped(self):
        _, stats, index, labeling = linked_world()
        mentions = link_document([sent("rare", "word")], stats, index, labeling,
                                 config=LinkerConfig(p_threshold=0.01))
        assert mentions == []

    def test_filtered_label_never_linked(self):
        _, stats, index, labeling = linked_world()
        cfg = LinkerConfig(person_names=frozenset({"warsaw"}))
        mentions = link_document([sent("Warsaw", "spoke")], stats, index, labeling, config=cfg)
        assert mentions == []  # person-name label, no persName sense

    def test_spans_never_overlap(self):
        _, stats, index, labeling = linked_world()
        mentions = link_document([sent("Warsaw", "Warsaw", "Vistula")], stats, index, labeling)
        spans = sorted((m.start, m.end) for m in mentions)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_argmax_stable_under_weaker_candidates(self):
        # an extra sense that scores lower never changes the winner
        _, stats, index, labeling = linked_world()
        base = link_document([sent("Warsaw", "lies", "on", "the", "Vistula")],
                             stats, index, labeling)
        stats.get("Warsaw").senses[99] = 1  # unknown concept, rel 0, unresolved
        stats.get("Warsaw").links += 1
        stats.get("Warsaw").occurrences += 1
        again = link_document([sent("Warsaw", "lies", "on", "the", "Vistula")],
                              stats, index, labeling)
        assert [m.concept for m in again if m.label == "Warsaw"] == \
               [m.concept for m in base if m.label == "Warsaw"]


class TestHarvest:
    def records(self):
        return [
            {"id": 1, "title": "A", "ns": 0,
             "links": [{"target": "X", "anchor": "amb"},
                       {"target": "C", "anchor": "ctx"}]},
            {"id": 2, "title": "B", "ns": 0,
             "links": [{"target": "Y", "anchor": "amb"},
                       {"target": "C", "anchor": "ctx"}]},
            {"id": 10, "title": "X", "ns": 0, "links": []},
            {"id": 11, "title": "Y", "ns": 0, "links": []},
            {"id": 12, "title": "C", "ns": 0, "links": []},
        ]

    def test_ambiguous_anchors_yield_pairs(self):
        from wikiner.wikigraph import import_dump

        graph, stats, index, _ = import_dump(self.records())
        train, val = harvest_training_samples(self.records(), stats, index, graph,
                                              validation_fraction=0.25, seed=1)
        samples = train + val
        # anchor "amb" has two senses and two linked occurrences -> 4 samples
        assert len(samples) == 4
        assert sum(1 for _, y in samples if y) == 2
        for (ps, rel_c, quality), _ in samples:
            assert 0.0 <= ps <= 1.0 and 0.0 <= rel_c <= 1.0 and quality >= 0.0

    def test_split_deterministic(self):
        from wikiner.wikigraph import import_dump

        graph, stats, index, _ = import_dump(self.records())
        a = harvest_training_samples(self.records(), stats, index, graph, seed=5)
        b = harvest_training_samples(self.records(), stats, index, graph, seed=5)
        assert a == b
