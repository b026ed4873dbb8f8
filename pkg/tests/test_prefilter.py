import datetime
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgr.errors import ConfigError, DataError
from kgr.graph import ConceptId, KnowledgeGraph, Triple
from kgr.prefilter import (
    COVID_KEEP_CONCEPTS,
    EXCLUDED_SEMANTIC_GROUPS,
    PREDICATE_WHITELIST,
    ContingencyStats,
    FilterConfig,
    TrainTestSplit,
    apply_structural_filters,
    expected_independence,
    g2_score,
    g2_statistic,
    informativeness,
    minmax_normalize,
    prune_by_score,
    read_concept_list,
    time_slice,
    write_scores_tsv,
)


def g2_direct(table):
    # independent brute-force implementation: full loop over cells
    t = np.asarray(table, dtype=float)
    total = t.sum()
    if total == 0:
        return 0.0
    s = 0.0
    shape = t.shape
    for idx in np.ndindex(*shape):
        n = t[idx]
        if n <= 0:
            continue
        m = 1.0
        for ax, pos in enumerate(idx):
            other = tuple(a for a in range(t.ndim) if a != ax)
            m *= t.sum(axis=other)[pos]
        m /= total ** (t.ndim - 1)
        s += n * math.log(n / m)
    return 2.0 * s


def concept(cid, groups=(), types=()):
    return ConceptId(
        cid, semantic_types=frozenset(types), semantic_groups=frozenset(groups)
    )


class TestStructuralFilters:
    def test_non_whitelisted_predicate_removed(self):
        g = KnowledgeGraph.from_triples(
            [Triple("C1", "PART_OF", "C2"), Triple("C1", "TREATS", "C2")]
        )
        out = apply_structural_filters(g, FilterConfig())
        assert [t.predicate for t in out.triples] == ["TREATS"]

    def test_self_loop_removed(self):
        g = KnowledgeGraph.from_triples([Triple("C1", "TREATS", "C1")])
        assert apply_structural_filters(g, FilterConfig()).n_triples == 0
        cfg = FilterConfig(drop_self_loops=False)
        assert apply_structural_filters(g, cfg).n_triples == 1

    def test_excluded_group_either_endpoint(self):
        g = KnowledgeGraph.from_triples(
            [
                Triple("C1", "TREATS", "C2"),
                Triple("C3", "TREATS", "C2"),
                Triple("C2", "TREATS", "C3"),
            ],
            concepts={
                "C1": concept("C1"),
                "C2": concept("C2"),
                "C3": concept("C3", groups={"ACTI"}),
            },
        )
        out = apply_structural_filters(g, FilterConfig())
        assert [t.key() for t in out.triples] == [("C1", "TREATS", "C2")]

    def test_generic_generic_removed(self):
        cfg = FilterConfig(generic_concepts=frozenset({"G1", "G2"}))
        g = KnowledgeGraph.from_triples(
            [
                Triple("G1", "TREATS", "G2"),  # both generic: dropped
                Triple("G1", "TREATS", "C2"),  # one generic: kept
            ]
        )
        out = apply_structural_filters(g, cfg)
        assert [t.key() for t in out.triples] == [("G1", "TREATS", "C2")]

    def test_confidence_threshold(self):
        g = KnowledgeGraph.from_triples(
            [
                Triple("C1", "TREATS", "C2", confidence=0.9),
                Triple("C3", "TREATS", "C2", confidence=0.3),
                Triple("C4", "TREATS", "C2"),  # no confidence recorded
            ]
        )
        out = apply_structural_filters(g, FilterConfig(confidence_threshold=0.5))
        assert [t.head for t in out.triples] == ["C1"]
        out = apply_structural_filters(g, FilterConfig())
        assert out.n_triples == 3

    def test_keep_concept_bypasses_all_rules(self):
        # non-whitelisted predicate, self loop, excluded group: all survive
        cfg = FilterConfig()
        g = KnowledgeGraph.from_triples(
            [
                Triple("C5203670", "PART_OF", "C1"),
                Triple("C5203670", "TREATS", "C5203670"),
                Triple("C2", "TREATS", "C5203671"),
            ],
            concepts={"C2": concept("C2", groups={"ACTI"})},
        )
        out = apply_structural_filters(g, cfg)
        assert out.n_triples == 3

    def test_vocabulary_retained(self):
        g = KnowledgeGraph.from_triples(
            [Triple("C1", "PART_OF", "C2"), Triple("C3", "TREATS", "C4")]
        )
        out = apply_structural_filters(g, FilterConfig())
        assert out.entity_ids == g.entity_ids
        assert out.has_concept("C1")
        assert out.degree("C1", "out") == 0

    def test_defaults(self):
        cfg = FilterConfig()
        assert len(cfg.predicate_whitelist) == 15
        assert "TREATS" in cfg.predicate_whitelist
        assert cfg.excluded_semantic_groups == EXCLUDED_SEMANTIC_GROUPS
        assert cfg.keep_concepts == COVID_KEEP_CONCEPTS
        assert len(COVID_KEEP_CONCEPTS) == 7

    def test_bad_threshold_rejected(self):
        with pytest.raises(ConfigError):
            FilterConfig(confidence_threshold=1.5)

    def test_from_file(self, tmp_path):
        keep = tmp_path / "keep.txt"
        keep.write_text("# covid ids\nC5203670\nC5203671\n")
        cfgfile = tmp_path / "filter.cfg"
        cfgfile.write_text(
            "predicate_whitelist = TREATS, CAUSES\n"
            "drop_self_loops = false\n"
            f"keep_concepts_file = {keep}\n"
            "confidence_threshold = 0.25\n"
        )
        cfg = FilterConfig.from_file(cfgfile)
        assert cfg.predicate_whitelist == frozenset({"TREATS", "CAUSES"})
        assert cfg.drop_self_loops is False
        assert cfg.keep_concepts == frozenset({"C5203670", "C5203671"})
        assert cfg.confidence_threshold == 0.25

    def test_from_file_unknown_key(self, tmp_path):
        f = tmp_path / "bad.cfg"
        f.write_text("frobnicate = yes\n")
        with pytest.raises(ConfigError):
            FilterConfig.from_file(f)

    def test_read_concept_list_missing(self, tmp_path):
        with pytest.raises(DataError):
            read_concept_list(tmp_path / "nope.txt")


WORKED_G2 = 7.7097902808703  # frozen from the direct-summation oracle


def worked_graph():
    return KnowledgeGraph.from_triples(
        [
            Triple("A", "r", "B", count=8),
            Triple("A", "r", "C", count=2),
            Triple("D", "r", "B", count=2),
            Triple("D", "r", "C", count=8),
        ]
    )


class TestG2:
    def test_observed_equals_expected_is_zero(self):
        a = np.array([3.0, 7.0])
        b = np.array([5.0, 5.0])
        c = np.array([2.0, 8.0])
        table = np.einsum("i,j,k->ijk", a, b, c) / 10.0**2
        assert abs(g2_statistic(table)) < 1e-9

    def test_single_triple_graph_is_zero(self):
        g = KnowledgeGraph.from_triples([Triple("A", "r", "B")])
        stats = ContingencyStats.from_graph(g)
        assert g2_score(stats, (0, 0, 1)) == 0.0

    def test_worked_example_matches_oracle(self):
        g = worked_graph()
        stats = ContingencyStats.from_graph(g)
        idx = (
            g.entity_index["A"],
            g.relation_index["r"],
            g.entity_index["B"],
        )
        got = g2_score(stats, idx)
        oracle = g2_direct(stats.collapsed(*idx))
        np.testing.assert_allclose(got, oracle, rtol=0, atol=1e-9)
        np.testing.assert_allclose(got, WORKED_G2, rtol=0, atol=1e-9)

    def test_all_four_cells_symmetric(self):
        g = worked_graph()
        stats = ContingencyStats.from_graph(g)
        vals = {
            g2_score(
                stats,
                (g.entity_index[h], g.relation_index["r"], g.entity_index[t]),
            )
            for h, t in [("A", "B"), ("A", "C"), ("D", "B"), ("D", "C")]
        }
        assert max(vals) - min(vals) < 1e-9

    def test_empty_table_error(self):
        with pytest.raises(DataError):
            g2_score(ContingencyStats(), (0, 0, 0))

    def test_absent_cell_error(self):
        g = worked_graph()
        stats = ContingencyStats.from_graph(g)
        with pytest.raises(DataError):
            g2_score(stats, (0, 0, 0))  # (A, r, A) never observed

    def test_negative_count_rejected(self):
        with pytest.raises(DataError):
            g2_statistic(np.array([[1.0, -1.0], [2.0, 3.0]]))

    def test_nonnegative_on_random_tables(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            table = rng.integers(0, 30, size=(2, 2, 2))
            assert g2_statistic(table) >= -1e-9

    def test_matches_oracle_on_random_tables(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            table = rng.integers(0, 20, size=(2, 2, 2))
            np.testing.assert_allclose(
                g2_statistic(table), g2_direct(table), rtol=0, atol=1e-9
            )

    def test_expected_sums_to_total(self):
        rng = np.random.default_rng(5)
        table = rng.integers(0, 9, size=(3, 2, 4))
        np.testing.assert_allclose(
            expected_independence(table).sum(), table.sum(), rtol=1e-12
        )

    def test_collapsed_marginals_consistent(self):
        g = worked_graph()
        stats = ContingencyStats.from_graph(g)
        table = stats.collapsed(0, 0, 1)
        assert table.sum() == stats.total
        assert (table >= 0).all()


def score_fixture():
    # one edge dominates its predicate between the two busiest endpoints:
    # it maxes all three components; the isolated background pairs min them
    return KnowledgeGraph.from_triples(
        [
            Triple("B", "s", "C", count=1000),
            Triple("B", "s", "V1"),
            Triple("B", "s", "V2"),
            Triple("U1", "s", "C"),
            Triple("U2", "s", "C"),
            Triple("P1", "r", "Q1", count=300),
            Triple("P2", "r", "Q2", count=300),
            Triple("P3", "r", "Q3", count=300),
        ]
    )


class TestInformativeness:
    def test_floor_and_ceiling(self):
        scores = informativeness(score_fixture())
        assert scores[("P1", "r", "Q1")].combined == 0.0
        assert scores[("B", "s", "C")].combined == 3.0

    def test_generic_hub_scores_above_specific(self):
        scores = informativeness(score_fixture())
        assert scores[("B", "s", "C")].combined > scores[("P1", "r", "Q1")].combined

    def test_combined_is_component_sum(self):
        for s in informativeness(score_fixture()).values():
            np.testing.assert_allclose(
                s.combined, s.g2_norm + s.k_in_norm + s.k_out_norm, rtol=1e-12
            )
            assert 0.0 <= s.g2_norm <= 1.0
            assert 0.0 <= s.k_in_norm <= 1.0
            assert 0.0 <= s.k_out_norm <= 1.0
            assert s.g2 >= 0.0

    def test_degenerate_components_zero_with_warning(self, caplog):
        # disjoint identical pairs: every component exactly constant
        g = KnowledgeGraph.from_triples(
            [Triple("A", "r", "B"), Triple("C", "r", "D")]
        )
        with caplog.at_level("WARNING", logger="kgr.prefilter"):
            scores = informativeness(g)
        assert all(s.combined == 0.0 for s in scores.values())
        assert any("degenerate" in r.message for r in caplog.records)

    def test_empty_graph_error(self):
        g = KnowledgeGraph.from_triples([])
        with pytest.raises(DataError):
            informativeness(g)

    def test_permutation_invariant_scores(self):
        ts = list(score_fixture().triples)
        a = informativeness(KnowledgeGraph.from_triples(ts))
        b = informativeness(KnowledgeGraph.from_triples(list(reversed(ts))))
        assert a == b

    def test_scores_tsv_deterministic(self, tmp_path):
        g = score_fixture()
        scores = informativeness(g)
        p1 = tmp_path / "a.tsv"
        p2 = tmp_path / "b.tsv"
        write_scores_tsv(g, scores, p1)
        write_scores_tsv(g, scores, p2)
        assert p1.read_bytes() == p2.read_bytes()
        header = p1.read_text().splitlines()[0]
        assert header.split("\t") == [
            "head", "predicate", "tail",
            "g2", "k_in_norm", "k_out_norm", "g2_norm", "combined",
        ]


class TestMinMax:
    def test_endpoints(self):
        out = minmax_normalize([4.0, 2.0, 8.0])
        np.testing.assert_allclose(out, [1.0 / 3.0, 0.0, 1.0])

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(-100, 100), min_size=2, max_size=30).filter(
            lambda v: max(v) - min(v) > 1e-6
        ),
        st.floats(0.01, 50),
        st.floats(-50, 50),
    )
    def test_affine_invariance(self, values, a, b):
        base = minmax_normalize(values)
        scaled = minmax_normalize([a * v + b for v in values])
        np.testing.assert_allclose(base, scaled, atol=1e-9)


class TestPrune:
    def test_full_budget_identity(self):
        g = score_fixture()
        scores = informativeness(g)
        out = prune_by_score(g, scores, g.n_triples)
        assert out == g

    def test_budget_equals_keep_size(self):
        g = KnowledgeGraph.from_triples(
            [
                Triple("K", "r", "A"),
                Triple("B", "r", "K"),
                Triple("A", "r", "B"),
            ]
        )
        scores = informativeness(g)
        out = prune_by_score(g, scores, 2, keep=frozenset({"K"}))
        assert {t.key() for t in out.triples} == {
            ("K", "r", "A"),
            ("B", "r", "K"),
        }

    def test_keeps_lowest_scores(self):
        g = score_fixture()
        scores = informativeness(g)
        out = prune_by_score(g, scores, 3)
        assert {t.key() for t in out.triples} == {
            ("P1", "r", "Q1"),
            ("P2", "r", "Q2"),
            ("P3", "r", "Q3"),
        }

    def test_tie_break_deterministic(self):
        # disjoint identical pairs tie exactly; (head, predicate, tail) breaks
        g = KnowledgeGraph.from_triples(
            [
                Triple("G", "r", "H"),
                Triple("E", "r", "F"),
                Triple("C", "r", "D"),
                Triple("A", "r", "B"),
            ]
        )
        scores = informativeness(g)
        assert len({s.combined for s in scores.values()}) == 1
        out = prune_by_score(g, scores, 2)
        assert [t.key() for t in out.triples] == [
            ("A", "r", "B"),
            ("C", "r", "D"),
        ]

    def test_budget_below_keep_error(self):
        g = KnowledgeGraph.from_triples(
            [Triple("K", "r", "A"), Triple("K", "r", "B")]
        )
        scores = informativeness(g)
        with pytest.raises(ConfigError):
            prune_by_score(g, scores, 1, keep=frozenset({"K"}))

    def test_missing_score_error(self):
        g = score_fixture()
        with pytest.raises(DataError):
            prune_by_score(g, {}, 3)

    def test_desk_scale_budget(self):
        # 10,000 synthetic triples cut to 1,000 lowest modulo keep set
        rng = np.random.default_rng(11)
        triples = []
        for i in range(10_000):
            h = f"H{rng.integers(0, 120):03d}"
            t = f"T{rng.integers(0, 120):03d}"
            p = "REL_A" if rng.random() < 0.6 else "REL_B"
            triples.append(Triple(h, p, t, count=int(rng.integers(1, 6))))
        g = KnowledgeGraph.from_triples(triples)
        keep = frozenset({"H000"})
        scores = informativeness(g)
        out = prune_by_score(g, scores, 1000, keep=keep)
        assert out.n_triples == 1000
        kept_keys = {t.key() for t in out.triples}
        keep_touching = {
            t.key() for t in g.triples if t.head in keep or t.tail in keep
        }
        assert keep_touching <= kept_keys
        # oracle: sort remainder by (combined, head, predicate, tail)
        rest = sorted(
            (t for t in g.triples if t.key() not in keep_touching),
            key=lambda t: (scores[t.key()].combined, t.head, t.predicate, t.tail),
        )
        expected = keep_touching | {
            t.key() for t in rest[: 1000 - len(keep_touching)]
        }
        assert kept_keys == expected


class TestTimeSlice:
    CUTOFF = datetime.date(2020, 3, 11)

    def graph(self):
        return KnowledgeGraph.from_triples(
            [
                Triple("A", "r", "B", date=datetime.date(2019, 6, 1)),
                Triple("A", "r", "C", date=datetime.date(2020, 3, 11)),
                Triple("B", "r", "C", date=datetime.date(2020, 3, 12)),
                Triple("C", "r", "D", date=datetime.date(2020, 9, 30)),
                Triple("D", "r", "A"),  # undated
            ]
        )

    def test_exact_partition(self):
        split = time_slice(self.graph(), self.CUTOFF)
        assert {t.key() for t in split.train.triples} == {
            ("A", "r", "B"),
            ("A", "r", "C"),
        }
        assert {t.key() for t in split.test} == {
            ("B", "r", "C"),
            ("C", "r", "D"),
        }
        assert split.excluded_undated == 1
        assert split.cutoff == self.CUTOFF

    def test_cutoff_day_goes_to_train(self):
        split = time_slice(self.graph(), self.CUTOFF)
        assert ("A", "r", "C") in {t.key() for t in split.train.triples}

    def test_undated_to_train_flag(self):
        split = time_slice(self.graph(), self.CUTOFF, undated_to_train=True)
        assert split.excluded_undated == 0
        assert ("D", "r", "A") in {t.key() for t in split.train.triples}

    def test_empty_test_side_error(self):
        g = KnowledgeGraph.from_triples(
            [Triple("A", "r", "B", date=datetime.date(2019, 1, 1))]
        )
        with pytest.raises(DataError):
            time_slice(g, self.CUTOFF)

    def test_empty_train_side_error(self):
        g = KnowledgeGraph.from_triples(
            [Triple("A", "r", "B", date=datetime.date(2021, 1, 1))]
        )
        with pytest.raises(DataError):
            time_slice(g, self.CUTOFF)

    def test_partition_is_exhaustive_and_disjoint(self):
        g = self.graph()
        split = time_slice(g, self.CUTOFF)
        train = {t.key() for t in split.train.triples}
        test = {t.key() for t in split.test}
        assert not (train & test)
        assert len(train) + len(test) + split.excluded_undated == g.n_triples

    def test_train_keeps_vocabulary(self):
        split = time_slice(self.graph(), self.CUTOFF)
        assert split.train.entity_ids == self.graph().entity_ids
