"""Judgment aggregation, pooling, ranking metrics, and qrels files."""
from __future__ import annotations

import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    oracle_average_precision,
    oracle_ndcg_at,
    oracle_precision_at,
    oracle_r_precision,
)
from symptom_search.errors import DataFormatError
from symptom_search.evaluation import (
    MODE_MAJORITY,
    MODE_UNANIMITY,
    Judgment,
    QrelsFormatError,
    QrelsSet,
    aggregate,
    average_precision,
    evaluate_run,
    format_report,
    is_relevant,
    ndcg_at,
    pool_runs,
    precision_at,
    r_precision,
    read_qrels,
    write_pool,
    write_qrels,
)
from symptom_search.retrieval import RunEntry


def run_from_ranking(ranking, symptom=1, tag="T"):
    return [
        RunEntry(symptom, doc, rank, 1.0 - rank * 0.001, tag)
        for rank, doc in enumerate(ranking, start=1)
    ]


class TestAggregation:
    def test_majority_needs_two_votes(self):
        assert is_relevant((1, 1, 0), MODE_MAJORITY)
        assert is_relevant((1, 1, 1), MODE_MAJORITY)
        assert not is_relevant((1, 0, 0), MODE_MAJORITY)
        assert not is_relevant((0, 0, 0), MODE_MAJORITY)

    def test_unanimity_needs_all_three(self):
        assert is_relevant((1, 1, 1), MODE_UNANIMITY)
        assert not is_relevant((1, 1, 0), MODE_UNANIMITY)

    def test_all_eight_label_combinations(self):
        # exactly 4 of 8 are majority-relevant and exactly 1 unanimous
        combos = list(itertools.product((0, 1), repeat=3))
        majority = [c for c in combos if is_relevant(c, MODE_MAJORITY)]
        unanimous = [c for c in combos if is_relevant(c, MODE_UNANIMITY)]
        assert len(majority) == 4
        assert len(unanimous) == 1
        assert set(unanimous) <= set(majority)

    def test_unknown_mode(self):
        with pytest.raises(DataFormatError, match="mode must be one of"):
            is_relevant((1, 1, 1), "plurality")
        with pytest.raises(DataFormatError, match="mode must be one of"):
            aggregate([], "plurality")

    def test_unanimity_subset_of_majority(self):
        rng = np.random.default_rng(17)
        judgments = [
            Judgment(int(s), f"d{i}", tuple(int(v) for v in rng.integers(0, 2, 3)))
            for i, s in enumerate(rng.integers(1, 22, size=200))
        ]
        maj = aggregate(judgments, MODE_MAJORITY)
        una = aggregate(judgments, MODE_UNANIMITY)
        for symptom, docs in una.relevant.items():
            assert docs <= maj.relevant.get(symptom, frozenset())
        assert una.judged == maj.judged

    def test_judged_includes_non_relevant(self):
        judgments = [
            Judgment(1, "yes", (1, 1, 1)),
            Judgment(1, "no", (0, 0, 0)),
        ]
        qrels = aggregate(judgments, MODE_MAJORITY)
        assert qrels.judged[1] == {"yes", "no"}
        assert qrels.relevant[1] == {"yes"}
        assert qrels.relevant_count() == 1
        assert qrels.judged_count() == 2

    def test_duplicate_judgment_rejected(self):
        judgments = [
            Judgment(1, "d", (1, 1, 1)),
            Judgment(1, "d", (0, 0, 0)),
        ]
        with pytest.raises(QrelsFormatError, match="duplicate judgment"):
            aggregate(judgments, MODE_MAJORITY)

    def test_bad_labels_rejected(self):
        with pytest.raises(QrelsFormatError, match="labels must be 0 or 1"):
            Judgment(1, "d", (0, 2, 1))
        with pytest.raises(QrelsFormatError, match="expected 3 labels"):
            Judgment(1, "d", (1, 1))


class TestPooling:
    def test_union_of_disjoint_top_k(self):
        run_a = run_from_ranking([f"a{i:02d}" for i in range(50)])
        run_b = run_from_ranking([f"b{i:02d}" for i in range(50)], tag="U")
        pools = pool_runs([run_a, run_b], k=50)
        assert len(pools[1]) == 100

    def test_overlap_deduplicated(self):
        shared = [f"d{i}" for i in range(10)]
        pools = pool_runs(
            [run_from_ranking(shared), run_from_ranking(shared, tag="U")], k=10
        )
        assert pools[1] == set(shared)

    def test_rank_beyond_k_excluded(self):
        run = run_from_ranking([f"d{i:03d}" for i in range(60)])
        pools = pool_runs([run], k=50)
        assert len(pools[1]) == 50
        assert "d050" not in pools[1]
        assert "d049" in pools[1]

    def test_pool_contains_every_runs_top_k(self):
        rng = np.random.default_rng(29)
        runs = []
        for tag in ("A", "B", "C"):
            docs = [f"{tag.lower()}{i}" for i in range(30)]
            rng.shuffle(docs)
            runs.append(run_from_ranking(docs, tag=tag))
        pools = pool_runs(runs, k=10)
        for run in runs:
            for entry in run:
                if entry.rank <= 10:
                    assert entry.doc_id in pools[entry.symptom_index]

    def test_symptoms_pooled_separately(self):
        runs = [
            run_from_ranking(["x"], symptom=2),
            run_from_ranking(["y"], symptom=7, tag="U"),
        ]
        pools = pool_runs(runs, k=50)
        assert pools == {2: {"x"}, 7: {"y"}}

    def test_bad_depth(self):
        with pytest.raises(DataFormatError, match="pool depth"):
            pool_runs([], k=0)

    def test_write_pool_sorted(self):
        out = io.StringIO()
        write_pool({2: {"zz", "aa"}, 1: {"m"}}, out)
        assert out.getvalue() == "1\tm\n2\taa\n2\tzz\n"


class TestAveragePrecision:
    def test_frozen_example(self):
        # hits at ranks 1 and 3: (1/1 + 2/3) / 2
        value = average_precision(["d1", "d2", "d3"], {"d1", "d3"})
        assert value == pytest.approx(0.8333, abs=1e-4)

    def test_perfect_ranking(self):
        assert average_precision(["a", "b", "c"], {"a", "b", "c"}) == 1.0

    def test_missing_relevant_contributes_zero(self):
        # only 1 of 2 relevant docs retrieved, at rank 1
        assert average_precision(["a", "x"], {"a", "gone"}) == pytest.approx(0.5)

    def test_empty_relevant_rejected(self):
        with pytest.raises(DataFormatError, match="at least one relevant"):
            average_precision(["a"], set())

    def test_matches_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            docs = [f"d{i}" for i in range(int(rng.integers(1, 40)))]
            rng.shuffle(docs)
            relevant = set(rng.choice(docs, size=int(rng.integers(1, len(docs) + 1)), replace=False))
            assert average_precision(docs, relevant) == pytest.approx(
                oracle_average_precision(docs, relevant), abs=1e-12
            )


class TestRPrecision:
    def test_half_right_fixture(self):
        # R=2, first two ranks hold one relevant doc
        assert r_precision(["rel1", "junk", "rel2"], {"rel1", "rel2"}) == 0.5

    def test_perfect(self):
        assert r_precision(["a", "b"], {"a", "b"}) == 1.0

    def test_short_ranking(self):
        assert r_precision(["a"], {"a", "b", "c"}) == pytest.approx(1 / 3)

    def test_matches_oracle(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            docs = [f"d{i}" for i in range(int(rng.integers(1, 30)))]
            rng.shuffle(docs)
            relevant = set(rng.choice(docs, size=int(rng.integers(1, len(docs) + 1)), replace=False))
            assert r_precision(docs, relevant) == pytest.approx(
                oracle_r_precision(docs, relevant), abs=1e-12
            )


class TestPrecisionAt:
    def test_fixed_denominator_short_ranking(self):
        # 3 docs, all relevant, but the denominator stays 10
        assert precision_at(["a", "b", "c"], {"a", "b", "c"}, 10) == pytest.approx(0.3)

    def test_cutoff_truncates(self):
        ranking = ["r1", "r2", "x", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "r3"]
        assert precision_at(ranking, {"r1", "r2", "r3"}, 10) == pytest.approx(0.2)

    def test_default_cutoff_is_ten(self):
        ranking = [f"d{i}" for i in range(20)]
        assert precision_at(ranking, {"d0"}) == pytest.approx(0.1)

    def test_bad_cutoff(self):
        with pytest.raises(DataFormatError, match="cutoff must be >= 1"):
            precision_at(["a"], {"a"}, 0)

    def test_matches_oracle(self):
        rng = np.random.default_rng(43)
        for _ in range(50):
            docs = [f"d{i}" for i in range(int(rng.integers(1, 30)))]
            rng.shuffle(docs)
            relevant = set(rng.choice(docs, size=int(rng.integers(1, len(docs) + 1)), replace=False))
            n = int(rng.integers(1, 15))
            assert precision_at(docs, relevant, n) == pytest.approx(
                oracle_precision_at(docs, relevant, n), abs=1e-12
            )


class TestNdcg:
    def test_frozen_single_relevant_at_rank_two(self):
        # DCG = 1/log2(3), IDCG = 1/log2(2) = 1
        value = ndcg_at(["miss", "hit"], {"hit"}, 1000)
        assert value == pytest.approx(0.6309, abs=1e-4)
        assert value == pytest.approx(1.0 / math.log2(3), abs=1e-12)

    def test_perfect_prefix(self):
        assert ndcg_at(["a", "b", "x"], {"a", "b"}, 1000) == pytest.approx(1.0)

    def test_ideal_uses_min_of_r_and_n(self):
        # R=3 but n=2: ideal sums only two positions, so putting both
        # visible slots right scores 1.0
        assert ndcg_at(["a", "b"], {"a", "b", "c"}, 2) == pytest.approx(1.0)

    def test_relevant_beyond_cutoff_ignored(self):
        value = ndcg_at(["x1", "x2", "hit"], {"hit"}, 2)
        assert value == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(47)
        for _ in range(50):
            docs = [f"d{i}" for i in range(int(rng.integers(1, 40)))]
            rng.shuffle(docs)
            relevant = set(rng.choice(docs, size=int(rng.integers(1, len(docs) + 1)), replace=False))
            n = int(rng.integers(1, 50))
            assert ndcg_at(docs, relevant, n) == pytest.approx(
                oracle_ndcg_at(docs, relevant, n), abs=1e-12
            )


class TestMetricProperties:
    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31 - 1),
        size=st.integers(min_value=2, max_value=25),
    )
    def test_bounds(self, seed, size):
        rng = np.random.default_rng(seed)
        docs = [f"d{i}" for i in range(size)]
        rng.shuffle(docs)
        relevant = set(rng.choice(docs, size=int(rng.integers(1, size)), replace=False))
        for value in (
            average_precision(docs, relevant),
            r_precision(docs, relevant),
            precision_at(docs, relevant, 10),
            ndcg_at(docs, relevant, 1000),
        ):
            assert 0.0 <= value <= 1.0

    def test_front_loaded_beats_back_loaded(self):
        relevant = {"r1", "r2"}
        good = ["r1", "r2", "x1", "x2"]
        bad = ["x1", "x2", "r1", "r2"]
        assert average_precision(good, relevant) > average_precision(bad, relevant)
        assert ndcg_at(good, relevant, 1000) > ndcg_at(bad, relevant, 1000)
        assert r_precision(good, relevant) > r_precision(bad, relevant)

    def test_swap_toward_front_never_hurts_ap(self):
        rng = np.random.default_rng(53)
        docs = [f"d{i}" for i in range(12)]
        relevant = {"d0", "d5", "d9"}
        ranking = list(docs)
        rng.shuffle(ranking)
        for i in range(1, len(ranking)):
            if ranking[i] in relevant and ranking[i - 1] not in relevant:
                swapped = list(ranking)
                swapped[i - 1], swapped[i] = swapped[i], swapped[i - 1]
                assert average_precision(swapped, relevant) >= average_precision(
                    ranking, relevant
                )

    def test_unjudged_docs_count_as_non_relevant(self):
        # padding a ranking with unjudged docs after the hits never
        # changes AP, and dilutes nothing retroactively
        relevant = {"r"}
        base = average_precision(["r"], relevant)
        padded = average_precision(["r", "u1", "u2", "u3"], relevant)
        assert base == padded == 1.0


class TestEvaluateRun:
    def qrels(self, relevant_by_symptom, judged_extra=()):
        judgments = []
        for symptom, docs in relevant_by_symptom.items():
            for doc in docs:
                judgments.append(Judgment(symptom, doc, (1, 1, 1)))
        for symptom, doc in judged_extra:
            judgments.append(Judgment(symptom, doc, (0, 0, 0)))
        return aggregate(judgments, MODE_MAJORITY)

    def test_ideal_run_scores_one(self):
        qrels = self.qrels({1: ["a", "b"], 2: ["c"]})
        run = run_from_ranking(["a", "b"], symptom=1) + run_from_ranking(
            ["c"], symptom=2
        )
        report = evaluate_run(run, qrels)
        assert report.mean.ap == pytest.approx(1.0)
        assert report.mean.r_prec == pytest.approx(1.0)
        assert report.mean.ndcg_at_1000 == pytest.approx(1.0)
        assert report.evaluated_query_count == 2
        assert report.excluded_symptoms == ()
        assert report.run_tag == "T"
        assert report.mode == MODE_MAJORITY

    def test_matches_oracles_on_random_runs(self):
        rng = np.random.default_rng(59)
        docs = [f"d{i:02d}" for i in range(30)]
        judgments = []
        for symptom in (1, 2, 3):
            labels = rng.integers(0, 2, size=(30, 3))
            for i, doc in enumerate(docs):
                judgments.append(Judgment(symptom, doc, tuple(int(v) for v in labels[i])))
        qrels = aggregate(judgments, MODE_MAJORITY)
        run = []
        rankings = {}
        for symptom in (1, 2, 3):
            ranking = list(docs)
            rng.shuffle(ranking)
            rankings[symptom] = ranking
            run.extend(run_from_ranking(ranking, symptom=symptom))
        report = evaluate_run(run, qrels)
        for symptom, metrics in report.per_symptom.items():
            relevant = qrels.relevant[symptom]
            ranking = rankings[symptom]
            assert metrics.ap == pytest.approx(
                oracle_average_precision(ranking, relevant), abs=1e-6
            )
            assert metrics.r_prec == pytest.approx(
                oracle_r_precision(ranking, relevant), abs=1e-6
            )
            assert metrics.p_at_10 == pytest.approx(
                oracle_precision_at(ranking, relevant, 10), abs=1e-6
            )
            assert metrics.ndcg_at_1000 == pytest.approx(
                oracle_ndcg_at(ranking, relevant, 1000), abs=1e-6
            )

    def test_zero_relevant_symptom_excluded_but_counted(self):
        qrels = self.qrels({1: ["a"]}, judged_extra=[(2, "x"), (2, "y")])
        run = run_from_ranking(["a"], symptom=1) + run_from_ranking(
            ["x"], symptom=2
        )
        report = evaluate_run(run, qrels)
        assert report.evaluated_query_count == 1
        assert report.excluded_symptoms == (2,)
        assert 2 not in report.per_symptom

    def test_unjudged_symptom_rejected(self):
        qrels = self.qrels({1: ["a"]})
        run = run_from_ranking(["a"], symptom=9)
        with pytest.raises(DataFormatError, match="symptom 9, which the qrels never"):
            evaluate_run(run, qrels)

    def test_mixed_tags_rejected(self):
        qrels = self.qrels({1: ["a"]})
        run = run_from_ranking(["a"]) + run_from_ranking(["b"], symptom=1, tag="U")
        with pytest.raises(DataFormatError, match="mixes tags"):
            evaluate_run(run, qrels)

    def test_judged_symptom_missing_from_run_scores_zero(self):
        # symptom 2 judged relevant but the run never ranks anything for it
        qrels = self.qrels({1: ["a"], 2: ["b"]})
        run = run_from_ranking(["a"], symptom=1)
        report = evaluate_run(run, qrels)
        assert report.per_symptom[2].ap == 0.0
        assert report.evaluated_query_count == 2

    def test_unanimity_mode_shrinks_relevant(self):
        judgments = [
            Judgment(1, "strong", (1, 1, 1)),
            Judgment(1, "weak", (1, 1, 0)),
        ]
        maj = aggregate(judgments, MODE_MAJORITY)
        una = aggregate(judgments, MODE_UNANIMITY)
        run = run_from_ranking(["strong", "weak"])
        assert evaluate_run(run, maj).relevant_total == 2
        assert evaluate_run(run, una).relevant_total == 1


class TestReportFormat:
    def build_report(self):
        qrels = aggregate(
            [Judgment(1, "a", (1, 1, 1)), Judgment(1, "b", (0, 0, 0))],
            MODE_MAJORITY,
        )
        return evaluate_run(run_from_ranking(["a", "b"]), qrels)

    def test_header_lines(self):
        text = format_report(self.build_report())
        lines = text.splitlines()
        assert lines[0] == "run: T"
        assert lines[1] == "aggregation: majority"
        assert lines[2] == "judged relevant docs: 1"
        assert lines[3] == "evaluated symptoms: 1"

    def test_machine_lines(self):
        text = format_report(self.build_report())
        assert "ap\t1\t1.000000" in text
        assert "ap\tmean\t1.000000" in text
        assert "ndcg_at_1000\tmean\t1.000000" in text

    def test_excluded_listed(self):
        qrels = aggregate(
            [Judgment(1, "a", (1, 1, 1)), Judgment(2, "x", (0, 0, 0))],
            MODE_MAJORITY,
        )
        report = evaluate_run(run_from_ranking(["a"]), qrels)
        text = format_report(report)
        assert "excluded, no relevant docs: 2" in text


class TestQrelsFiles:
    def test_extended_round_trip(self):
        judgments = [
            Judgment(1, "d1", (1, 0, 1)),
            Judgment(2, "d2", (0, 0, 0)),
        ]
        out = io.StringIO()
        write_qrels(judgments, out, fmt="extended")
        assert out.getvalue() == "1 d1 1 0 1\n2 d2 0 0 0\n"
        assert read_qrels(io.StringIO(out.getvalue())) == judgments

    def test_standard_round_trip(self):
        judgments = [
            Judgment(1, "d1", (1, 1, 1)),
            Judgment(2, "d2", (0, 0, 0)),
        ]
        out = io.StringIO()
        write_qrels(judgments, out, fmt="standard")
        assert out.getvalue() == "1 0 d1 1\n2 0 d2 0\n"
        assert read_qrels(io.StringIO(out.getvalue())) == judgments

    def test_standard_replicates_labels(self):
        parsed = read_qrels(io.StringIO("3 0 doc 1\n"))
        assert parsed == [Judgment(3, "doc", (1, 1, 1))]

    def test_standard_rejects_disagreement_on_write(self):
        with pytest.raises(DataFormatError, match="annotators disagree"):
            write_qrels([Judgment(1, "d", (1, 0, 1))], io.StringIO(), fmt="standard")

    def test_first_line_fixes_format(self):
        mixed = "1 d1 1 0 1\n2 0 d2 1\n"
        with pytest.raises(QrelsFormatError, match="line 2: expected 5 fields, got 4"):
            read_qrels(io.StringIO(mixed))

    def test_standard_requires_zero_column(self):
        with pytest.raises(QrelsFormatError, match="second field must be 0"):
            read_qrels(io.StringIO("1 Q0 d 1\n"))

    def test_bad_field_count(self):
        with pytest.raises(QrelsFormatError, match="expected 4 or 5 fields, got 3"):
            read_qrels(io.StringIO("1 d 1\n"))

    def test_bad_label_value(self):
        with pytest.raises(QrelsFormatError, match="line 1.*labels must be 0 or 1"):
            read_qrels(io.StringIO("1 d 1 2 1\n"))

    def test_non_numeric_symptom(self):
        with pytest.raises(QrelsFormatError, match="line 1"):
            read_qrels(io.StringIO("one d 1 0 1\n"))

    def test_blank_lines_skipped(self):
        parsed = read_qrels(io.StringIO("\n1 d 1 1 1\n\n"))
        assert len(parsed) == 1

    def test_aggregate_read_consistency(self):
        text = "1 d1 1 1 0\n1 d2 1 1 1\n1 d3 0 0 1\n"
        qrels = aggregate(read_qrels(io.StringIO(text)), MODE_MAJORITY)
        assert qrels.relevant[1] == {"d1", "d2"}
        una = aggregate(read_qrels(io.StringIO(text)), MODE_UNANIMITY)
        assert una.relevant[1] == {"d2"}
