"""Dataset loading, exact top-k metrics, and the five-mode ablation harness."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from fuzzydx import dsl
from fuzzydx.evaluation import (
    BenchmarkMode,
    DatasetParseError,
    EmptyDatasetError,
    EvaluationError,
    MetricsReport,
    load_dataset,
    parse_case,
    percent,
    rank_case,
    run_benchmark,
    save_dataset,
    topk_metrics,
)
from fuzzydx.extraction import ExtractionConfig, TermTable
from fuzzydx.kb import KnowledgeSnapshot
from fuzzydx.learning import LearnerConfig, find_violation, train_until_stable
from fuzzydx.model import CaseRecord, Demographics
from fuzzydx.ranking import CaseIndex
from fuzzydx import synthetic

from oracles import naive_topk

# ===================== helpers =====================

PAIR_KB = """
diagnosis(alpha) :- symptom(fever)@0.8, symptom(cough)@0.8.
diagnosis(alpha) :- symptom(rash)@0.95.
diagnosis(beta) :- symptom(fever)@0.8, symptom(cough)@0.8.
diagnosis(beta) :- symptom(spots)@0.95.
prior(alpha, _, _, _, 0.06).
prior(beta, _, _, _, 0.02).
prior(beta, age_0_17, _, _, 0.12).
"""


def snapshot_of(source: str) -> KnowledgeSnapshot:
    program = dsl.parse_program(source)
    return KnowledgeSnapshot.create(
        tuple(program.rules), priors=tuple(program.priors), timestamp=0.0
    )


def case(case_id: str, symptoms: dict[str, float], labels=(), demographics=None) -> CaseRecord:
    return CaseRecord(
        case_id=case_id,
        symptoms=tuple(sorted(symptoms.items())),
        labels=tuple(labels),
        demographics=demographics or Demographics(),
    )


@pytest.fixture(scope="module")
def pair_snapshot() -> KnowledgeSnapshot:
    return snapshot_of(PAIR_KB)


# ===================== datasets =====================


class TestDatasets:
    def test_loads_symptom_and_text_cases(self, tmp_path):
        path = tmp_path / "cases.jsonl"
        path.write_text(
            '{"id": "c1", "symptoms": [["fever", 0.8], "cough"], "labels": ["flu"]}\n'
            "\n"
            '{"id": "c2", "text": "Fever for two days.", "labels": ["flu"],'
            ' "demographics": {"age": 70, "sex": "female"}}\n'
        )
        cases = load_dataset(path)
        assert len(cases) == 2
        assert cases[0].symptoms == (("fever", 0.8), ("cough", 1.0))
        assert cases[0].labels == ("flu",)
        assert cases[1].text == "Fever for two days."
        assert cases[1].demographics == Demographics(age=70, sex="female")

    def test_bare_symptom_names_default_to_full_weight(self):
        record = parse_case({"id": "x", "symptoms": ["fever"]})
        assert record.symptoms == (("fever", 1.0),)

    def test_rejects_case_with_both_text_and_symptoms(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id": "ok", "symptoms": ["fever"]}\n'
            '{"id": "bad", "text": "hi", "symptoms": ["fever"]}\n'
        )
        with pytest.raises(DatasetParseError) as err:
            load_dataset(path)
        assert err.value.line == 2

    def test_rejects_case_with_neither_channel(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "bad", "labels": ["flu"]}\n')
        with pytest.raises(DatasetParseError) as err:
            load_dataset(path)
        assert err.value.line == 1

    def test_reports_line_of_malformed_json(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "c1", "symptoms": ["fever"]}\n{not json\n')
        with pytest.raises(DatasetParseError) as err:
            load_dataset(path)
        assert err.value.line == 2

    def test_missing_id_is_a_parse_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"symptoms": ["fever"]}\n')
        with pytest.raises(DatasetParseError):
            load_dataset(path)

    def test_empty_file_raises(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("\n\n")
        with pytest.raises(EmptyDatasetError):
            load_dataset(path)

    def test_save_load_round_trip(self, tmp_path):
        cases = [
            case("c1", {"fever": 0.8, "cough": 1.0}, labels=["flu"]),
            CaseRecord(
                case_id="c2",
                text="Cough since yesterday.",
                labels=("cold",),
                demographics=Demographics(age=9, region="north"),
            ),
        ]
        path = tmp_path / "round.jsonl"
        save_dataset(cases, path)
        loaded = load_dataset(path)
        assert loaded == cases


# ===================== top-k metrics =====================


class TestTopKMetrics:
    def test_hand_computed_values_at_three(self):
        predictions = [["a", "b", "c"], ["x", "y", "z"]]
        golds = [["a", "b"], ["y", "q"]]
        m = topk_metrics(predictions, golds, 3)
        assert m.accuracy == Fraction(1)
        assert m.precision == Fraction(1, 2)
        assert m.recall == Fraction(3, 4)
        assert m.f1 == Fraction(3, 5)

    def test_miss_scores_zero_everywhere(self):
        m = topk_metrics([["a"]], [["b"]], 1)
        assert m.accuracy == 0
        assert m.precision == 0
        assert m.recall == 0
        assert m.f1 == 0

    def test_short_prediction_list_keeps_k_as_divisor(self):
        m = topk_metrics([["a"]], [["a"]], 5)
        assert m.accuracy == 1
        assert m.precision == Fraction(1, 5)
        assert m.recall == 1
        assert m.f1 == Fraction(1, 3)

    def test_single_label_identities_hold_exactly(self):
        rng = random.Random(1217)
        catalog = [f"d{i}" for i in range(8)]
        for _ in range(40):
            n = rng.randint(1, 30)
            k = rng.randint(1, 6)
            predictions = []
            golds = []
            for _ in range(n):
                ranked = rng.sample(catalog, rng.randint(0, len(catalog)))
                predictions.append(ranked)
                golds.append([rng.choice(catalog)])
            m = topk_metrics(predictions, golds, k)
            assert m.recall == m.accuracy
            assert m.precision == m.accuracy / k
            assert m.f1 == 2 * m.accuracy / (k + 1)

    def test_matches_float_oracle_on_multilabel_data(self):
        rng = random.Random(90210)
        catalog = [f"d{i}" for i in range(10)]
        for _ in range(40):
            n = rng.randint(1, 25)
            k = rng.randint(1, 5)
            predictions = [
                rng.sample(catalog, rng.randint(0, len(catalog))) for _ in range(n)
            ]
            golds = [rng.sample(catalog, rng.randint(1, 3)) for _ in range(n)]
            m = topk_metrics(predictions, golds, k)
            expected = naive_topk(predictions, golds, k)
            assert float(m.accuracy) == pytest.approx(expected["accuracy"], abs=1e-12)
            assert float(m.precision) == pytest.approx(expected["precision"], abs=1e-12)
            assert float(m.recall) == pytest.approx(expected["recall"], abs=1e-12)
            assert float(m.f1) == pytest.approx(expected["f1"], abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(EvaluationError):
            topk_metrics([["a"]], [["a"], ["b"]], 1)

    def test_nonpositive_k_rejected(self):
        with pytest.raises(EvaluationError):
            topk_metrics([["a"]], [["a"]], 0)

    def test_zero_cases_rejected(self):
        with pytest.raises(EmptyDatasetError):
            topk_metrics([], [], 1)


class TestPercentDisplay:
    def test_exact_boundary_rounds_half_up(self):
        # accuracy 0.659 at k=3 gives F1 = 2*0.659/4 = 0.3295, displayed 33.0
        acc = Fraction(659, 1000)
        f1 = 2 * acc / 4
        assert f1 == Fraction(3295, 10000)
        assert percent(f1) == "33.0"

    def test_half_up_not_bankers(self):
        assert percent(Fraction(3285, 10000)) == "32.9"
        assert percent(Fraction(3275, 10000)) == "32.8"

    def test_repeating_fraction(self):
        assert percent(Fraction(2, 3)) == "66.7"

    def test_more_places(self):
        assert percent(Fraction(1, 3), places=2) == "33.33"

    def test_report_table_shows_percentages(self):
        predictions = [["a", "b"], ["b", "a"]]
        golds = [["a"], ["a"]]
        report = MetricsReport(
            mode="demo",
            cases=2,
            at={k: topk_metrics(predictions, golds, k) for k in (1, 3)},
        )
        table = report.table()
        assert "demo" in table
        assert "50.0" in table  # accuracy at 1
        assert "100.0" in table  # accuracy at 3

    def test_report_json_round_trips_floats(self):
        m = topk_metrics([["a"]], [["a"]], 3)
        payload = m.to_json()
        assert payload == {
            "k": 3,
            "cases": 1,
            "accuracy": 1.0,
            "precision": 1 / 3,
            "recall": 1.0,
            "f1": 0.5,
        }


# ===================== ablation modes =====================


class TestBenchmarkModes:
    def test_simple_counts_symptom_overlap(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0, "rash": 1.0}),
            BenchmarkMode.SIMPLE,
        )
        assert ranked == ["alpha", "beta"]

    def test_simple_ignores_weights_entirely(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 0.1, "cough": 0.1, "rash": 0.05}),
            BenchmarkMode.SIMPLE,
        )
        assert ranked == ["alpha", "beta"]

    def test_simple_breaks_ties_lexicographically(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot, case("c", {"fever": 1.0, "cough": 1.0}), BenchmarkMode.SIMPLE
        )
        assert ranked == ["alpha", "beta"]

    def test_symbolic_drops_hedged_facts(self, pair_snapshot):
        # rash at 0.3 is below the crisp cutoff, so alpha loses its edge
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0, "rash": 0.3}),
            BenchmarkMode.SYMBOLIC,
        )
        assert ranked == ["alpha", "beta"]  # tie on one firing rule each

        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0, "rash": 0.6}),
            BenchmarkMode.SYMBOLIC,
        )
        assert ranked == ["alpha", "beta"]
        # and the counts genuinely differ: beta alone cannot lead
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0, "spots": 0.6}),
            BenchmarkMode.SYMBOLIC,
        )
        assert ranked == ["beta", "alpha"]

    def test_symbolic_requires_every_body_literal(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot, case("c", {"fever": 1.0}), BenchmarkMode.SYMBOLIC
        )
        assert ranked == []

    def test_symbolic_negation_is_crisp(self):
        snapshot = snapshot_of(
            "diagnosis(gated) :- symptom(seen)@0.9, \\+ symptom(blocker).\n"
        )
        fires = rank_case(
            snapshot, case("c", {"seen": 1.0, "blocker": 0.4}), BenchmarkMode.SYMBOLIC
        )
        blocked = rank_case(
            snapshot, case("c", {"seen": 1.0, "blocker": 0.6}), BenchmarkMode.SYMBOLIC
        )
        assert fires == ["gated"]
        assert blocked == []

    def test_sym_prob_breaks_count_ties_by_population_prior(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot, case("c", {"fever": 1.0, "cough": 1.0}), BenchmarkMode.SYM_PROB
        )
        assert ranked == ["alpha", "beta"]

    def test_sym_prob_ignores_demographics(self, pair_snapshot):
        # a child case would favour beta under stratified priors, but this
        # mode only reads population-wide prevalence
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0}, demographics=Demographics(age=9)),
            BenchmarkMode.SYM_PROB,
        )
        assert ranked == ["alpha", "beta"]

    def test_sym_prob_never_lets_priors_outvote_rule_counts(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot,
            case("c", {"fever": 1.0, "cough": 1.0, "spots": 1.0}),
            BenchmarkMode.SYM_PROB,
        )
        assert ranked == ["beta", "alpha"]

    def test_sym_fuzzy_reads_weights_but_not_priors(self, pair_snapshot):
        ranked = rank_case(
            pair_snapshot,
            case(
                "c",
                {"fever": 0.85, "cough": 0.85, "rash": 0.9, "spots": 0.6},
                demographics=Demographics(age=9),
            ),
            BenchmarkMode.SYM_FUZZY,
        )
        assert ranked[0] == "alpha"

    def test_full_mode_reads_stratified_priors(self, pair_snapshot):
        child = rank_case(
            pair_snapshot,
            case("c", {"fever": 0.95, "cough": 0.95}, demographics=Demographics(age=9)),
            BenchmarkMode.FULL,
        )
        senior = rank_case(
            pair_snapshot,
            case("c", {"fever": 0.95, "cough": 0.95}, demographics=Demographics(age=80)),
            BenchmarkMode.FULL,
        )
        assert child == ["beta", "alpha"]
        assert senior == ["alpha", "beta"]

    def test_text_case_needs_extraction_config(self, pair_snapshot):
        record = CaseRecord(case_id="t", text="Fever and cough.")
        with pytest.raises(EvaluationError):
            rank_case(pair_snapshot, record, BenchmarkMode.SIMPLE)

    def test_text_case_runs_through_extraction(self, pair_snapshot):
        table = TermTable.from_tsv(
            "fever\tfever\tpresence\tpresent\ncough\tcough\tpresence\tpresent\n"
        )
        config = ExtractionConfig(term_table=table, hedge_lexicon={})
        record = CaseRecord(case_id="t", text="Fever and cough for two days.")
        ranked = rank_case(
            pair_snapshot,
            record,
            BenchmarkMode.SIMPLE,
            extraction_config=config,
        )
        assert ranked == ["alpha", "beta"]


class TestRunBenchmark:
    def test_report_covers_requested_cutoffs(self, pair_snapshot):
        cases = [
            case("c1", {"fever": 1.0, "cough": 1.0, "rash": 1.0}, labels=["alpha"]),
            case("c2", {"fever": 1.0, "cough": 1.0, "spots": 1.0}, labels=["beta"]),
        ]
        result = run_benchmark(pair_snapshot, cases, BenchmarkMode.SYM_FUZZY)
        assert sorted(result.report.at) == [1, 3, 5]
        assert result.report.cases == 2
        assert result.report.at[1].accuracy == 1
        assert len(result.predictions) == 2

    def test_empty_case_list_rejected(self, pair_snapshot):
        with pytest.raises(EmptyDatasetError):
            run_benchmark(pair_snapshot, [], BenchmarkMode.SIMPLE)


# ===================== synthetic corpus =====================


@pytest.fixture(scope="module")
def benchmark_world():
    return (
        synthetic.benchmark_snapshot(),
        synthetic.make_benchmark_cases(),
        synthetic.benchmark_index(),
    )


class TestSyntheticBenchmark:
    def test_generation_is_deterministic(self):
        assert synthetic.make_benchmark_cases() == synthetic.make_benchmark_cases()

    def test_corpus_shape(self, benchmark_world):
        snapshot, cases, index = benchmark_world
        assert len(cases) == 200
        assert len(snapshot.diseases()) == 12
        known = {
            symptom for pair in synthetic.benchmark_pairs()
            for symptom in (*pair.shared, *pair.distinct.values())
        }
        for record in cases:
            assert len(record.labels) == 1
            assert record.labels[0] in snapshot.diseases()
            for name, weight in record.symptoms or ():
                assert name in known
                assert 0.0 < weight <= 1.0

    def test_every_disease_appears_as_truth(self, benchmark_world):
        _, cases, _ = benchmark_world
        assert {record.labels[0] for record in cases} == set(
            synthetic.benchmark_snapshot().diseases()
        )

    def test_ablation_accuracy_climbs_mode_by_mode(self, benchmark_world):
        snapshot, cases, index = benchmark_world
        accuracy = {}
        for mode in BenchmarkMode:
            kwargs = {"index": index} if mode is BenchmarkMode.FULL else {}
            result = run_benchmark(snapshot, cases, mode, **kwargs)
            accuracy[mode] = result.report.at[1].accuracy
        ordered = [
            BenchmarkMode.SIMPLE,
            BenchmarkMode.SYMBOLIC,
            BenchmarkMode.SYM_FUZZY,
            BenchmarkMode.SYM_PROB,
            BenchmarkMode.FULL,
        ]
        for weaker, stronger in zip(ordered, ordered[1:]):
            assert accuracy[stronger] - accuracy[weaker] >= Fraction(1, 25)
        assert accuracy[BenchmarkMode.SIMPLE] < Fraction(3, 5)
        assert accuracy[BenchmarkMode.FULL] >= Fraction(17, 20)


class TestSyntheticStream:
    def test_stream_is_deterministic(self):
        assert synthetic.make_stream_cases() == synthetic.make_stream_cases()

    def test_initial_wiring_misranks_every_case(self):
        snapshot = synthetic.stream_snapshot()
        for record in synthetic.make_stream_cases():
            assert find_violation(snapshot, record, LearnerConfig()) is not None

    def test_training_converges_within_ten_passes(self):
        snapshot, history = train_until_stable(
            synthetic.stream_snapshot(), synthetic.make_stream_cases(), LearnerConfig()
        )
        assert len(history) <= 10
        assert history[-1] == 0
        assert history == sorted(history, reverse=True)
        for record in synthetic.make_stream_cases():
            assert find_violation(snapshot, record, LearnerConfig()) is None


class TestFixtureFiles:
    def test_write_fixtures_round_trips(self, tmp_path):
        synthetic.write_fixtures(tmp_path)
        cases = load_dataset(tmp_path / "cases.jsonl")
        assert cases == synthetic.make_benchmark_cases()
        stream = load_dataset(tmp_path / "stream.jsonl")
        assert stream == synthetic.make_stream_cases()
        index = CaseIndex.load(tmp_path / "index.jsonl")
        assert len(index.entries) == len(synthetic.make_index_cases())
        program = dsl.parse_program((tmp_path / "benchmark.kb").read_text())
        rebuilt = KnowledgeSnapshot.create(
            tuple(program.rules), priors=tuple(program.priors), timestamp=0.0
        )
        assert rebuilt.content_hash == synthetic.benchmark_snapshot().content_hash
        stream_program = dsl.parse_program((tmp_path / "stream.kb").read_text())
        assert (
            KnowledgeSnapshot.create(tuple(stream_program.rules), timestamp=0.0).content_hash
            == synthetic.stream_snapshot().content_hash
        )
