"""Parser and printer tests for the clause text format."""

from __future__ import annotations

import random

import pytest

from fuzzydx import dsl
from fuzzydx.dsl import (
    DuplicateClauseError,
    ParseError,
    PrintError,
    WeightOutOfRangeError,
    parse_program,
    print_program,
)
from fuzzydx.model import FuzzyFact, Literal, Rule, rule_id_for

from corpus import DSL_PROGRAMS, random_program

ANGINA_RULE = (
    "diagnosis(stable_angina) :- symptom(chest_pain)@0.8, trigger(exertion)@0.9, "
    "risk(_), \\+ lab(troponin_elevated).\n"
)


class TestParse:
    def test_weighted_rule(self):
        program = parse_program(ANGINA_RULE)
        assert len(program.rules) == 1
        rule = program.rules[0]
        assert rule.disease == "stable_angina"
        assert [entry.weight for entry in rule.body] == [0.8, 0.9, 1.0, 1.0]
        assert [str(entry.literal) for entry in rule.body] == [
            "symptom(chest_pain)",
            "trigger(exertion)",
            "risk(_)",
            "\\+ lab(troponin_elevated)",
        ]

    def test_fuzzy_symptom_sugar(self):
        program = parse_program("fuzzy_symptom(fever, 0.6).")
        assert program.facts == [FuzzyFact(Literal("symptom", ("fever",)), 0.6)]

    def test_bare_fact_defaults_to_unit_weight(self):
        program = parse_program("risk(smoking).")
        assert program.facts == [FuzzyFact(Literal("risk", ("smoking",)), 1.0)]

    def test_prior_clause(self):
        program = parse_program("prior(flu, age_18_39, _, europe, 0.12).")
        entry = program.priors[0]
        assert entry.disease == "flu"
        assert entry.stratum == ("age_18_39", "_", "europe")
        assert entry.prevalence == 0.12

    def test_comments_and_blank_lines_skipped(self):
        source = "% header\n\n% another\nrisk(smoking). % trailing\n"
        program = parse_program(source)
        assert len(program.facts) == 1

    def test_zero_arity_literal(self):
        program = parse_program("diagnosis(flu) :- symptom(fever), \\+ immunized_recently.\n")
        assert program.rules[0].body[1].literal == Literal("immunized_recently", (), negated=True)

    def test_source_order_preserved(self):
        program = parse_program("symptom(b).\nsymptom(a).\nfuzzy_symptom(c, 0.2).\n")
        assert [f.literal.args[0] for f in program.facts] == ["b", "a", "c"]


class TestParseErrors:
    def test_missing_dot_reports_position(self):
        with pytest.raises(ParseError) as excinfo:
            parse_program("risk(smoking)")
        assert excinfo.value.line == 1
        assert excinfo.value.expected == "'.'"

    def test_error_on_second_line(self):
        with pytest.raises(ParseError) as excinfo:
            parse_program("risk(smoking).\ndiagnosis(flu) :- .\n")
        assert excinfo.value.line == 2

    def test_fact_weight_out_of_range(self):
        with pytest.raises(WeightOutOfRangeError):
            parse_program("fuzzy_symptom(fever, 1.5).")

    def test_rule_weight_out_of_range(self):
        with pytest.raises(WeightOutOfRangeError):
            parse_program("diagnosis(flu) :- symptom(fever)@1.01.")

    def test_prior_prevalence_zero_rejected(self):
        with pytest.raises(WeightOutOfRangeError):
            parse_program("prior(flu, _, _, _, 0).")

    def test_duplicate_rule(self):
        with pytest.raises(DuplicateClauseError):
            parse_program(
                "diagnosis(flu) :- symptom(fever)@0.5.\n"
                "diagnosis(flu) :- symptom(fever)@0.7.\n"
            )

    def test_duplicate_fact(self):
        with pytest.raises(DuplicateClauseError):
            parse_program("risk(smoking).\nrisk(smoking).\n")

    def test_duplicate_prior_stratum(self):
        with pytest.raises(DuplicateClauseError):
            parse_program(
                "prior(flu, _, male, _, 0.1).\nprior(flu, _, male, _, 0.2).\n"
            )

    def test_directive_rejected(self):
        with pytest.raises(ParseError):
            parse_program(":- table(all).")

    def test_wildcard_fact_rejected(self):
        with pytest.raises(ParseError):
            parse_program("risk(_).")

    def test_negated_fact_rejected(self):
        with pytest.raises(ParseError):
            parse_program("\\+ risk(smoking).")

    def test_uppercase_rejected(self):
        with pytest.raises(ParseError):
            parse_program("risk(Smoking).")

    def test_exponent_notation_rejected(self):
        with pytest.raises(ParseError):
            parse_program("fuzzy_symptom(fever, 1e-2).")

    def test_duplicate_body_literal_rejected(self):
        with pytest.raises(ParseError):
            parse_program("diagnosis(flu) :- symptom(fever)@0.2, symptom(fever)@0.3.")


class TestPrint:
    def test_fuzzy_fact_formatting(self):
        text = dsl.format_fact(FuzzyFact(Literal("symptom", ("x",)), 0.5))
        assert text == "fuzzy_symptom(x, 0.5)."

    def test_unit_weight_prints_bare(self):
        assert dsl.format_fact(FuzzyFact(Literal("symptom", ("x",)), 1.0)) == "symptom(x)."
        rule = parse_program("diagnosis(flu) :- symptom(fever)@1.0.").rules[0]
        assert dsl.format_rule(rule) == "diagnosis(flu) :- symptom(fever)."

    def test_minimal_digits(self):
        assert dsl.format_weight(0.5) == "0.5"
        assert dsl.format_weight(1.0) == "1"
        assert dsl.format_weight(0.0001) == "0.0001"
        assert dsl.format_weight(0.72) == "0.72"

    def test_formatted_weight_reparses_exactly(self):
        rng = random.Random(7)
        for _ in range(2000):
            value = rng.random()
            assert float(dsl.format_weight(value)) == value

    def test_weighted_nonsymptom_fact_unprintable(self):
        with pytest.raises(PrintError):
            dsl.format_fact(FuzzyFact(Literal("lab", ("troponin",)), 0.7))


class TestRoundTrip:
    @pytest.mark.parametrize("source", DSL_PROGRAMS)
    def test_parse_print_parse_fixpoint(self, source):
        once = parse_program(source)
        printed = print_program(once)
        again = parse_program(printed)
        assert once == again, f"round trip changed program:\n{source}\nvs\n{printed}"
        assert print_program(again) == printed, "printing is not a fixpoint"

    def test_random_programs_round_trip(self):
        rng = random.Random(42)
        for _ in range(200):
            program = random_program(rng)
            printed = print_program(program)
            assert parse_program(printed) == program, printed


class TestRuleIds:
    def test_id_stable_under_weight_change(self):
        a = parse_program("diagnosis(flu) :- symptom(fever)@0.5, risk(_).").rules[0]
        b = parse_program("diagnosis(flu) :- symptom(fever)@0.9, risk(_).").rules[0]
        assert a.rule_id == b.rule_id

    def test_id_ignores_body_order(self):
        a = parse_program("diagnosis(flu) :- symptom(fever), risk(_).").rules[0]
        b = parse_program("diagnosis(flu) :- risk(_), symptom(fever).").rules[0]
        assert a.rule_id == b.rule_id

    def test_id_changes_with_structure(self):
        a = parse_program("diagnosis(flu) :- symptom(fever).").rules[0]
        b = parse_program("diagnosis(flu) :- symptom(fever), symptom(cough).").rules[0]
        assert a.rule_id != b.rule_id

    def test_id_distinguishes_polarity(self):
        a = parse_program("diagnosis(flu) :- lab(x).").rules[0]
        b = parse_program("diagnosis(flu) :- \\+ lab(x).").rules[0]
        assert a.rule_id != b.rule_id

    def test_identical_text_same_id(self):
        first = parse_program(ANGINA_RULE).rules[0]
        second = parse_program(ANGINA_RULE).rules[0]
        assert first.rule_id == second.rule_id
        assert first.rule_id == rule_id_for(first.head, (e.literal for e in first.body))
