"""Datasets, top-k metrics, and the ablation benchmark harness.

Metrics are computed in exact rational arithmetic and only converted to
floats (or half-up-rounded percentages) at the edge, so reported tables are
reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .extraction import ExtractionConfig, extract_facts
from .inference import EngineConfig
from .kb import KnowledgeSnapshot, edge_view
from .model import CaseRecord, Demographics, EngineError, FuzzyFact, Literal
from .ranking import CaseIndex, diagnose, lookup_prior


class EvaluationError(EngineError):
    pass


class DatasetParseError(EvaluationError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"dataset line {line}: {reason}")


class EmptyDatasetError(EvaluationError):
    pass


# ===================== datasets =====================


def _parse_symptoms(raw) -> tuple[tuple[str, float], ...]:
    symptoms = []
    for item in raw:
        if isinstance(item, str):
            symptoms.append((item, 1.0))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            name, weight = item
            symptoms.append((str(name), float(weight)))
        else:
            raise ValueError(f"symptom entries are names or [name, weight] pairs, got {item!r}")
    return tuple(symptoms)


def parse_case(data: dict) -> CaseRecord:
    case_id = data.get("id", data.get("case_id"))
    if not case_id:
        raise ValueError("case needs an 'id'")
    symptoms = data.get("symptoms")
    return CaseRecord(
        case_id=str(case_id),
        text=data.get("text"),
        symptoms=_parse_symptoms(symptoms) if symptoms is not None else None,
        labels=tuple(str(label) for label in data.get("labels", ())),
        demographics=Demographics.from_json(data.get("demographics")),
    )


def case_to_json(case: CaseRecord) -> dict:
    payload: dict = {"id": case.case_id, "labels": list(case.labels)}
    if case.text is not None:
        payload["text"] = case.text
    if case.symptoms is not None:
        payload["symptoms"] = [[name, weight] for name, weight in case.symptoms]
    demographics = case.demographics.to_json()
    if any(value is not None for value in demographics.values()):
        payload["demographics"] = demographics
    return payload


def load_dataset(path: str | Path) -> list[CaseRecord]:
    """Read a JSONL case file; every row needs an id, labels, and exactly one
    of ``text`` / ``symptoms``."""
    cases = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                cases.append(parse_case(json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise DatasetParseError(number, str(exc)) from exc
    if not cases:
        raise EmptyDatasetError(f"no cases in {path}")
    return cases


def save_dataset(cases: Sequence[CaseRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for case in cases:
            handle.write(json.dumps(case_to_json(case)) + "\n")


# ===================== top-k metrics =====================


@dataclass(frozen=True)
class TopKMetrics:
    """Exact top-k retrieval quality over a prediction set.

    ``accuracy`` is the fraction of cases with at least one gold label in
    the top k; ``precision``/``recall`` average per-case values with k
    (respectively gold-set size) as the divisor, so short prediction lists
    are penalized rather than rejected.
    """

    k: int
    cases: int
    accuracy: Fraction
    precision: Fraction
    recall: Fraction

    @property
    def f1(self) -> Fraction:
        if self.precision + self.recall == 0:
            return Fraction(0)
        return 2 * self.precision * self.recall / (self.precision + self.recall)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "cases": self.cases,
            "accuracy": float(self.accuracy),
            "precision": float(self.precision),
            "recall": float(self.recall),
            "f1": float(self.f1),
        }


def percent(value: Fraction, places: int = 1) -> str:
    """Exact half-up percentage display, e.g. Fraction(3295, 10000) -> '33.0'."""
    scaled = Decimal(value.numerator * 100) / Decimal(value.denominator)
    quantum = Decimal(1).scaleb(-places)
    return str(scaled.quantize(quantum, rounding=ROUND_HALF_UP))


def topk_metrics(
    predictions: Sequence[Sequence[str]], golds: Sequence[Sequence[str]], k: int
) -> TopKMetrics:
    """Metrics at cutoff k; prediction lists shorter than k simply score
    what they have against the full divisor."""
    if k <= 0:
        raise EvaluationError(f"k must be positive, got {k}")
    if len(predictions) != len(golds):
        raise EvaluationError(
            f"{len(predictions)} prediction lists vs {len(golds)} gold sets"
        )
    if not predictions:
        raise EmptyDatasetError("metrics over zero cases are undefined")
    hits = Fraction(0)
    precision = Fraction(0)
    recall = Fraction(0)
    for ranked, gold in zip(predictions, golds):
        gold_set = set(gold)
        top = list(ranked)[:k]
        overlap = sum(1 for d in top if d in gold_set)
        hits += 1 if overlap else 0
        precision += Fraction(overlap, k)
        recall += Fraction(overlap, len(gold_set)) if gold_set else Fraction(0)
    n = len(predictions)
    return TopKMetrics(
        k=k,
        cases=n,
        accuracy=Fraction(hits, n),
        precision=precision / n,
        recall=recall / n,
    )


@dataclass
class MetricsReport:
    mode: str
    cases: int
    at: dict[int, TopKMetrics]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "cases": self.cases,
            "metrics": {str(k): m.to_json() for k, m in sorted(self.at.items())},
        }

    def table(self) -> str:
        lines = [f"{self.mode} ({self.cases} cases)"]
        lines.append("  k   acc%   prec%   rec%    f1%")
        for k, m in sorted(self.at.items()):
            lines.append(
                f"  {k:<3} {percent(m.accuracy):>6} {percent(m.precision):>6} "
                f"{percent(m.recall):>6} {percent(m.f1):>6}"
            )
        return "\n".join(lines)


DEFAULT_CUTOFFS = (1, 3, 5)


# ===================== benchmark modes =====================


class BenchmarkMode(Enum):
    SIMPLE = "simple"
    SYMBOLIC = "symbolic"
    SYM_FUZZY = "sym_fuzzy"
    SYM_PROB = "sym_prob"
    FULL = "full"


CRISP_CUTOFF = 0.5  # a fact is "asserted" for crisp modes at or above this


def _case_facts(
    case: CaseRecord, extraction_config: Optional[ExtractionConfig]
) -> list[FuzzyFact]:
    if case.symptoms is not None:
        return case.symptom_facts()
    if extraction_config is None:
        raise EvaluationError(
            f"case {case.case_id} is raw text; supply an extraction configuration"
        )
    return extract_facts(case.text or "", extraction_config).facts


def _crisp_fire_counts(
    snapshot: KnowledgeSnapshot, facts: Sequence[FuzzyFact]
) -> dict[str, int]:
    """Firing-rule counts with hedges stripped: facts below the crisp cutoff
    vanish, the rest (and all rule edges) count as fully true."""
    asserted = [f.literal for f in facts if f.weight >= CRISP_CUTOFF]
    counts: dict[str, int] = {}
    for rule in snapshot.rules:
        fired = True
        for entry in rule.body:
            pattern = entry.literal.positive()
            matched = any(pattern.matches(lit) for lit in asserted)
            if entry.literal.negated == matched:
                fired = False
                break
        if fired:
            counts[rule.disease] = counts.get(rule.disease, 0) + 1
    return counts


def _rank_simple(snapshot: KnowledgeSnapshot, facts: Sequence[FuzzyFact]) -> list[str]:
    """Bag-of-symptoms overlap against each disease's known symptom edges."""
    present = {
        f.literal.args[0]
        for f in facts
        if f.literal.predicate == "symptom" and f.weight > 0.0
    }
    overlap: dict[str, int] = {}
    for (disease, symptom) in edge_view(snapshot):
        if symptom in present:
            overlap[disease] = overlap.get(disease, 0) + 1
    ranked = sorted(overlap.items(), key=lambda item: (-item[1], item[0]))
    return [disease for disease, count in ranked if count > 0]


def _rank_symbolic(snapshot: KnowledgeSnapshot, facts: Sequence[FuzzyFact]) -> list[str]:
    counts = _crisp_fire_counts(snapshot, facts)
    return [d for d, _ in sorted(counts.items(), key=lambda item: (-item[1], item[0]))]


def _rank_sym_prob(snapshot: KnowledgeSnapshot, facts: Sequence[FuzzyFact], config: EngineConfig) -> list[str]:
    counts = _crisp_fire_counts(snapshot, facts)
    floor = config.prior_floor if config.prior_floor is not None else 0.0

    def key(item):
        disease, count = item
        prior = lookup_prior(snapshot.priors, disease, None, floor)
        return (-count, -prior, disease)

    return [d for d, _ in sorted(counts.items(), key=key)]


def rank_case(
    snapshot: KnowledgeSnapshot,
    case: CaseRecord,
    mode: BenchmarkMode,
    config: EngineConfig = EngineConfig(),
    *,
    index: Optional[CaseIndex] = None,
    extraction_config: Optional[ExtractionConfig] = None,
) -> list[str]:
    """One case through one ablation mode, returning ranked disease names."""
    facts = _case_facts(case, extraction_config)
    if mode is BenchmarkMode.SIMPLE:
        return _rank_simple(snapshot, facts)
    if mode is BenchmarkMode.SYMBOLIC:
        return _rank_symbolic(snapshot, facts)
    if mode is BenchmarkMode.SYM_PROB:
        return _rank_sym_prob(snapshot, facts, config)
    if mode is BenchmarkMode.SYM_FUZZY:
        result = diagnose(snapshot, facts, _without_priors(config))
        return [c.disease for c in result.candidates]
    result = diagnose(
        snapshot, facts, config, index=index, demographics=case.demographics
    )
    return [c.disease for c in result.candidates]


def _without_priors(config: EngineConfig) -> EngineConfig:
    from dataclasses import replace

    return replace(config, use_priors=False)


@dataclass
class BenchmarkResult:
    report: MetricsReport
    predictions: list[list[str]]

    def to_json(self) -> dict:
        return {"report": self.report.to_json(), "predictions": self.predictions}


def run_benchmark(
    snapshot: KnowledgeSnapshot,
    cases: Sequence[CaseRecord],
    mode: BenchmarkMode,
    config: EngineConfig = EngineConfig(),
    *,
    index: Optional[CaseIndex] = None,
    extraction_config: Optional[ExtractionConfig] = None,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
) -> BenchmarkResult:
    if not cases:
        raise EmptyDatasetError("benchmark over zero cases")
    predictions = [
        rank_case(
            snapshot,
            case,
            mode,
            config,
            index=index,
            extraction_config=extraction_config,
        )
        for case in cases
    ]
    golds = [case.labels for case in cases]
    report = MetricsReport(
        mode=mode.value,
        cases=len(cases),
        at={k: topk_metrics(predictions, golds, k) for k in cutoffs},
    )
    return BenchmarkResult(report=report, predictions=predictions)
