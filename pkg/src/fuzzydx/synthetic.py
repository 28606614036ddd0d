"""Deterministic synthetic corpora for benchmarking and learning tests.

The benchmark world has twelve diseases arranged in six confusable pairs.
A pair shares two symptoms and each member keeps one distinguishing symptom,
so ranking quality hinges on how much of the evidence a mode can read:

* ``clean`` cases carry the full triple at weight 1.0 — everything solves them.
* ``clear`` cases carry the triple with firm weights plus a faint decoy triple
  from another pair, which fools bag-of-symptom overlap but nothing else.
* ``contrast`` cases contain both distinguishers, the true one strong and the
  partner's mid-weight — only weight-aware scoring separates them.
* ``ambiguous`` cases carry just the shared pair, so priors must break the tie.
* ``noisy`` cases hedge the true distinguisher down to decoy level, leaving a
  tie that only demographic-aware priors resolve reliably.

Ground truth favours the pair's high-prevalence member 3:1, and prevalence is
age-structured: the rare member dominates in children.  Case demographics are
sampled to match, which is what gives the demographics-aware mode its edge.

Everything is driven by a seeded RNG; the frozen seeds below are the ones the
shipped fixture files were generated with.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .kb import KnowledgeSnapshot, canonical_kb_text
from .model import (
    BodyLiteral,
    CaseRecord,
    Demographics,
    Literal,
    PriorEntry,
    Rule,
)
from .ranking import CaseIndex, HashingEmbedder

BENCHMARK_SEED = 21
STREAM_SEED = 11

SHARED_EDGE = 0.85
DISTINCT_EDGE = 0.95
COMMON_PREVALENCE = 0.06
RARE_PREVALENCE = 0.02
RARE_YOUNG_PREVALENCE = 0.12

CASE_MIX = (("clean", 15), ("clear", 50), ("contrast", 30), ("ambiguous", 50), ("noisy", 55))


# ===================== benchmark catalog =====================


@dataclass(frozen=True)
class DiseasePair:
    """One confusable disease pair: members, shared symptoms, distinguishers."""

    common: str
    rare: str
    shared: tuple[str, str]
    distinct: dict[str, str]

    @property
    def members(self) -> tuple[str, str]:
        return (self.common, self.rare)


def benchmark_pairs() -> list[DiseasePair]:
    pairs = []
    for p in range(6):
        first = f"d{2 * p + 1:02d}"
        second = f"d{2 * p + 2:02d}"
        # Alternate which member is common so lexicographic tie-breaking
        # carries no systematic information about prevalence.
        common, rare = (first, second) if p % 2 == 0 else (second, first)
        pairs.append(
            DiseasePair(
                common=common,
                rare=rare,
                shared=(f"s{p}a", f"s{p}b"),
                distinct={first: f"u{2 * p + 1:02d}", second: f"u{2 * p + 2:02d}"},
            )
        )
    return pairs


def _rule(disease: str, symptoms: Sequence[tuple[str, float]]) -> Rule:
    return Rule(
        head=Literal("diagnosis", (disease,)),
        body=tuple(
            BodyLiteral(Literal("symptom", (name,)), weight) for name, weight in symptoms
        ),
    )


def benchmark_knowledge() -> tuple[list[Rule], list[PriorEntry]]:
    rules: list[Rule] = []
    priors: list[PriorEntry] = []
    for pair in benchmark_pairs():
        for disease in sorted(pair.members):
            rules.append(
                _rule(
                    disease,
                    [(pair.shared[0], SHARED_EDGE), (pair.shared[1], SHARED_EDGE)],
                )
            )
            rules.append(_rule(disease, [(pair.distinct[disease], DISTINCT_EDGE)]))
        priors.append(PriorEntry(pair.common, prevalence=COMMON_PREVALENCE))
        priors.append(PriorEntry(pair.rare, prevalence=RARE_PREVALENCE))
        priors.append(
            PriorEntry(pair.rare, age_band="age_0_17", prevalence=RARE_YOUNG_PREVALENCE)
        )
    return rules, priors


def benchmark_snapshot() -> KnowledgeSnapshot:
    rules, priors = benchmark_knowledge()
    return KnowledgeSnapshot.create(rules, priors=priors, timestamp=0.0)


# ===================== benchmark cases =====================


def _demographics(rng: random.Random, truth_is_common: bool) -> Demographics:
    old = rng.random() < (0.9 if truth_is_common else 0.1)
    age = rng.randint(65, 90) if old else rng.randint(3, 16)
    return Demographics(
        age=age,
        sex=rng.choice(("female", "male")),
        region=rng.choice(("north", "south", "east", "west")),
    )


def _decoy_triple(rng: random.Random, pairs: list[DiseasePair], avoid: DiseasePair) -> list[str]:
    other = rng.choice([p for p in pairs if p is not avoid])
    member = rng.choice(other.members)
    return [other.shared[0], other.shared[1], other.distinct[member]]


def make_benchmark_cases(
    n: int = 200, seed: int = BENCHMARK_SEED
) -> list[CaseRecord]:
    rng = random.Random(seed)
    pairs = benchmark_pairs()
    kinds: list[str] = []
    for kind, share in CASE_MIX:
        kinds.extend([kind] * round(n * share / sum(c for _, c in CASE_MIX)))
    while len(kinds) < n:
        kinds.append("ambiguous")
    del kinds[n:]
    rng.shuffle(kinds)

    cases = []
    for i, kind in enumerate(kinds):
        pair = rng.choice(pairs)
        truth_is_common = rng.random() < 0.75
        truth = pair.common if truth_is_common else pair.rare
        partner = pair.rare if truth_is_common else pair.common
        s1, s2 = pair.shared

        symptoms: list[tuple[str, float]] = []
        if kind == "clean":
            symptoms = [(s1, 1.0), (s2, 1.0), (pair.distinct[truth], 1.0)]
        elif kind == "clear":
            symptoms = [
                (s1, rng.uniform(0.7, 0.9)),
                (s2, rng.uniform(0.7, 0.9)),
                (pair.distinct[truth], rng.uniform(0.7, 0.9)),
            ]
            symptoms += [
                (name, rng.uniform(0.15, 0.3))
                for name in _decoy_triple(rng, pairs, pair)
            ]
        elif kind == "contrast":
            symptoms = [
                (s1, rng.uniform(0.75, 0.95)),
                (s2, rng.uniform(0.75, 0.95)),
                (pair.distinct[truth], rng.uniform(0.85, 1.0)),
                (pair.distinct[partner], rng.uniform(0.5, 0.65)),
            ]
        elif kind == "ambiguous":
            symptoms = [(s1, rng.uniform(0.9, 1.0)), (s2, rng.uniform(0.9, 1.0))]
        else:  # noisy
            symptoms = [
                (s1, rng.uniform(0.8, 0.9)),
                (s2, rng.uniform(0.8, 0.9)),
                (pair.distinct[truth], rng.uniform(0.2, 0.3)),
            ]
            symptoms += [
                (name, rng.uniform(0.2, 0.3))
                for name in _decoy_triple(rng, pairs, pair)
            ]

        rng.shuffle(symptoms)
        cases.append(
            CaseRecord(
                case_id=f"bm{i + 1:03d}",
                symptoms=tuple((name, round(weight, 4)) for name, weight in symptoms),
                labels=(truth,),
                demographics=_demographics(rng, truth_is_common),
            )
        )
    return cases


def make_index_cases(per_disease: int = 5) -> list[CaseRecord]:
    """Clean reference encounters: every disease with its full triple."""
    cases = []
    for pair in benchmark_pairs():
        for disease in sorted(pair.members):
            triple = [pair.shared[0], pair.shared[1], pair.distinct[disease]]
            for copy in range(per_disease):
                cases.append(
                    CaseRecord(
                        case_id=f"ref_{disease}_{copy + 1}",
                        symptoms=tuple((name, 1.0) for name in triple),
                        labels=(disease,),
                    )
                )
    return cases


def benchmark_index(dimension: int = 256) -> CaseIndex:
    return CaseIndex.build(make_index_cases(), HashingEmbedder(dimension))


# ===================== learning stream =====================

STREAM_DISEASES = 20
STREAM_SYMPTOMS = 50
STREAM_INITIAL_WEIGHT = 0.8


def stream_support(i: int) -> tuple[str, ...]:
    """Disjoint symptom sets: three apiece for the first ten diseases, two
    for the rest, covering t01..t50 exactly once."""
    if i < 10:
        start = 3 * i
        return tuple(f"t{start + j:02d}" for j in (1, 2, 3))
    start = 30 + 2 * (i - 10)
    return tuple(f"t{start + j:02d}" for j in (1, 2))


def stream_knowledge() -> list[Rule]:
    """Initial rules wired one disease off: ``e_i`` gets ``e_{i+1}``'s symptoms.

    Every case therefore starts out misranked, and repeated passive-aggressive
    passes must rebuild the diagonal wiring.
    """
    rules = []
    for i in range(STREAM_DISEASES):
        wrong = stream_support((i + 1) % STREAM_DISEASES)
        rules.append(
            _rule(f"e{i + 1:02d}", [(s, STREAM_INITIAL_WEIGHT) for s in wrong])
        )
    return rules


def stream_snapshot() -> KnowledgeSnapshot:
    return KnowledgeSnapshot.create(stream_knowledge(), timestamp=0.0)


def make_stream_cases(copies: int = 3, seed: int = STREAM_SEED) -> list[CaseRecord]:
    rng = random.Random(seed)
    cases = []
    for i in range(STREAM_DISEASES):
        disease = f"e{i + 1:02d}"
        support = stream_support(i)
        for copy in range(copies):
            cases.append(
                CaseRecord(
                    case_id=f"st_{disease}_{copy + 1}",
                    symptoms=tuple((name, 1.0) for name in support),
                    labels=(disease,),
                )
            )
    rng.shuffle(cases)
    return cases


# ===================== fixture files =====================


def write_benchmark_fixtures(directory: str | Path, n: int = 200) -> None:
    from .evaluation import save_dataset

    directory = Path(directory)
    rules, priors = benchmark_knowledge()
    (directory / "benchmark.kb").write_text(canonical_kb_text(rules, priors))
    save_dataset(make_benchmark_cases(n), directory / "cases.jsonl")
    benchmark_index().save(directory / "index.jsonl")


def write_stream_fixtures(directory: str | Path) -> None:
    from .evaluation import save_dataset

    directory = Path(directory)
    (directory / "stream.kb").write_text(canonical_kb_text(stream_knowledge(), []))
    save_dataset(make_stream_cases(), directory / "stream.jsonl")


def write_fixtures(directory: str | Path) -> None:
    write_benchmark_fixtures(directory)
    write_stream_fixtures(directory)
