"""Core domain types shared across the engine.

Atoms are lowercase interned identifiers, literals are flat predicates over
atoms or the wildcard ``_``, and rules are weighted Horn clauses whose heads
are always ``diagnosis/1``.  Everything here is immutable; the knowledge-base
layer builds new snapshots instead of mutating these objects.
"""

from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

WILDCARD = "_"

_ATOM_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

HEAD_PREDICATE = "diagnosis"

# Predicates a rule body may mention; commits reject anything else so a typo
# like "sympton" cannot silently create a dead literal.
DEFAULT_BODY_PREDICATES = frozenset(
    {
        "symptom",
        "trigger",
        "risk",
        "lab",
        "test",
        "sign",
        "history",
        "finding",
        "exposure",
        "vital",
    }
)


class EngineError(Exception):
    """Base class for all domain errors raised by this package."""


def is_atom(value: str) -> bool:
    return bool(_ATOM_RE.match(value))


def check_atom(value: str, context: str = "atom") -> str:
    if not is_atom(value):
        raise ValueError(f"invalid {context} {value!r}: expected [a-z][a-z0-9_]*")
    return sys.intern(value)


def check_term(value: str, context: str = "term") -> str:
    if value == WILDCARD:
        return WILDCARD
    return check_atom(value, context)


# ===================== literals and facts =====================


@dataclass(frozen=True)
class Literal:
    """A flat predicate over atom/wildcard arguments, optionally negated.

    Negation is negation-as-failure: a negated literal holds when no fact
    matches it above the negation threshold.
    """

    predicate: str
    args: tuple[str, ...] = ()
    negated: bool = False

    def __post_init__(self) -> None:
        check_atom(self.predicate, "predicate")
        object.__setattr__(self, "args", tuple(check_term(a, "argument") for a in self.args))

    @property
    def is_ground(self) -> bool:
        return WILDCARD not in self.args

    def positive(self) -> "Literal":
        return Literal(self.predicate, self.args) if self.negated else self

    def matches(self, other: "Literal") -> bool:
        """True when a ground fact literal ``other`` satisfies this pattern."""
        if self.predicate != other.predicate or len(self.args) != len(other.args):
            return False
        return all(a == WILDCARD or a == b for a, b in zip(self.args, other.args))

    def __str__(self) -> str:
        inner = f"{self.predicate}({', '.join(self.args)})" if self.args else self.predicate
        return f"\\+ {inner}" if self.negated else inner


class Temporal(Enum):
    ACUTE = "acute"
    CHRONIC = "chronic"
    UNTAGGED = "untagged"


@dataclass(frozen=True)
class FuzzyFact:
    """A ground positive literal with a weight in [0, 1].

    ``span`` and ``source`` record where in the note the fact came from; they
    are provenance only and do not take part in equality.
    """

    literal: Literal
    weight: float = 1.0
    temporal: Temporal = Temporal.UNTAGGED
    span: Optional[tuple[int, int]] = field(default=None, compare=False)
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.literal.negated:
            raise ValueError("facts must be positive literals")
        if not self.literal.is_ground:
            raise ValueError(f"facts must be ground: {self.literal}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"fact weight {self.weight} outside [0, 1]")


# ===================== rules =====================


class Provenance(Enum):
    CURATED = "curated"
    INDUCED = "induced"
    CLINICIAN = "clinician"


@dataclass(frozen=True)
class BodyLiteral:
    """One rule-body entry: a literal and its edge weight.

    Weights live in [0, 1]; exactly-zero weights only arise when the online
    learner clips an update, and mark the literal for a later prune.
    """

    literal: Literal
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"edge weight {self.weight} outside [0, 1]")


def rule_id_for(head: Literal, body: Iterable[Literal]) -> str:
    """Deterministic rule id: a digest of the head plus the body literal multiset.

    Weights are deliberately excluded so weight nudges keep the id stable;
    any structural change produces a new id.
    """
    parts = [str(head)] + sorted(str(lit) for lit in body)
    digest = hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()
    return f"r{digest[:12]}"


@dataclass(frozen=True)
class Rule:
    """A weighted Horn clause with head ``diagnosis(d)``.

    ``provenance`` and ``created_at`` are bookkeeping and excluded from
    equality, so a round trip through the text format compares equal.
    """

    head: Literal
    body: tuple[BodyLiteral, ...]
    provenance: Provenance = field(default=Provenance.CURATED, compare=False)
    created_at: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.head.negated or self.head.predicate != HEAD_PREDICATE:
            raise ValueError(f"rule head must be positive {HEAD_PREDICATE}/1, got {self.head}")
        if len(self.head.args) != 1 or not self.head.is_ground:
            raise ValueError(f"rule head must name a single disease: {self.head}")
        if not self.body:
            raise ValueError("rule body must be non-empty")
        seen: set[Literal] = set()
        for entry in self.body:
            if entry.literal in seen:
                raise ValueError(f"duplicate body literal {entry.literal} in rule for {self.disease}")
            seen.add(entry.literal)

    @property
    def disease(self) -> str:
        return self.head.args[0]

    @property
    def rule_id(self) -> str:
        return rule_id_for(self.head, (entry.literal for entry in self.body))

    def body_weight(self, literal: Literal) -> Optional[float]:
        for entry in self.body:
            if entry.literal == literal:
                return entry.weight
        return None


# ===================== priors and cases =====================

AGE_BANDS = (
    (0, 17, "age_0_17"),
    (18, 39, "age_18_39"),
    (40, 64, "age_40_64"),
    (65, None, "age_65_plus"),
)


def age_band(age: int) -> str:
    if age < 0:
        raise ValueError(f"age {age} out of range")
    for low, high, band in AGE_BANDS:
        if age >= low and (high is None or age <= high):
            return band
    raise ValueError(f"age {age} out of range")


@dataclass(frozen=True)
class PriorEntry:
    """Prevalence of a disease within a demographic stratum.

    Any of the stratum fields may be the wildcard; lookup prefers the most
    specific matching entry.
    """

    disease: str
    age_band: str = WILDCARD
    sex: str = WILDCARD
    region: str = WILDCARD
    prevalence: float = 0.0

    def __post_init__(self) -> None:
        check_atom(self.disease, "disease")
        for name in ("age_band", "sex", "region"):
            check_term(getattr(self, name), name)
        if not 0.0 < self.prevalence <= 1.0:
            raise ValueError(f"prevalence {self.prevalence} outside (0, 1]")

    @property
    def stratum(self) -> tuple[str, str, str]:
        return (self.age_band, self.sex, self.region)

    def wildcards(self) -> int:
        return sum(1 for part in self.stratum if part == WILDCARD)


@dataclass(frozen=True)
class Demographics:
    age: Optional[int] = None
    sex: Optional[str] = None
    region: Optional[str] = None

    def band(self) -> Optional[str]:
        return age_band(self.age) if self.age is not None else None

    @classmethod
    def from_json(cls, data: Optional[dict]) -> "Demographics":
        if not data:
            return cls()
        return cls(age=data.get("age"), sex=data.get("sex"), region=data.get("region"))

    def to_json(self) -> dict:
        return {"age": self.age, "sex": self.sex, "region": self.region}


@dataclass(frozen=True)
class CaseRecord:
    """One clinical case: raw text or pre-extracted weighted symptoms.

    Exactly one of ``text`` and ``symptoms`` is set.  ``labels`` is the
    ground-truth diagnosis set where known.
    """

    case_id: str
    text: Optional[str] = None
    symptoms: Optional[tuple[tuple[str, float], ...]] = None
    labels: tuple[str, ...] = ()
    demographics: Demographics = Demographics()

    def __post_init__(self) -> None:
        if (self.text is None) == (self.symptoms is None):
            raise ValueError(f"case {self.case_id}: exactly one of text/symptoms required")

    def symptom_names(self) -> tuple[str, ...]:
        if self.symptoms is None:
            raise ValueError(f"case {self.case_id} carries raw text, not symptoms")
        return tuple(name for name, _ in self.symptoms)

    def symptom_facts(self) -> list[FuzzyFact]:
        return [
            FuzzyFact(Literal("symptom", (name,)), weight)
            for name, weight in (self.symptoms or ())
        ]


def sorted_unique(values: Sequence[str]) -> tuple[str, ...]:
    return tuple(sorted(set(values)))
