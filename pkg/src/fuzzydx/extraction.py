"""Clinical note to weighted fact extraction.

The pipeline is deliberately boring and auditable: segment the note by
section headers, match a curated phrase table, attach hedge weights from a
lexicon, normalize duration phrases, then verify every candidate triple
against the raw text before anything becomes a fact.  Verification rejects
triples whose claimed surface text is not in the note and triples negated
within a small token window, so a sloppier extractor plugged in behind the
same interface cannot smuggle facts past the checks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence

from .model import EngineError, FuzzyFact, Literal, Temporal

# ===================== errors =====================


class ExtractionError(EngineError):
    pass


class UnmappableRelationError(ExtractionError):
    def __init__(self, relation: str):
        self.relation = relation
        super().__init__(f"no fact mapping for relation {relation!r}")


# ===================== segmentation =====================


class SegmentKind(Enum):
    CHIEF_COMPLAINT = "chief_complaint"
    HISTORY = "history"
    VITALS = "vitals"
    LABS = "labs"
    OTHER = "other"


# Longest header wins; anything here not mapped to a specific kind is Other.
_SEGMENT_HEADERS: dict[str, SegmentKind] = {
    "chief complaint": SegmentKind.CHIEF_COMPLAINT,
    "history of present illness": SegmentKind.HISTORY,
    "history": SegmentKind.HISTORY,
    "hpi": SegmentKind.HISTORY,
    "past medical history": SegmentKind.HISTORY,
    "vital signs": SegmentKind.VITALS,
    "vitals": SegmentKind.VITALS,
    "laboratory": SegmentKind.LABS,
    "lab results": SegmentKind.LABS,
    "labs": SegmentKind.LABS,
    "exam": SegmentKind.OTHER,
    "physical exam": SegmentKind.OTHER,
    "medications": SegmentKind.OTHER,
    "assessment": SegmentKind.OTHER,
    "plan": SegmentKind.OTHER,
    "social": SegmentKind.OTHER,
}

_HEADERS_BY_LENGTH = sorted(_SEGMENT_HEADERS, key=len, reverse=True)


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    start: int
    end: int
    text: str


def _header_kind(line: str) -> Optional[SegmentKind]:
    normalized = line.lstrip().lower()
    for header in _HEADERS_BY_LENGTH:
        if normalized.startswith(header):
            rest = normalized[len(header):]
            if rest == "" or rest[0] in ":.- \t":
                return _SEGMENT_HEADERS[header]
    return None


def segment_note(text: str) -> list[Segment]:
    """Split a note into header-delimited sections.

    Whatever precedes the first recognized header is the chief complaint.
    Segments are contiguous, in document order, and cover the whole note.
    """
    boundaries: list[tuple[int, SegmentKind]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        kind = _header_kind(line)
        if kind is not None:
            boundaries.append((offset, kind))
        offset += len(line)

    segments: list[Segment] = []
    if not boundaries or boundaries[0][0] > 0:
        end = boundaries[0][0] if boundaries else len(text)
        segments.append(Segment(SegmentKind.CHIEF_COMPLAINT, 0, end, text[0:end]))
    for i, (start, kind) in enumerate(boundaries):
        end = boundaries[i + 1][0] if i + 1 < len(boundaries) else len(text)
        segments.append(Segment(kind, start, end, text[start:end]))
    return segments


# ===================== term table and triples =====================


@dataclass(frozen=True)
class TermEntry:
    phrase: str
    entity: str
    relation: str
    value: str


class TermTable:
    """Phrase-to-concept table; longest phrase wins at a given position."""

    def __init__(self, entries: Iterable[TermEntry]):
        self.entries = sorted(entries, key=lambda e: (-len(e.phrase), e.phrase))

    @classmethod
    def from_tsv(cls, text: str) -> "TermTable":
        entries = []
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ExtractionError(
                    f"term table line {number}: expected 'phrase<TAB>entity<TAB>relation<TAB>value'"
                )
            entries.append(TermEntry(parts[0].strip().lower(), *(p.strip() for p in parts[1:])))
        return cls(entries)


@dataclass(frozen=True)
class Triple:
    """One extracted assertion, pinned to the text that produced it."""

    entity: str
    relation: str
    value: str
    hedge_weight: float = 1.0
    span: tuple[int, int] = (0, 0)
    surface: Optional[str] = None


class Extractor(Protocol):
    def extract(self, note: str) -> list[Triple]: ...


# ===================== tokenization helpers =====================

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_SENTENCE_SPLIT = re.compile(r"[.;\n]")


def _tokens(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text.lower())]


def _sentence_index(boundaries: list[int], position: int) -> int:
    index = 0
    for boundary in boundaries:
        if position < boundary:
            return index
        index += 1
    return index


def _sentence_boundaries(text: str) -> list[int]:
    return [m.start() for m in _SENTENCE_SPLIT.finditer(text)]


# ===================== default extractor =====================


@dataclass(frozen=True)
class ExtractionConfig:
    term_table: TermTable
    hedge_lexicon: dict[str, float]
    negation_window: int = 5
    hedge_window: int = 3
    acute_cutoff_days: int = 14

    def with_lexicon(self, lexicon: dict[str, float]) -> "ExtractionConfig":
        """A copy using the versioned hedge lexicon; empty means keep ours."""
        if not lexicon:
            return self
        return replace(self, hedge_lexicon=dict(lexicon))


class LexiconExtractor:
    """Deterministic extractor over a curated phrase table.

    Matches are case-insensitive, on word boundaries, greedy left-to-right
    with the longest phrase winning; hedge terms within a few tokens of the
    match set its weight.
    """

    def __init__(self, term_table: TermTable, hedge_lexicon: dict[str, float], hedge_window: int = 3):
        self.term_table = term_table
        # Hedge phrases are matched on token sequences, so pre-tokenize them.
        self.hedges = [
            (tuple(t for t, _, _ in _tokens(term)), weight)
            for term, weight in sorted(hedge_lexicon.items(), key=lambda kv: (-len(kv[0]), kv[0]))
        ]
        self.hedge_window = hedge_window

    def extract(self, note: str) -> list[Triple]:
        triples: list[Triple] = []
        lowered = note.lower()
        tokens = _tokens(note)
        boundaries = _sentence_boundaries(note)
        matches: list[tuple[int, int, TermEntry]] = []
        for entry in self.term_table.entries:
            for match in re.finditer(rf"\b{re.escape(entry.phrase)}\b", lowered):
                matches.append((match.start(), match.end(), entry))
        matches.sort(key=lambda m: (m[0], -(m[1] - m[0])))
        taken_until = -1
        for start, end, entry in matches:
            if start <= taken_until:
                continue
            taken_until = end - 1
            weight = self._hedge_weight(tokens, boundaries, start, end)
            triples.append(
                Triple(
                    entity=entry.entity,
                    relation=entry.relation,
                    value=entry.value,
                    hedge_weight=weight,
                    span=(start, end),
                    surface=note[start:end],
                )
            )
        return triples

    def _hedge_weight(
        self,
        tokens: list[tuple[str, int, int]],
        boundaries: list[int],
        start: int,
        end: int,
    ) -> float:
        before = [i for i, (_, s, _) in enumerate(tokens) if s < start]
        after = [i for i, (_, s, _) in enumerate(tokens) if s >= end]
        sentence = _sentence_index(boundaries, start)
        # Nearest hedge wins; positions before the match take precedence.
        candidates = list(reversed(before[-self.hedge_window:])) + after[: self.hedge_window]
        for index in candidates:
            if _sentence_index(boundaries, tokens[index][1]) != sentence:
                continue
            for hedge_tokens, weight in self.hedges:
                window = tuple(t for t, _, _ in tokens[index : index + len(hedge_tokens)])
                if window == hedge_tokens:
                    return weight
        return 1.0


class RemoteExtractor:
    """Client for an external extraction service speaking JSON over HTTP.

    The response triples get surfaces re-derived from their spans, so the
    downstream verification still applies to whatever the service claims.
    """

    def __init__(
        self,
        endpoint: str,
        token: Optional[str] = None,
        timeout: float = 10.0,
        client=None,
    ):
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout
        self._client = client  # injectable httpx.Client (e.g. with a mock transport)

    def extract(self, note: str) -> list[Triple]:
        import httpx

        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            if self._client is not None:
                response = self._client.post(self.endpoint, json={"note": note}, headers=headers)
            else:
                response = httpx.post(
                    self.endpoint, json={"note": note}, headers=headers, timeout=self.timeout
                )
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise ExtractionError(f"remote extractor failed: {exc}") from exc
        triples = []
        for item in payload.get("triples", []):
            span = tuple(item.get("span", (0, 0)))
            start, end = (span + (0, 0))[:2]
            valid = 0 <= start < end <= len(note)
            triples.append(
                Triple(
                    entity=item.get("entity", ""),
                    relation=item.get("relation", ""),
                    value=item.get("value", ""),
                    hedge_weight=float(item.get("hedge_weight", 1.0)),
                    span=(start, end),
                    surface=note[start:end] if valid else None,
                )
            )
        return triples


# ===================== temporal normalization =====================

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
    "thirteen": 13, "fourteen": 14, "fifteen": 15, "twenty": 20, "thirty": 30,
}

_DURATION_PATTERNS = [
    re.compile(r"\bfor the (?:past|last) (?P<count>\w+) (?P<unit>day|days|week|weeks)\b"),
    re.compile(r"\b(?P<count>\w+) (?P<unit>day|days|week|weeks) ago\b"),
    re.compile(r"\b(?P<since>since yesterday)\b"),
]


@dataclass(frozen=True)
class TemporalMention:
    span: tuple[int, int]
    days: int

    def tag(self, acute_cutoff_days: int = 14) -> Temporal:
        return Temporal.ACUTE if self.days < acute_cutoff_days else Temporal.CHRONIC


def _parse_count(word: str) -> Optional[int]:
    if word.isdigit():
        return int(word)
    return _NUMBER_WORDS.get(word)


def normalize_temporal(text: str, offset: int = 0) -> list[TemporalMention]:
    """Duration phrases as day counts: last-N-days, N-ago, since-yesterday."""
    mentions = []
    lowered = text.lower()
    for pattern in _DURATION_PATTERNS:
        for match in pattern.finditer(lowered):
            if match.groupdict().get("since"):
                days = 1
            else:
                count = _parse_count(match.group("count"))
                if count is None:
                    continue
                days = count * (7 if match.group("unit").startswith("week") else 1)
            mentions.append(TemporalMention((offset + match.start(), offset + match.end()), days))
    mentions.sort(key=lambda m: m.span)
    return mentions


# ===================== verification =====================

_NEGATION_CUES = ("denies", "no", "without")
_NEGATION_BIGRAMS = (("negative", "for"),)

REJECT_HALLUCINATION = "hallucination"
REJECT_NEGATED = "negated"
REJECT_CONTRADICTED = "contradicted"


@dataclass
class VerificationReport:
    accepted: list[Triple]
    rejected: list[tuple[Triple, str]]


def _is_negated(note: str, tokens, boundaries, span: tuple[int, int], window: int) -> bool:
    start = span[0]
    sentence = _sentence_index(boundaries, start)
    before = [i for i, (_, s, _) in enumerate(tokens) if s < start]
    recent = before[-window:]
    for position, index in enumerate(recent):
        token, token_start, _ = tokens[index]
        if _sentence_index(boundaries, token_start) != sentence:
            continue
        if token in _NEGATION_CUES:
            return True
        for first, second in _NEGATION_BIGRAMS:
            if token == first and position + 1 < len(recent):
                next_token = tokens[recent[position + 1]][0]
                if next_token == second:
                    return True
    return False


def verify_facts(
    triples: Sequence[Triple], note: str, negation_window: int = 5
) -> VerificationReport:
    """Safety gate between extraction and inference.

    A triple is rejected when its claimed surface text does not occur in the
    note at its span (hallucination guard), or when a negation cue sits
    within the token window before the mention in the same sentence.  An
    entity negated anywhere drags its other mentions down too: contradiction
    resolves toward rejection.
    """
    tokens = _tokens(note)
    boundaries = _sentence_boundaries(note)
    accepted: list[Triple] = []
    rejected: list[tuple[Triple, str]] = []
    negated_entities: set[str] = set()

    checked: list[tuple[Triple, bool]] = []
    for triple in triples:
        start, end = triple.span
        span_ok = (
            triple.surface is not None
            and 0 <= start < end <= len(note)
            and note[start:end].lower() == triple.surface.lower()
            and triple.surface.lower() in note.lower()
        )
        if not span_ok:
            rejected.append((triple, REJECT_HALLUCINATION))
            continue
        negated = _is_negated(note, tokens, boundaries, triple.span, negation_window)
        if negated:
            negated_entities.add(triple.entity)
        checked.append((triple, negated))

    for triple, negated in checked:
        if negated:
            rejected.append((triple, REJECT_NEGATED))
        elif triple.entity in negated_entities:
            rejected.append((triple, REJECT_CONTRADICTED))
        else:
            accepted.append(triple)
    return VerificationReport(accepted=accepted, rejected=rejected)


# ===================== fact mapping =====================

# relation -> how the fact literal is built from (entity, value)
_RELATION_MAPPING = {
    "severity": lambda entity, value: Literal("symptom", (entity,)),
    "presence": lambda entity, value: Literal("symptom", (entity,)),
    "level": lambda entity, value: Literal("lab", (f"{entity}_{value}",)),
    "risk": lambda entity, value: Literal("risk", (entity,)),
    "trigger": lambda entity, value: Literal("trigger", (entity,)),
    "finding": lambda entity, value: Literal("test", (f"{entity}_{value}",)),
}


def mappable(triple: Triple) -> bool:
    if triple.relation not in _RELATION_MAPPING:
        return False
    try:
        _RELATION_MAPPING[triple.relation](triple.entity, triple.value)
    except ValueError:
        return False
    return True


def to_fuzzy_facts(
    triples: Sequence[Triple],
    temporal: Sequence[TemporalMention] = (),
    segments: Optional[Sequence[Segment]] = None,
    acute_cutoff_days: int = 14,
) -> list[FuzzyFact]:
    """Map verified triples to weighted facts.

    Hedge weights carry over directly.  Duplicate literals merge keeping the
    maximum weight (with that occurrence's provenance).  A duration mention
    tags the nearest preceding triple in the same segment.
    """
    segment_of = None
    if segments:
        spans = [(s.start, s.end) for s in segments]

        def segment_of(position: int) -> int:
            for index, (start, end) in enumerate(spans):
                if start <= position < end:
                    return index
            return len(spans) - 1

    # Each mention tags the nearest preceding triple in the same segment.
    attached: dict[int, TemporalMention] = {}
    for mention in temporal:
        best_index: Optional[int] = None
        for index, triple in enumerate(triples):
            if triple.span[0] >= mention.span[0]:
                continue
            if segment_of and segment_of(triple.span[0]) != segment_of(mention.span[0]):
                continue
            if best_index is None or triple.span[0] > triples[best_index].span[0]:
                best_index = index
        if best_index is not None and best_index not in attached:
            attached[best_index] = mention

    merged: dict[Literal, FuzzyFact] = {}
    for index, triple in enumerate(triples):
        if triple.relation not in _RELATION_MAPPING:
            raise UnmappableRelationError(triple.relation)
        literal = _RELATION_MAPPING[triple.relation](triple.entity, triple.value)
        mention = attached.get(index)
        fact = FuzzyFact(
            literal,
            weight=triple.hedge_weight,
            temporal=mention.tag(acute_cutoff_days) if mention else Temporal.UNTAGGED,
            span=triple.span,
            source=triple.surface,
        )
        existing = merged.get(literal)
        if existing is None or fact.weight > existing.weight:
            if existing is not None and fact.temporal is Temporal.UNTAGGED:
                fact = FuzzyFact(literal, fact.weight, existing.temporal, fact.span, fact.source)
            merged[literal] = fact
    return list(merged.values())


# ===================== pipeline =====================


@dataclass
class ExtractionResult:
    segments: list[Segment]
    triples: list[Triple]
    accepted: list[Triple]
    rejected: list[tuple[Triple, str]]
    temporal: list[TemporalMention]
    unmappable: list[Triple] = field(default_factory=list)
    facts: list[FuzzyFact] = field(default_factory=list)


def extract_facts(
    note: str,
    config: ExtractionConfig,
    extractor: Optional[Extractor] = None,
) -> ExtractionResult:
    """Full note-to-facts pipeline; deterministic for a fixed configuration."""
    if extractor is None:
        extractor = LexiconExtractor(config.term_table, config.hedge_lexicon, config.hedge_window)
    segments = segment_note(note)
    triples = extractor.extract(note)
    report = verify_facts(triples, note, config.negation_window)
    temporal = normalize_temporal(note)
    supported = [t for t in report.accepted if mappable(t)]
    unmappable = [t for t in report.accepted if not mappable(t)]
    facts = to_fuzzy_facts(supported, temporal, segments, config.acute_cutoff_days)
    return ExtractionResult(
        segments=segments,
        triples=triples,
        accepted=report.accepted,
        rejected=report.rejected,
        temporal=temporal,
        unmappable=unmappable,
        facts=facts,
    )
