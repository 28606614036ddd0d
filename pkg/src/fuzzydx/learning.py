"""Online learning over the rule base: weight updates and structure edits.

The learner treats the knowledge base as a linear ranker: a disease's score
for a case is the sum, over the case's symptoms, of its strongest rule edge
to that symptom.  Labeled feedback drives a passive-aggressive weight update
on the most violated gold/imposter pair; longer-run co-occurrence counts
drive conservative structure edits (adding, resetting, or pruning edges in a
per-disease learner-owned "support" rule).  Every change goes through the
same commit machinery as a human edit, so learning is versioned, diffable,
and replayable.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .kb import (
    AddRule,
    AdjustWeight,
    Author,
    EditAction,
    EditRequest,
    KnowledgeBaseError,
    KnowledgeSnapshot,
    RemoveRule,
    action_from_json,
    action_to_json,
    commit,
    edge_view,
)
from .model import BodyLiteral, CaseRecord, EngineError, Literal, Provenance, Rule


class LearningError(EngineError):
    pass


# ===================== configuration =====================


@dataclass(frozen=True)
class LearnerConfig:
    """Knobs for both the weight learner and the structure learner."""

    margin: float = 0.5  # required score gap between gold and imposter
    cap: float = 0.1  # aggressiveness ceiling on one update
    top_k: int = 5  # imposters considered per case
    min_positive: int = 5  # co-occurrence support needed to add an edge
    add_ratio: float = 1.5  # specificity needed to add an edge
    prune_ratio: float = 0.5  # specificity below which a dead edge is pruned
    init_weight: float = 0.3  # weight for structurally added edges
    induction_threshold: float = 0.6  # mean evidence score to induce a rule


# ===================== events =====================


@dataclass(frozen=True)
class WeightNudged:
    rule_id: str
    literal: str
    before: float
    after: float


@dataclass(frozen=True)
class ZeroFlagged:
    """A weight was clipped to exactly zero: the edge is dead but kept, so a
    later structure pass (or a clinician) decides whether to prune it."""

    rule_id: str
    literal: str


@dataclass(frozen=True)
class EdgeAdded:
    disease: str
    symptom: str
    rule_id: str
    weight: float


@dataclass(frozen=True)
class EdgePruned:
    disease: str
    symptom: str
    rule_id: str


@dataclass(frozen=True)
class RuleAdded:
    rule_id: str
    disease: str


@dataclass(frozen=True)
class RuleRemoved:
    rule_id: str
    disease: str


LearningEvent = Union[WeightNudged, ZeroFlagged, EdgeAdded, EdgePruned, RuleAdded, RuleRemoved]

_EVENT_KINDS = {
    WeightNudged: "weight_nudged",
    ZeroFlagged: "zero_flagged",
    EdgeAdded: "edge_added",
    EdgePruned: "edge_pruned",
    RuleAdded: "rule_added",
    RuleRemoved: "rule_removed",
}


def event_to_json(event: LearningEvent) -> dict:
    payload = {"kind": _EVENT_KINDS[type(event)]}
    payload.update(event.__dict__)
    return payload


# ===================== linear scoring =====================


def case_symptoms(case: CaseRecord) -> dict[str, float]:
    """The case's symptom weights; text cases must be extracted first."""
    if case.symptoms is None:
        raise LearningError(f"case {case.case_id} carries raw text; extract facts first")
    weights: dict[str, float] = {}
    for name, weight in case.symptoms:
        weights[name] = max(weight, weights.get(name, 0.0))
    return weights


def score_disease(
    view: dict[tuple[str, str], float], disease: str, symptoms: dict[str, float]
) -> float:
    """Linear score: sum of strongest-edge weights over present symptoms."""
    return sum(
        view.get((disease, name), 0.0) * weight for name, weight in symptoms.items()
    )


# ===================== the support rule =====================


def _support_rule(rules: Sequence[Rule], disease: str) -> Optional[Rule]:
    """The learner-owned rule for a disease: its smallest-id induced rule."""
    owned = [r for r in rules if r.disease == disease and r.provenance is Provenance.INDUCED]
    return min(owned, key=lambda r: r.rule_id) if owned else None


class _WorkingSet:
    """Mutable view of the rule list while an edit list is being built.

    Edits are emitted in apply order; the working copy mirrors what the
    commit will do so later steps see earlier ones.
    """

    def __init__(self, snapshot: KnowledgeSnapshot):
        self.rules: list[Rule] = list(snapshot.rules)
        self.edits: list[EditAction] = []
        self.events: list[LearningEvent] = []

    def adjust(self, rule: Rule, literal: Literal, weight: float) -> None:
        before = rule.body_weight(literal)
        if before == weight:
            return
        self.edits.append(AdjustWeight(rule.rule_id, literal, weight))
        body = tuple(
            BodyLiteral(entry.literal, weight if entry.literal == literal else entry.weight)
            for entry in rule.body
        )
        self._swap(rule, Rule(rule.head, body, rule.provenance, rule.created_at))
        self.events.append(WeightNudged(rule.rule_id, str(literal), before, weight))
        if weight == 0.0:
            self.events.append(ZeroFlagged(rule.rule_id, str(literal)))

    def add_edge(self, disease: str, symptom: str, weight: float) -> None:
        literal = Literal("symptom", (symptom,))
        support = _support_rule(self.rules, disease)
        if support is None:
            rule = Rule(
                Literal("diagnosis", (disease,)),
                (BodyLiteral(literal, weight),),
                provenance=Provenance.INDUCED,
            )
            self.edits.append(AddRule(rule))
            self.rules.append(rule)
            self.events.append(RuleAdded(rule.rule_id, disease))
            self.events.append(EdgeAdded(disease, symptom, rule.rule_id, weight))
        else:
            grown = Rule(
                support.head,
                support.body + (BodyLiteral(literal, weight),),
                provenance=support.provenance,
                created_at=support.created_at,
            )
            self.edits.append(RemoveRule(support.rule_id))
            self.edits.append(AddRule(grown))
            self._swap(support, grown)
            self.events.append(EdgeAdded(disease, symptom, grown.rule_id, weight))

    def prune_edge(self, disease: str, symptom: str) -> None:
        literal = Literal("symptom", (symptom,))
        support = _support_rule(self.rules, disease)
        if support is None or all(entry.literal != literal for entry in support.body):
            return
        remaining = tuple(entry for entry in support.body if entry.literal != literal)
        if remaining:
            shrunk = Rule(support.head, remaining, support.provenance, support.created_at)
            if any(r.rule_id == shrunk.rule_id for r in self.rules if r is not support):
                return  # pruning would duplicate an existing rule; keep the dead edge
            self.edits.append(RemoveRule(support.rule_id))
            self.edits.append(AddRule(shrunk))
            self._swap(support, shrunk)
            self.events.append(EdgePruned(disease, symptom, shrunk.rule_id))
        else:
            self.edits.append(RemoveRule(support.rule_id))
            self.rules.remove(support)
            self.events.append(EdgePruned(disease, symptom, support.rule_id))
            self.events.append(RuleRemoved(support.rule_id, disease))

    def occurrences(self, disease: str, literal: Literal) -> list[Rule]:
        return [
            rule
            for rule in self.rules
            if rule.disease == disease
            and any(entry.literal == literal for entry in rule.body)
        ]

    def view(self) -> dict[tuple[str, str], float]:
        snapshot_like = _RuleHolder(tuple(self.rules))
        return edge_view(snapshot_like)

    def _swap(self, old: Rule, new: Rule) -> None:
        self.rules[self.rules.index(old)] = new


@dataclass(frozen=True)
class _RuleHolder:
    rules: tuple[Rule, ...]


# ===================== passive-aggressive weight updates =====================


@dataclass
class UpdateOutcome:
    """What one learner step did: the edits, the resulting snapshot, and the
    diagnostics that make the step auditable."""

    snapshot: KnowledgeSnapshot
    edits: list[EditAction]
    events: list[LearningEvent]
    loss: float = 0.0
    tau: float = 0.0
    pair: Optional[tuple[str, str]] = None

    @property
    def changed(self) -> bool:
        return bool(self.edits)


def find_violation(
    snapshot: KnowledgeSnapshot, case: CaseRecord, config: LearnerConfig = LearnerConfig()
) -> Optional[tuple[float, str, str]]:
    """The most violated (loss, gold, imposter) pair, or None when the case
    is ranked cleanly.

    A pair violates when an imposter in the score top-k strictly outscores a
    gold disease; its loss is the margin shortfall.
    """
    symptoms = case_symptoms(case)
    gold = set(case.labels)
    if not symptoms or not gold:
        return None
    view = edge_view(snapshot)
    catalog = sorted(set(snapshot.diseases()) | gold)
    scores = {d: score_disease(view, d, symptoms) for d in catalog}
    ranked = sorted(catalog, key=lambda d: (-scores[d], d))[: config.top_k]
    best: Optional[tuple[float, str, str]] = None
    for d_pos in sorted(gold):
        for d_neg in ranked:
            if d_neg in gold or scores[d_pos] >= scores[d_neg]:
                continue
            loss = config.margin - (scores[d_pos] - scores[d_neg])
            candidate = (loss, d_pos, d_neg)
            if best is None or loss > best[0] or (loss == best[0] and candidate < best):
                best = candidate
    return best


def pa_update(
    snapshot: KnowledgeSnapshot,
    case: CaseRecord,
    config: LearnerConfig = LearnerConfig(),
    *,
    timestamp: Optional[float] = None,
) -> UpdateOutcome:
    """One passive-aggressive step on the most violated pair of a case.

    The step size is min(cap, loss / (2 * ||x||^2)) for symptom vector x.
    The gold disease's edges to the case's symptoms move up by tau * x_s
    (appearing in every rule that holds the edge; missing edges are added to
    the support rule), the imposter's move down, clipping into [0, 1].  A
    weight clipped to exactly zero is flagged, not removed.
    """
    violation = find_violation(snapshot, case, config)
    if violation is None:
        return UpdateOutcome(snapshot=snapshot, edits=[], events=[])
    loss, d_pos, d_neg = violation
    symptoms = case_symptoms(case)
    norm_sq = sum(weight * weight for weight in symptoms.values())
    if norm_sq == 0.0:
        return UpdateOutcome(snapshot=snapshot, edits=[], events=[])
    tau = min(config.cap, loss / (2.0 * norm_sq))

    working = _WorkingSet(snapshot)
    for name in sorted(symptoms):
        weight = symptoms[name]
        if weight == 0.0:
            continue
        literal = Literal("symptom", (name,))
        step = tau * weight
        holders = working.occurrences(d_pos, literal)
        if holders:
            for rule in holders:
                before = rule.body_weight(literal)
                working.adjust(rule, literal, min(1.0, before + step))
        else:
            working.add_edge(d_pos, name, min(1.0, step))
        for rule in working.occurrences(d_neg, literal):
            before = rule.body_weight(literal)
            working.adjust(rule, literal, max(0.0, before - step))

    edits = [EditRequest(action, author=Author.LEARNER, note=f"case {case.case_id}") for action in working.edits]
    updated = commit(snapshot, edits, timestamp=timestamp)
    return UpdateOutcome(
        snapshot=updated,
        edits=working.edits,
        events=working.events,
        loss=loss,
        tau=tau,
        pair=(d_pos, d_neg),
    )


def train_until_stable(
    snapshot: KnowledgeSnapshot,
    cases: Sequence[CaseRecord],
    config: LearnerConfig = LearnerConfig(),
    max_passes: int = 50,
) -> tuple[KnowledgeSnapshot, list[int]]:
    """Sweep the cases until a full pass makes no update.

    Returns the final snapshot and the per-pass violation counts (the last
    entry is zero when training converged within the pass budget).
    """
    history: list[int] = []
    for _ in range(max_passes):
        violations = 0
        for case in cases:
            outcome = pa_update(snapshot, case, config)
            if outcome.pair is not None:
                violations += 1
                snapshot = outcome.snapshot
        history.append(violations)
        if violations == 0:
            return snapshot, history
    return snapshot, history


# ===================== co-occurrence driven structure =====================


@dataclass
class EdgeStats:
    """Co-occurrence counts between diseases and symptoms across cases.

    ``positive[(d, s)]`` counts cases labeled d that show s;
    ``negative[(d, s)]`` counts cases showing s labeled with something else
    from the catalog.
    """

    positive: dict[tuple[str, str], int] = field(default_factory=dict)
    negative: dict[tuple[str, str], int] = field(default_factory=dict)

    def observe(self, case: CaseRecord, catalog: Iterable[str]) -> None:
        gold = set(case.labels)
        for name in set(case_symptoms(case)):
            for disease in catalog:
                key = (disease, name)
                if disease in gold:
                    self.positive[key] = self.positive.get(key, 0) + 1
                else:
                    self.negative[key] = self.negative.get(key, 0) + 1

    def observe_all(self, cases: Iterable[CaseRecord], catalog: Iterable[str]) -> None:
        catalog = sorted(set(catalog))
        for case in cases:
            self.observe(case, catalog)

    def specificity(self, disease: str, symptom: str) -> float:
        """Smoothed support ratio (c+ + 1) / (c- + 1); 1.0 with no evidence."""
        key = (disease, symptom)
        return (self.positive.get(key, 0) + 1) / (self.negative.get(key, 0) + 1)

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(set(self.positive) | set(self.negative))


def structure_update(
    snapshot: KnowledgeSnapshot,
    stats: EdgeStats,
    config: LearnerConfig = LearnerConfig(),
    *,
    timestamp: Optional[float] = None,
) -> UpdateOutcome:
    """Conservative structure pass over the co-occurrence evidence.

    In lexicographic (disease, symptom) order: an edge with enough positive
    support and high specificity is added to the support rule at the initial
    weight (or restored there if every occurrence sits at zero); a dead edge
    with low specificity is pruned from the support rule, removing the rule
    when its body empties.  Curated rules are never restructured.  Running
    the same stats twice is a no-op the second time.
    """
    working = _WorkingSet(snapshot)
    for disease, symptom in stats.pairs():
        ratio = stats.specificity(disease, symptom)
        support_count = stats.positive.get((disease, symptom), 0)
        view = working.view()
        current = view.get((disease, symptom))
        if support_count >= config.min_positive and ratio >= config.add_ratio:
            if current is None:
                working.add_edge(disease, symptom, config.init_weight)
            elif current == 0.0:
                # The edge exists but every occurrence was clipped to zero;
                # restore it in place (support rule first, else the
                # smallest-id holder) rather than growing a new copy.
                support = _support_rule(working.rules, disease)
                literal = Literal("symptom", (symptom,))
                if support is not None and any(
                    entry.literal == literal for entry in support.body
                ):
                    working.adjust(support, literal, config.init_weight)
                else:
                    holders = sorted(
                        working.occurrences(disease, literal), key=lambda r: r.rule_id
                    )
                    working.adjust(holders[0], literal, config.init_weight)
        elif current == 0.0 and ratio < config.prune_ratio:
            working.prune_edge(disease, symptom)

    edits = [EditRequest(action, author=Author.LEARNER, note="structure pass") for action in working.edits]
    updated = commit(snapshot, edits, timestamp=timestamp)
    return UpdateOutcome(snapshot=updated, edits=working.edits, events=working.events)


# ===================== rule induction =====================


def default_evidence_scorer(stats: EdgeStats):
    """Logistic confidence in one edge from its smoothed log-odds."""

    def score(disease: str, symptom: str) -> float:
        return 1.0 / (1.0 + math.exp(-math.log(stats.specificity(disease, symptom))))

    return score


def induce_rules(
    snapshot: KnowledgeSnapshot,
    stats: EdgeStats,
    config: LearnerConfig = LearnerConfig(),
    scorer=None,
    max_body: int = 3,
) -> list[Rule]:
    """Candidate rules from well-supported symptom combinations.

    For each disease, symptom subsets (up to ``max_body``) drawn from its
    well-supported symptoms become candidate rules when the mean per-edge
    evidence score clears the induction threshold.  Rules already in the
    snapshot are skipped.  Candidates are returned, not committed.
    """
    if scorer is None:
        scorer = default_evidence_scorer(stats)
    existing = {rule.rule_id for rule in snapshot.rules}
    induced: list[Rule] = []
    diseases = sorted({disease for disease, _ in stats.positive})
    for disease in diseases:
        pool = sorted(
            symptom
            for (d, symptom), count in stats.positive.items()
            if d == disease and count >= config.min_positive
        )
        for size in range(1, max_body + 1):
            for subset in itertools.combinations(pool, size):
                mean_score = sum(scorer(disease, s) for s in subset) / len(subset)
                if mean_score <= config.induction_threshold:
                    continue
                rule = Rule(
                    Literal("diagnosis", (disease,)),
                    tuple(
                        BodyLiteral(Literal("symptom", (s,)), config.init_weight)
                        for s in subset
                    ),
                    provenance=Provenance.INDUCED,
                )
                if rule.rule_id not in existing:
                    existing.add(rule.rule_id)
                    induced.append(rule)
    return induced


# ===================== the update log =====================


class UpdateLog:
    """Append-only JSONL journal of learner steps.

    Each entry records the base and result versions plus the serialized edit
    list, so replaying the journal against the same base snapshot rebuilds
    the exact same content hashes version by version.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, base: KnowledgeSnapshot, outcome: UpdateOutcome, kind: str = "pa") -> None:
        entry = {
            "kind": kind,
            "base_version": base.version,
            "result_version": outcome.snapshot.version,
            "result_hash": outcome.snapshot.content_hash,
            "loss": outcome.loss,
            "tau": outcome.tau,
            "pair": list(outcome.pair) if outcome.pair else None,
            "edits": [action_to_json(action) for action in outcome.edits],
            "events": [event_to_json(event) for event in outcome.events],
        }
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry) + "\n")

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise LearningError(f"update log line {number}: {exc}") from exc
        return out


def replay_log(
    base: KnowledgeSnapshot, entries: Sequence[dict], *, timestamp: Optional[float] = None
) -> KnowledgeSnapshot:
    """Re-apply journaled edits on top of ``base``.

    Versions must chain (each entry's base version is the current version);
    recorded result hashes, when present, are verified as we go.
    """
    current = base
    for number, entry in enumerate(entries, start=1):
        if entry.get("base_version") != current.version:
            raise LearningError(
                f"log entry {number}: base version {entry.get('base_version')} "
                f"does not follow snapshot version {current.version}"
            )
        try:
            actions = [action_from_json(data) for data in entry.get("edits", [])]
        except KnowledgeBaseError as exc:
            raise LearningError(f"log entry {number}: {exc}") from exc
        current = commit(current, actions, timestamp=timestamp)
        expected = entry.get("result_hash")
        if expected is not None and current.content_hash != expected:
            raise LearningError(
                f"log entry {number}: replay hash {current.content_hash} != recorded {expected}"
            )
    return current
