"""Versioned, immutable knowledge bases.

A snapshot bundles rules, the hedge lexicon, and the prior table.  Commits
apply an edit list atomically, re-checking structural consistency, and bump
the version by one.  The content hash covers the canonical serialization of
the content only (never version or timestamp), so re-serialization and
diff/apply round trips are hash-stable.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from . import dsl
from .model import (
    DEFAULT_BODY_PREDICATES,
    EngineError,
    Literal,
    PriorEntry,
    Provenance,
    Rule,
)

# ===================== errors =====================


class KnowledgeBaseError(EngineError):
    pass


class ConsistencyViolation(KnowledgeBaseError):
    """An edit list would leave the knowledge base structurally invalid."""


class UnknownRuleIdError(KnowledgeBaseError):
    def __init__(self, rule_id: str):
        self.rule_id = rule_id
        super().__init__(f"no rule with id {rule_id}")


class StaleVersionError(KnowledgeBaseError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"base version {got} is stale; head is {expected}")


class VersionOrderError(KnowledgeBaseError):
    pass


class MissingSnapshotError(KnowledgeBaseError):
    def __init__(self, version: int):
        self.version = version
        super().__init__(f"no snapshot with version {version}")


# ===================== snapshots =====================


@dataclass(frozen=True)
class KnowledgeSnapshot:
    """One immutable version of the knowledge base."""

    version: int
    timestamp: float
    rules: tuple[Rule, ...]
    lexicon: dict[str, float]
    priors: tuple[PriorEntry, ...]
    content_hash: str

    @classmethod
    def create(
        cls,
        rules: Iterable[Rule],
        lexicon: Optional[dict[str, float]] = None,
        priors: Iterable[PriorEntry] = (),
        version: int = 1,
        timestamp: Optional[float] = None,
    ) -> "KnowledgeSnapshot":
        rules = tuple(rules)
        lexicon = dict(lexicon or {})
        priors = tuple(priors)
        _check_consistency(rules, lexicon, priors)
        return cls(
            version=version,
            timestamp=time.time() if timestamp is None else timestamp,
            rules=rules,
            lexicon=lexicon,
            priors=priors,
            content_hash=content_hash(rules, lexicon, priors),
        )

    def rule(self, rule_id: str) -> Rule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise UnknownRuleIdError(rule_id)

    def rules_by_id(self) -> dict[str, Rule]:
        return {rule.rule_id: rule for rule in self.rules}

    def diseases(self) -> tuple[str, ...]:
        return tuple(sorted({rule.disease for rule in self.rules}))


def canonical_kb_text(rules: Sequence[Rule], priors: Sequence[PriorEntry]) -> str:
    """Rules and priors in a sorted, parseable form; the hashing basis."""
    program = dsl.Program(
        rules=sorted(rules, key=lambda r: (r.disease, r.rule_id)),
        facts=[],
        priors=sorted(priors, key=lambda p: (p.disease, p.stratum)),
    )
    return dsl.print_program(program)


def format_lexicon(lexicon: dict[str, float]) -> str:
    lines = [f"{term}\t{dsl.format_weight(weight)}" for term, weight in sorted(lexicon.items())]
    return "\n".join(lines) + ("\n" if lines else "")


def load_lexicon(text: str) -> dict[str, float]:
    lexicon: dict[str, float] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise KnowledgeBaseError(f"lexicon line {number}: expected 'term<TAB>weight'")
        term, weight_text = parts[0].strip(), parts[1].strip()
        try:
            weight = float(weight_text)
        except ValueError as exc:
            raise KnowledgeBaseError(f"lexicon line {number}: bad weight {weight_text!r}") from exc
        if not 0.0 <= weight <= 1.0:
            raise KnowledgeBaseError(f"lexicon line {number}: weight {weight} outside [0, 1]")
        if term in lexicon:
            raise KnowledgeBaseError(f"lexicon line {number}: duplicate term {term!r}")
        lexicon[term] = weight
    return lexicon


def content_hash(
    rules: Sequence[Rule], lexicon: dict[str, float], priors: Sequence[PriorEntry]
) -> str:
    payload = canonical_kb_text(rules, priors) + "\x00" + format_lexicon(lexicon)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _check_consistency(
    rules: Sequence[Rule],
    lexicon: dict[str, float],
    priors: Sequence[PriorEntry],
    vocabulary: Optional[frozenset[str]] = None,
) -> None:
    vocab = vocabulary or DEFAULT_BODY_PREDICATES
    seen_ids: dict[str, str] = {}
    for rule in rules:
        if rule.rule_id in seen_ids:
            raise ConsistencyViolation(f"duplicate rule for {rule.disease} ({rule.rule_id})")
        seen_ids[rule.rule_id] = rule.disease
        for entry in rule.body:
            if entry.literal.predicate not in vocab:
                raise ConsistencyViolation(
                    f"rule for {rule.disease} uses unknown predicate "
                    f"{entry.literal.predicate!r}"
                )
    for term, weight in lexicon.items():
        if not term or not 0.0 <= weight <= 1.0:
            raise ConsistencyViolation(f"lexicon entry {term!r}={weight} invalid")
    strata: set[tuple[str, str, str, str]] = set()
    for entry in priors:
        key = (entry.disease, *entry.stratum)
        if key in strata:
            raise ConsistencyViolation(f"duplicate prior stratum {key}")
        strata.add(key)


# ===================== edits =====================


class Author(Enum):
    CLINICIAN = "clinician"
    LEARNER = "learner"


@dataclass(frozen=True)
class AddRule:
    rule: Rule
    weight: Optional[float] = None  # uniform body weight override, (0, 1]


@dataclass(frozen=True)
class RemoveRule:
    rule_id: str


@dataclass(frozen=True)
class AdjustWeight:
    rule_id: str
    literal: Literal
    weight: float  # [0, 1]; zero flags the literal for a later prune


@dataclass(frozen=True)
class LexiconSet:
    term: str
    weight: Optional[float]  # None removes the term


@dataclass(frozen=True)
class PriorSet:
    disease: str
    age_band: str = "_"
    sex: str = "_"
    region: str = "_"
    prevalence: Optional[float] = None  # None removes the stratum


EditAction = Union[AddRule, RemoveRule, AdjustWeight, LexiconSet, PriorSet]


@dataclass(frozen=True)
class EditRequest:
    action: EditAction
    author: Author = Author.CLINICIAN
    note: str = ""


def _as_action(edit: Union[EditRequest, EditAction]) -> EditAction:
    return edit.action if isinstance(edit, EditRequest) else edit


def commit(
    snapshot: KnowledgeSnapshot,
    edits: Sequence[Union[EditRequest, EditAction]],
    *,
    timestamp: Optional[float] = None,
    vocabulary: Optional[frozenset[str]] = None,
) -> KnowledgeSnapshot:
    """Apply edits in order and return the next version.

    The whole list applies or none of it does: any invalid edit raises before
    a new snapshot exists.  An empty edit list still advances the version and
    leaves the content hash unchanged.
    """
    rules: dict[str, Rule] = snapshot.rules_by_id()
    order: list[str] = [rule.rule_id for rule in snapshot.rules]
    lexicon = dict(snapshot.lexicon)
    priors: dict[tuple[str, str, str, str], PriorEntry] = {
        (entry.disease, *entry.stratum): entry for entry in snapshot.priors
    }
    vocab = vocabulary or DEFAULT_BODY_PREDICATES | {
        entry.literal.predicate for rule in snapshot.rules for entry in rule.body
    }

    for edit in edits:
        action = _as_action(edit)
        if isinstance(action, AddRule):
            rule = action.rule
            if action.weight is not None:
                if not 0.0 < action.weight <= 1.0:
                    raise ConsistencyViolation(f"rule weight {action.weight} outside (0, 1]")
                rule = replace(
                    rule,
                    body=tuple(replace(entry, weight=action.weight) for entry in rule.body),
                )
            # Zero-weight body literals are allowed here: restructuring a rule
            # that holds learner-clipped (dead but flagged) edges re-adds it.
            if rule.rule_id in rules:
                raise ConsistencyViolation(f"duplicate rule for {rule.disease}")
            rule = replace(rule, created_at=snapshot.version + 1)
            rules[rule.rule_id] = rule
            order.append(rule.rule_id)
        elif isinstance(action, RemoveRule):
            if action.rule_id not in rules:
                raise UnknownRuleIdError(action.rule_id)
            del rules[action.rule_id]
            order.remove(action.rule_id)
        elif isinstance(action, AdjustWeight):
            if action.rule_id not in rules:
                raise UnknownRuleIdError(action.rule_id)
            if not 0.0 <= action.weight <= 1.0:
                raise ConsistencyViolation(f"weight {action.weight} outside [0, 1]")
            rule = rules[action.rule_id]
            if rule.body_weight(action.literal) is None:
                raise ConsistencyViolation(
                    f"rule {action.rule_id} has no body literal {action.literal}"
                )
            body = tuple(
                replace(entry, weight=action.weight) if entry.literal == action.literal else entry
                for entry in rule.body
            )
            rules[action.rule_id] = replace(rule, body=body)
        elif isinstance(action, LexiconSet):
            if action.weight is None:
                if action.term not in lexicon:
                    raise ConsistencyViolation(f"lexicon term {action.term!r} not present")
                del lexicon[action.term]
            else:
                if not action.term or not 0.0 <= action.weight <= 1.0:
                    raise ConsistencyViolation(
                        f"lexicon entry {action.term!r}={action.weight} invalid"
                    )
                lexicon[action.term] = action.weight
        elif isinstance(action, PriorSet):
            key = (action.disease, action.age_band, action.sex, action.region)
            if action.prevalence is None:
                if key not in priors:
                    raise ConsistencyViolation(f"prior stratum {key} not present")
                del priors[key]
            else:
                priors[key] = PriorEntry(
                    action.disease, action.age_band, action.sex, action.region, action.prevalence
                )
        else:
            raise ConsistencyViolation(f"unknown edit kind {type(action).__name__}")

    new_rules = tuple(rules[rule_id] for rule_id in order)
    new_priors = tuple(priors.values())
    _check_consistency(new_rules, lexicon, new_priors, vocabulary=vocab)
    return KnowledgeSnapshot(
        version=snapshot.version + 1,
        timestamp=time.time() if timestamp is None else timestamp,
        rules=new_rules,
        lexicon=lexicon,
        priors=new_priors,
        content_hash=content_hash(new_rules, lexicon, new_priors),
    )


# ===================== diff / apply =====================


@dataclass(frozen=True)
class WeightDelta:
    rule_id: str
    literal: Literal
    old: float
    new: float


@dataclass(frozen=True)
class LexiconDelta:
    term: str
    old: Optional[float]
    new: Optional[float]


@dataclass(frozen=True)
class PriorDelta:
    disease: str
    age_band: str
    sex: str
    region: str
    old: Optional[float]
    new: Optional[float]


@dataclass(frozen=True)
class SnapshotDiff:
    added_rules: tuple[Rule, ...] = ()
    removed_rules: tuple[str, ...] = ()
    weight_deltas: tuple[WeightDelta, ...] = ()
    lexicon_deltas: tuple[LexiconDelta, ...] = ()
    prior_deltas: tuple[PriorDelta, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.added_rules
            or self.removed_rules
            or self.weight_deltas
            or self.lexicon_deltas
            or self.prior_deltas
        )

    def to_json(self) -> dict:
        return {
            "added_rules": [dsl.format_rule(rule) for rule in self.added_rules],
            "removed_rules": list(self.removed_rules),
            "weight_deltas": [
                {
                    "rule_id": delta.rule_id,
                    "literal": str(delta.literal),
                    "old": delta.old,
                    "new": delta.new,
                }
                for delta in self.weight_deltas
            ],
            "lexicon_deltas": [
                {"term": delta.term, "old": delta.old, "new": delta.new}
                for delta in self.lexicon_deltas
            ],
            "prior_deltas": [
                {
                    "disease": delta.disease,
                    "age_band": delta.age_band,
                    "sex": delta.sex,
                    "region": delta.region,
                    "old": delta.old,
                    "new": delta.new,
                }
                for delta in self.prior_deltas
            ],
        }


def diff(older: KnowledgeSnapshot, newer: KnowledgeSnapshot) -> SnapshotDiff:
    """Structural difference from ``older`` to ``newer``.

    Rules are matched by id, which pins the literal multiset, so a shared id
    can only differ in weights.  ``diff(s, s)`` is empty.
    """
    if older.version > newer.version:
        raise VersionOrderError(
            f"diff requires older.version <= newer.version, got {older.version} > {newer.version}"
        )
    old_rules = older.rules_by_id()
    new_rules = newer.rules_by_id()

    added = tuple(
        rule for rule in sorted(newer.rules, key=lambda r: (r.disease, r.rule_id))
        if rule.rule_id not in old_rules
    )
    removed = tuple(sorted(rule_id for rule_id in old_rules if rule_id not in new_rules))

    weight_deltas: list[WeightDelta] = []
    for rule_id in sorted(set(old_rules) & set(new_rules)):
        old_rule, new_rule = old_rules[rule_id], new_rules[rule_id]
        for entry in old_rule.body:
            new_weight = new_rule.body_weight(entry.literal)
            if new_weight is not None and new_weight != entry.weight:
                weight_deltas.append(WeightDelta(rule_id, entry.literal, entry.weight, new_weight))

    lexicon_deltas = [
        LexiconDelta(term, older.lexicon.get(term), newer.lexicon.get(term))
        for term in sorted(set(older.lexicon) | set(newer.lexicon))
        if older.lexicon.get(term) != newer.lexicon.get(term)
    ]

    old_priors = {(p.disease, *p.stratum): p.prevalence for p in older.priors}
    new_priors = {(p.disease, *p.stratum): p.prevalence for p in newer.priors}
    prior_deltas = [
        PriorDelta(*key, old_priors.get(key), new_priors.get(key))
        for key in sorted(set(old_priors) | set(new_priors))
        if old_priors.get(key) != new_priors.get(key)
    ]

    return SnapshotDiff(added, removed, tuple(weight_deltas), tuple(lexicon_deltas), tuple(prior_deltas))


def apply_diff(
    snapshot: KnowledgeSnapshot,
    delta: SnapshotDiff,
    *,
    timestamp: Optional[float] = None,
) -> KnowledgeSnapshot:
    """Apply a diff; ``apply_diff(a, diff(a, b))`` is hash-equal to ``b``."""
    edits: list[EditAction] = []
    edits.extend(RemoveRule(rule_id) for rule_id in delta.removed_rules)
    edits.extend(AddRule(rule) for rule in delta.added_rules)
    rules = snapshot.rules_by_id()
    for change in delta.weight_deltas:
        rule = rules.get(change.rule_id)
        if rule is None:
            raise ConsistencyViolation(f"diff does not apply: no rule {change.rule_id}")
        if rule.body_weight(change.literal) != change.old:
            raise ConsistencyViolation(
                f"diff does not apply: {change.rule_id} {change.literal} is not at {change.old}"
            )
        edits.append(AdjustWeight(change.rule_id, change.literal, change.new))
    edits.extend(LexiconSet(change.term, change.new) for change in delta.lexicon_deltas)
    edits.extend(
        PriorSet(change.disease, change.age_band, change.sex, change.region, change.new)
        for change in delta.prior_deltas
    )
    return commit(snapshot, edits, timestamp=timestamp)


# ===================== edge view =====================


def edge_view(snapshot: KnowledgeSnapshot) -> dict[tuple[str, str], float]:
    """Max weight per (disease, symptom) over positive ``symptom/1`` body literals.

    This is the scoring matrix the learner reads; a symptom appearing in
    several rules for one disease reports the strongest edge.
    """
    view: dict[tuple[str, str], float] = {}
    for rule in snapshot.rules:
        for entry in rule.body:
            literal = entry.literal
            if literal.negated or literal.predicate != "symptom":
                continue
            if len(literal.args) != 1 or not literal.is_ground:
                continue
            key = (rule.disease, literal.args[0])
            if entry.weight > view.get(key, -1.0):
                view[key] = entry.weight
    return view


# ===================== disk store =====================


class SnapshotStore:
    """One directory per store: ``vNNNNNN.kb`` + lexicon TSV + JSON manifest.

    The manifest carries version metadata plus per-rule provenance, which the
    clause grammar cannot express.  Commits serialize on an in-process lock
    and check the caller's base version, so concurrent writers get a clean
    stale-version failure instead of clobbering each other.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._cache: dict[int, KnowledgeSnapshot] = {}
        self._manifests: dict[int, dict] = {}
        if self.root.exists():
            for path in sorted(self.root.glob("v*.json")):
                manifest = json.loads(path.read_text(encoding="utf-8"))
                self._manifests[manifest["version"]] = manifest

    # -- reads ---------------------------------------------------------------

    def versions(self) -> list[int]:
        return sorted(self._manifests)

    def manifests(self) -> list[dict]:
        return [dict(self._manifests[version]) for version in self.versions()]

    def head_version(self) -> int:
        if not self._manifests:
            raise MissingSnapshotError(0)
        return max(self._manifests)

    def head(self) -> KnowledgeSnapshot:
        return self.get(self.head_version())

    def get(self, version: int) -> KnowledgeSnapshot:
        if version in self._cache:
            return self._cache[version]
        if version not in self._manifests:
            raise MissingSnapshotError(version)
        manifest = self._manifests[version]
        kb_text = (self.root / f"v{version:06d}.kb").read_text(encoding="utf-8")
        lexicon_text = (self.root / f"v{version:06d}.lexicon.tsv").read_text(encoding="utf-8")
        program = dsl.parse_program(kb_text)
        meta = manifest.get("rule_meta", {})
        rules = tuple(
            replace(
                rule,
                provenance=Provenance(meta.get(rule.rule_id, {}).get("provenance", "curated")),
                created_at=meta.get(rule.rule_id, {}).get("created_at", 0),
            )
            for rule in program.rules
        )
        snapshot = KnowledgeSnapshot(
            version=version,
            timestamp=manifest["timestamp"],
            rules=rules,
            lexicon=load_lexicon(lexicon_text),
            priors=tuple(program.priors),
            content_hash=content_hash(rules, load_lexicon(lexicon_text), tuple(program.priors)),
        )
        if snapshot.content_hash != manifest["content_hash"]:
            raise KnowledgeBaseError(
                f"store corruption: v{version} hash {snapshot.content_hash} "
                f"!= manifest {manifest['content_hash']}"
            )
        self._cache[version] = snapshot
        return snapshot

    # -- writes --------------------------------------------------------------

    @classmethod
    def initialize(
        cls,
        root: Union[str, Path],
        snapshot: KnowledgeSnapshot,
        *,
        author: Author = Author.CLINICIAN,
        note: str = "initial import",
    ) -> "SnapshotStore":
        store = cls(root)
        if store._manifests:
            raise KnowledgeBaseError(f"store at {root} is not empty")
        store.root.mkdir(parents=True, exist_ok=True)
        store._persist(snapshot, parent=None, author=author, note=note)
        return store

    def commit(
        self,
        edits: Sequence[Union[EditRequest, EditAction]],
        base_version: int,
        *,
        author: Author = Author.CLINICIAN,
        note: str = "",
        timestamp: Optional[float] = None,
    ) -> KnowledgeSnapshot:
        with self._lock:
            head = self.head()
            if base_version != head.version:
                raise StaleVersionError(head.version, base_version)
            snapshot = commit(head, edits, timestamp=timestamp)
            self._persist(snapshot, parent=head.version, author=author, note=note)
            return snapshot

    def commit_snapshot(
        self,
        snapshot: KnowledgeSnapshot,
        base_version: int,
        *,
        author: Author = Author.LEARNER,
        note: str = "",
    ) -> KnowledgeSnapshot:
        """Persist a snapshot built elsewhere (the learner's path)."""
        with self._lock:
            head_version = self.head_version()
            if base_version != head_version:
                raise StaleVersionError(head_version, base_version)
            if snapshot.version != head_version + 1:
                raise VersionOrderError(
                    f"snapshot version {snapshot.version} does not follow head {head_version}"
                )
            self._persist(snapshot, parent=head_version, author=author, note=note)
            return snapshot

    def _persist(
        self,
        snapshot: KnowledgeSnapshot,
        *,
        parent: Optional[int],
        author: Author,
        note: str,
    ) -> None:
        stem = f"v{snapshot.version:06d}"
        (self.root / f"{stem}.kb").write_text(
            canonical_kb_text(snapshot.rules, snapshot.priors), encoding="utf-8"
        )
        (self.root / f"{stem}.lexicon.tsv").write_text(
            format_lexicon(snapshot.lexicon), encoding="utf-8"
        )
        manifest = {
            "version": snapshot.version,
            "timestamp": snapshot.timestamp,
            "parent": parent,
            "content_hash": snapshot.content_hash,
            "author": author.value,
            "note": note,
            "rule_meta": {
                rule.rule_id: {
                    "provenance": rule.provenance.value,
                    "created_at": rule.created_at,
                }
                for rule in snapshot.rules
            },
        }
        # The manifest is written last: a version without one is invisible,
        # which keeps half-written commits from being served.
        (self.root / f"{stem}.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        self._manifests[snapshot.version] = manifest
        self._cache[snapshot.version] = snapshot


# ===================== edit serialization =====================


def action_to_json(action: EditAction) -> dict:
    """Serialize one edit action for logs and the HTTP surface."""
    if isinstance(action, AddRule):
        payload: dict = {
            "kind": "add_rule",
            "rule": dsl.format_rule(action.rule),
            "provenance": action.rule.provenance.value,
        }
        if action.weight is not None:
            payload["weight"] = action.weight
        return payload
    if isinstance(action, RemoveRule):
        return {"kind": "remove_rule", "rule_id": action.rule_id}
    if isinstance(action, AdjustWeight):
        return {
            "kind": "adjust_weight",
            "rule_id": action.rule_id,
            "literal": str(action.literal),
            "weight": action.weight,
        }
    if isinstance(action, LexiconSet):
        return {"kind": "lexicon_set", "term": action.term, "weight": action.weight}
    if isinstance(action, PriorSet):
        return {
            "kind": "prior_set",
            "disease": action.disease,
            "age_band": action.age_band,
            "sex": action.sex,
            "region": action.region,
            "prevalence": action.prevalence,
        }
    raise KnowledgeBaseError(f"cannot serialize edit action {action!r}")


def action_from_json(data: dict) -> EditAction:
    """Inverse of ``action_to_json``; malformed input raises
    ``KnowledgeBaseError`` with the offending field."""
    kind = data.get("kind")
    try:
        if kind == "add_rule":
            rule = dsl.parse_rule(data["rule"])
            provenance = Provenance(data.get("provenance", Provenance.CLINICIAN.value))
            rule = replace(rule, provenance=provenance)
            return AddRule(rule, data.get("weight"))
        if kind == "remove_rule":
            return RemoveRule(str(data["rule_id"]))
        if kind == "adjust_weight":
            return AdjustWeight(
                str(data["rule_id"]),
                dsl.parse_literal(data["literal"]),
                float(data["weight"]),
            )
        if kind == "lexicon_set":
            weight = data["weight"]
            return LexiconSet(str(data["term"]), None if weight is None else float(weight))
        if kind == "prior_set":
            prevalence = data.get("prevalence")
            return PriorSet(
                str(data["disease"]),
                str(data.get("age_band", "_")),
                str(data.get("sex", "_")),
                str(data.get("region", "_")),
                None if prevalence is None else float(prevalence),
            )
    except (KeyError, TypeError, ValueError, dsl.ParseError) as exc:
        raise KnowledgeBaseError(f"bad {kind} action: {exc}") from exc
    raise KnowledgeBaseError(f"unknown edit action kind {kind!r}")
