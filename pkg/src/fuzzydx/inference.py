"""Fuzzy Horn-clause inference with proof trees.

A body literal's activation is its edge weight times the best matching fact
weight (negation-as-failure yields a crisp 0/1 before the edge weight).  A
rule fires when the t-norm of its body activations strictly exceeds the
firing threshold; a disease's score is the maximum activation over its firing
rules.  Proof trees keep every firing rule with its matched facts so the
result can be explained and audited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

from .kb import KnowledgeSnapshot
from .model import EngineError, FuzzyFact, Literal

# ===================== configuration =====================


class TNorm(Enum):
    PRODUCT = "product"
    MINIMUM = "minimum"
    LUKASIEWICZ = "lukasiewicz"

    def combine(self, values: Sequence[float]) -> float:
        if not values:
            raise ValueError("t-norm over an empty sequence is undefined")
        if self is TNorm.PRODUCT:
            return math.prod(values)
        if self is TNorm.MINIMUM:
            return min(values)
        # n-ary Lukasiewicz: the binary fold collapses to a sum form.
        return max(0.0, sum(values) - (len(values) - 1))


class RescaleMode(Enum):
    MAX_NORMALIZED = "max_normalized"
    IDENTITY = "identity"


@dataclass(frozen=True)
class EngineConfig:
    """Tunables for the whole diagnose pipeline.

    ``fire_threshold`` is strict: a rule at exactly the threshold does not
    fire.  ``negation_threshold`` is the evidence level above which a fact
    blocks a negated literal.
    """

    tnorm: TNorm = TNorm.PRODUCT
    fire_threshold: float = 0.4
    negation_threshold: float = 0.0
    text_gain: float = 3.0
    retrieval_gain: float = 3.0
    rescale: RescaleMode = RescaleMode.MAX_NORMALIZED
    k_max: int = 20
    gini_threshold: float = 0.3
    prior_floor: Optional[float] = 1e-4
    use_priors: bool = True
    dimension: int = 256


class InferenceError(EngineError):
    pass


# ===================== activations =====================


def match_fact(literal: Literal, facts: Sequence[FuzzyFact]) -> Optional[FuzzyFact]:
    """Best fact matching a positive pattern, or the blocking fact for a
    negated one; None when nothing matches."""
    pattern = literal.positive()
    best: Optional[FuzzyFact] = None
    for fact in facts:
        if pattern.matches(fact.literal) and (best is None or fact.weight > best.weight):
            best = fact
    return best


def literal_activation(
    literal: Literal,
    facts: Sequence[FuzzyFact],
    negation_threshold: float = 0.0,
) -> float:
    """Degree to which the fact base satisfies one body literal.

    Positive: max weight over matching facts (wildcards match any argument),
    0 with no match.  Negated: 1 unless some matching fact exceeds the
    negation threshold.
    """
    best = match_fact(literal, facts)
    if literal.negated:
        return 0.0 if best is not None and best.weight > negation_threshold else 1.0
    return best.weight if best is not None else 0.0


# ===================== proof trees =====================


@dataclass(frozen=True)
class ProofLeaf:
    """One body literal of a fired rule and the evidence that satisfied it.

    ``activation`` is the edge-adjusted value (edge weight times the matched
    fact weight, or times the crisp negation outcome), so a rule node's
    activation is exactly the t-norm of its leaves.
    """

    literal: Literal
    edge_weight: float
    activation: float
    fact: Optional[FuzzyFact] = None

    def to_json(self) -> dict:
        payload: dict = {
            "literal": str(self.literal),
            "weight": self.activation,
            "span": list(self.fact.span) if self.fact is not None and self.fact.span else None,
        }
        payload["edge_weight"] = self.edge_weight
        payload["fact"] = str(self.fact.literal) if self.fact is not None else None
        payload["fact_weight"] = self.fact.weight if self.fact is not None else None
        return payload


@dataclass(frozen=True)
class ProofRuleNode:
    rule_id: str
    activation: float
    leaves: tuple[ProofLeaf, ...]

    def to_json(self) -> dict:
        return {
            "id": self.rule_id,
            "activation": self.activation,
            "leaves": [leaf.to_json() for leaf in self.leaves],
        }


@dataclass(frozen=True)
class ProofTree:
    hypothesis: Literal
    rules: tuple[ProofRuleNode, ...]

    def to_json(self) -> dict:
        return {
            "hypothesis": str(self.hypothesis),
            "rules": [node.to_json() for node in self.rules],
            "confidence": confidence(self),
        }


def iter_proof_paths(tree: ProofTree) -> Iterator[tuple[ProofLeaf, ...]]:
    """Every root-to-leaf path.  Rules are flat today, so each path holds a
    single leaf; written as a walk so deeper chaining would extend it."""
    for node in tree.rules:
        for leaf in node.leaves:
            yield (leaf,)


def confidence(tree: ProofTree) -> float:
    """Sum over root-to-leaf paths of the product of leaf activations.

    This is an evidence mass, not a probability: it can exceed 1 when many
    paths support the hypothesis.  Use ``min(1.0, value)`` for display.
    """
    total = 0.0
    for path in iter_proof_paths(tree):
        product = 1.0
        for leaf in path:
            product *= leaf.activation
        total += product
    return total


# ===================== candidates =====================


@dataclass(frozen=True)
class DiagnosisCandidate:
    """A disease with at least one firing rule."""

    disease: str
    activation: float  # max activation over firing rules
    proof: ProofTree
    confidence: float
    prior: Optional[float] = None
    posterior: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "disease": self.disease,
            "activation": self.activation,
            "confidence": self.confidence,
            "confidence_display": min(1.0, self.confidence),
            "prior": self.prior,
            "posterior": self.posterior,
            "proof": self.proof.to_json(),
            "explanation": explain(self),
        }


def rule_evidence(
    rule,
    facts: Sequence[FuzzyFact],
    tnorm: TNorm = TNorm.PRODUCT,
    negation_threshold: float = 0.0,
) -> tuple[float, tuple[ProofLeaf, ...]]:
    leaves = []
    for entry in rule.body:
        fact = match_fact(entry.literal, facts)
        if entry.literal.negated:
            satisfied = fact is None or fact.weight <= negation_threshold
            base = 1.0 if satisfied else 0.0
            leaves.append(
                ProofLeaf(entry.literal, entry.weight, entry.weight * base, None if satisfied else fact)
            )
        else:
            base = fact.weight if fact is not None else 0.0
            leaves.append(ProofLeaf(entry.literal, entry.weight, entry.weight * base, fact))
    activation = tnorm.combine([leaf.activation for leaf in leaves])
    return activation, tuple(leaves)


def rule_activation(
    rule,
    facts: Sequence[FuzzyFact],
    tnorm: TNorm = TNorm.PRODUCT,
    negation_threshold: float = 0.0,
) -> float:
    activation, _ = rule_evidence(rule, facts, tnorm, negation_threshold)
    return activation


def derive_candidates(
    snapshot: KnowledgeSnapshot,
    facts: Sequence[FuzzyFact],
    config: EngineConfig = EngineConfig(),
) -> list[DiagnosisCandidate]:
    """All diseases with a firing rule, strongest first (ties by name).

    Each candidate carries a proof tree over its firing rules only.
    """
    fired: dict[str, list[ProofRuleNode]] = {}
    for rule in snapshot.rules:
        activation, leaves = rule_evidence(
            rule, facts, config.tnorm, config.negation_threshold
        )
        if activation > config.fire_threshold:
            fired.setdefault(rule.disease, []).append(
                ProofRuleNode(rule.rule_id, activation, leaves)
            )

    candidates = []
    for disease, nodes in fired.items():
        nodes.sort(key=lambda node: (-node.activation, node.rule_id))
        tree = ProofTree(Literal("diagnosis", (disease,)), tuple(nodes))
        candidates.append(
            DiagnosisCandidate(
                disease=disease,
                activation=nodes[0].activation,
                proof=tree,
                confidence=confidence(tree),
            )
        )
    candidates.sort(key=lambda c: (-c.activation, c.disease))
    return candidates


# ===================== explanation =====================

# Trigger atoms rendered as adjectives in the narrative line.
_TRIGGER_ADJECTIVES = {
    "exertion": "exertional",
    "rest": "rest-related",
    "stress": "stress-related",
    "meals": "meal-related",
}


def _pretty(atom: str) -> str:
    return atom.replace("_", " ")


def _leaf_line(leaf: ProofLeaf) -> str:
    if leaf.literal.negated:
        if leaf.fact is None:
            return f"no evidence of {leaf.literal.positive()}"
        return f"blocked by {leaf.fact.literal} at {leaf.fact.weight:.2f}"
    if leaf.fact is None:
        return f"{leaf.literal} unmatched"
    quoted = f' ("{leaf.fact.source}")' if leaf.fact.source else ""
    matched = (
        f"{leaf.literal} matched {leaf.fact.literal}"
        if leaf.literal != leaf.fact.literal
        else f"{leaf.literal}"
    )
    return (
        f"{matched} at {leaf.fact.weight:.2f}"
        f" x edge {leaf.edge_weight:.2f} = {leaf.activation:.2f}{quoted}"
    )


def explain(candidate: DiagnosisCandidate) -> str:
    """Deterministic plain-text account of why a candidate is on the list."""
    lines = [f"Why {_pretty(candidate.disease)}?"]
    if candidate.posterior is not None:
        lines.append(
            f"  posterior {candidate.posterior:.4f} (prior {candidate.prior:.4f}, "
            f"activation {candidate.activation:.2f})"
        )
    else:
        lines.append(f"  activation {candidate.activation:.2f}")
    lines.append(
        f"  confidence {candidate.confidence:.2f}"
        f" (display {min(1.0, candidate.confidence):.2f})"
    )
    for node in candidate.proof.rules:
        lines.append(f"  rule {node.rule_id} fired at {node.activation:.2f}:")
        symptoms = [
            leaf.literal.args[0]
            for leaf in node.leaves
            if not leaf.literal.negated
            and leaf.literal.predicate == "symptom"
            and leaf.literal.is_ground
            and leaf.fact is not None
        ]
        triggers = [
            leaf.fact.literal.args[0]
            for leaf in node.leaves
            if not leaf.literal.negated
            and leaf.literal.predicate == "trigger"
            and leaf.fact is not None
            and leaf.fact.literal.args
        ]
        for symptom in symptoms:
            for trigger in triggers:
                adjective = _TRIGGER_ADJECTIVES.get(trigger, f"triggered by {_pretty(trigger)}")
                lines.append(f"    {_pretty(symptom)} is {adjective}")
        for leaf in node.leaves:
            lines.append(f"    - {_leaf_line(leaf)}")
    return "\n".join(lines)
