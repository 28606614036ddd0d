"""Retrieval, evidence blending, and prior fusion around the inference core.

Extracted symptom weights are blended with a retrieval signal from similar
past cases (feature-hashed embeddings, adaptive neighbourhood size), the
blended weights drive rule activation, and demographic prevalence turns
activations into a normalized posterior over the candidate diseases.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .inference import (
    DiagnosisCandidate,
    EngineConfig,
    EngineError,
    RescaleMode,
    derive_candidates,
)
from .kb import KnowledgeSnapshot
from .model import CaseRecord, Demographics, FuzzyFact, Literal, PriorEntry, WILDCARD


class RankingError(EngineError):
    pass


# ===================== hashed embeddings =====================


class HashingEmbedder:
    """Deterministic signed feature hashing into a fixed dimension.

    Tokens are canonical literal strings; each token lands in a sha256 bucket
    with a sha256 sign, vectors are mean-pooled over distinct tokens and L2
    normalized.  No vocabulary to manage, identical across processes.
    """

    def __init__(self, dimension: int = 256):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % self.dimension
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        return bucket, sign

    def embed_tokens(self, tokens: Iterable[str]) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=np.float64)
        distinct = sorted(set(tokens))
        for token in distinct:
            bucket, sign = self.slot(token)
            vector[bucket] += sign
        if distinct:
            vector /= len(distinct)
        norm = float(np.linalg.norm(vector))
        if norm > 0.0:
            vector /= norm
        return vector

    def embed_facts(self, facts: Sequence[FuzzyFact]) -> np.ndarray:
        return self.embed_tokens(str(fact.literal) for fact in facts)

    def embed_symptoms(self, names: Iterable[str]) -> np.ndarray:
        return self.embed_tokens(str(Literal("symptom", (name,))) for name in names)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    # embed_* output is already unit length (or zero), so a dot product does.
    return float(np.dot(a, b))


# ===================== the case index =====================


@dataclass(frozen=True)
class IndexedCase:
    case_id: str
    vector: np.ndarray = field(compare=False)
    labels: tuple[str, ...] = ()
    symptoms: tuple[str, ...] = ()


class CaseIndex:
    """Past cases as unit vectors, searchable by cosine similarity."""

    def __init__(self, entries: Sequence[IndexedCase], dimension: int):
        for entry in entries:
            if entry.vector.shape != (dimension,):
                raise RankingError(
                    f"case {entry.case_id}: vector length {entry.vector.shape[0]} != {dimension}"
                )
        self.entries = sorted(entries, key=lambda e: e.case_id)
        self.dimension = dimension

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def build(cls, cases: Iterable[CaseRecord], embedder: HashingEmbedder) -> "CaseIndex":
        entries = []
        for case in cases:
            names = case.symptom_names()
            entries.append(
                IndexedCase(
                    case_id=case.case_id,
                    vector=embedder.embed_symptoms(names),
                    labels=tuple(case.labels),
                    symptoms=tuple(names),
                )
            )
        return cls(entries, embedder.dimension)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.entries:
                handle.write(
                    json.dumps(
                        {
                            "id": entry.case_id,
                            "vector": [round(v, 12) for v in entry.vector.tolist()],
                            "labels": list(entry.labels),
                            "symptoms": list(entry.symptoms),
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "CaseIndex":
        entries = []
        dimension: Optional[int] = None
        with open(path, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    vector = np.asarray(row["vector"], dtype=np.float64)
                    entry = IndexedCase(
                        case_id=str(row["id"]),
                        vector=vector,
                        labels=tuple(row.get("labels", ())),
                        symptoms=tuple(row.get("symptoms", ())),
                    )
                except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                    raise RankingError(f"index line {number}: {exc}") from exc
                if dimension is None:
                    dimension = vector.shape[0]
                entries.append(entry)
        if dimension is None:
            raise RankingError("index file holds no cases")
        return cls(entries, dimension)

    def search(self, query: np.ndarray, k: int) -> list[tuple[IndexedCase, float]]:
        scored = [(entry, cosine(query, entry.vector)) for entry in self.entries]
        scored.sort(key=lambda pair: (-pair[1], pair[0].case_id))
        return scored[: max(0, k)]


# ===================== adaptive retrieval =====================


def gini_impurity(neighbours: Sequence[tuple[IndexedCase, float]]) -> float:
    """1 - sum p^2 over the label distribution of a neighbour set."""
    counts: dict[str, int] = {}
    total = 0
    for entry, _sim in neighbours:
        for label in entry.labels:
            counts[label] = counts.get(label, 0) + 1
            total += 1
    if total == 0:
        return 0.0
    return 1.0 - sum((count / total) ** 2 for count in counts.values())


def retrieve_neighbours(
    index: CaseIndex, query: np.ndarray, config: EngineConfig
) -> list[tuple[IndexedCase, float]]:
    """Nearest cases, shrinking the neighbourhood until its labels agree.

    Starts at ``k_max`` and drops the farthest neighbour while the label
    Gini impurity is at or above the threshold, never below a single case.
    """
    neighbours = index.search(query, min(config.k_max, len(index)))
    while len(neighbours) > 1 and gini_impurity(neighbours) >= config.gini_threshold:
        neighbours.pop()
    return neighbours


def retrieval_weights(
    symptoms: Iterable[str], neighbours: Sequence[tuple[IndexedCase, float]]
) -> dict[str, float]:
    """Per-symptom support from the neighbourhood: the best similarity among
    neighbours that themselves record the symptom, floored at zero."""
    weights = {}
    for name in symptoms:
        best = 0.0
        for entry, sim in neighbours:
            if name in entry.symptoms and sim > best:
                best = sim
        weights[name] = min(1.0, best)
    return weights


# ===================== blending =====================


def blend_weights(
    text_weights: dict[str, float],
    retrieved: dict[str, float],
    text_gain: float = 3.0,
    retrieval_gain: float = 3.0,
) -> dict[str, float]:
    """Two-channel softmax blend across the case's symptoms.

    Each symptom scores exp(text_gain * w_text) + exp(retrieval_gain *
    w_retr); scores normalize to a distribution, so strongly supported
    symptoms dominate but none is silenced entirely.
    """
    if not text_weights:
        return {}
    scores = {
        name: math.exp(text_gain * weight)
        + math.exp(retrieval_gain * retrieved.get(name, 0.0))
        for name, weight in text_weights.items()
    }
    total = sum(scores.values())
    return {name: score / total for name, score in scores.items()}


def rescale_for_inference(
    blended: dict[str, float], mode: RescaleMode = RescaleMode.MAX_NORMALIZED
) -> dict[str, float]:
    """Map the blended distribution back onto activation scale.

    MAX_NORMALIZED divides by the largest share so the best-supported
    symptom enters inference at weight 1.0; IDENTITY feeds the shares
    in unchanged.
    """
    if not blended:
        return {}
    if mode is RescaleMode.IDENTITY:
        return dict(blended)
    top = max(blended.values())
    if top <= 0.0:
        return dict(blended)
    return {name: value / top for name, value in blended.items()}


# ===================== prior fusion =====================


def lookup_prior(
    priors: Sequence[PriorEntry],
    disease: str,
    demographics: Optional[Demographics],
    floor: float = 1e-4,
) -> float:
    """Most specific matching prevalence for a disease, else the floor.

    Exact stratum entries win; otherwise fewest wildcards, breaking ties by
    concreteness position by position (age before sex before region).
    """
    if demographics is None:
        demographics = Demographics()
    band = demographics.band()
    wanted = (band, demographics.sex, demographics.region)

    def matches(entry: PriorEntry) -> bool:
        for entry_part, case_part in zip(entry.stratum, wanted):
            if entry_part == WILDCARD:
                continue
            if case_part is None or case_part != entry_part:
                return False
        return True

    candidates = [e for e in priors if e.disease == disease and matches(e)]
    if not candidates:
        return floor
    candidates.sort(
        key=lambda e: (
            e.wildcards(),
            e.age_band == WILDCARD,
            e.sex == WILDCARD,
            e.region == WILDCARD,
        )
    )
    return candidates[0].prevalence


def fuse_priors(
    candidates: Sequence[DiagnosisCandidate],
    priors: Sequence[PriorEntry],
    demographics: Optional[Demographics],
    config: EngineConfig,
) -> list[DiagnosisCandidate]:
    """Attach priors and the normalized posterior over the candidate set.

    posterior(d) = activation(d) * prior(d) / sum over candidates.  With
    priors disabled the prior term is uniform, so the posterior is just the
    normalized activation.
    """
    if not candidates:
        return []
    floor = config.prior_floor if config.prior_floor is not None else 0.0
    used: list[Optional[float]] = []
    mass: list[float] = []
    for candidate in candidates:
        if config.use_priors and priors:
            prior = lookup_prior(priors, candidate.disease, demographics, floor)
            used.append(prior)
            mass.append(candidate.activation * prior)
        else:
            used.append(None)
            mass.append(candidate.activation)
    total = sum(mass)
    fused = [
        replace(
            candidate,
            prior=prior,
            posterior=(weight / total) if total > 0.0 else 0.0,
        )
        for candidate, prior, weight in zip(candidates, used, mass)
    ]
    fused.sort(key=lambda c: (-(c.posterior or 0.0), -c.activation, c.disease))
    return fused


# ===================== the diagnose pipeline =====================


@dataclass(frozen=True)
class SymptomWeights:
    """How one symptom's weight evolved through the pipeline."""

    text: float
    retrieved: float
    blended: float
    final: float

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "retrieved": self.retrieved,
            "blended": self.blended,
            "final": self.final,
        }


@dataclass
class DiagnosisResult:
    candidates: list[DiagnosisCandidate]
    facts: list[FuzzyFact]
    weights: dict[str, SymptomWeights]
    neighbours: list[tuple[str, float]]

    def to_json(self) -> dict:
        return {
            "candidates": [c.to_json() for c in self.candidates],
            "facts": [
                {
                    "literal": str(f.literal),
                    "weight": f.weight,
                    "temporal": f.temporal.value,
                    "source": f.source,
                }
                for f in self.facts
            ],
            "weights": {name: w.to_json() for name, w in self.weights.items()},
            "neighbours": [{"id": case_id, "similarity": sim} for case_id, sim in self.neighbours],
        }


def _is_symptom(fact: FuzzyFact) -> bool:
    return fact.literal.predicate == "symptom" and len(fact.literal.args) == 1


def diagnose(
    snapshot: KnowledgeSnapshot,
    facts: Sequence[FuzzyFact],
    config: EngineConfig = EngineConfig(),
    *,
    index: Optional[CaseIndex] = None,
    demographics: Optional[Demographics] = None,
    weight_overrides: Optional[dict[str, float]] = None,
) -> DiagnosisResult:
    """Facts in, ranked diagnoses out.

    With an index, symptom weights go through retrieval blending before
    inference; without one they are used as extracted.  ``weight_overrides``
    pins individual symptoms to caller-chosen final weights (interactive
    what-if adjustments), bypassing the blend for those symptoms.
    """
    symptom_facts = [f for f in facts if _is_symptom(f)]
    other_facts = [f for f in facts if not _is_symptom(f)]
    text_weights = {f.literal.args[0]: f.weight for f in symptom_facts}

    retrieved: dict[str, float] = {}
    blended: dict[str, float] = {}
    neighbour_list: list[tuple[str, float]] = []
    if index is not None and symptom_facts:
        if index.dimension != config.dimension:
            raise RankingError(
                f"index dimension {index.dimension} != configured {config.dimension}"
            )
        embedder = HashingEmbedder(config.dimension)
        query = embedder.embed_facts(facts)
        neighbours = retrieve_neighbours(index, query, config)
        neighbour_list = [(entry.case_id, sim) for entry, sim in neighbours]
        retrieved = retrieval_weights(text_weights, neighbours)
        blended = blend_weights(
            text_weights, retrieved, config.text_gain, config.retrieval_gain
        )
        final = rescale_for_inference(blended, config.rescale)
    else:
        final = dict(text_weights)

    overrides = weight_overrides or {}
    for name, value in overrides.items():
        if not 0.0 <= value <= 1.0:
            raise RankingError(f"override for {name} outside [0, 1]: {value}")
    final = {
        name: overrides.get(name, weight) for name, weight in final.items()
    }

    adjusted = [
        replace(f, weight=final[f.literal.args[0]]) for f in symptom_facts
    ] + other_facts
    candidates = derive_candidates(snapshot, adjusted, config)
    candidates = fuse_priors(candidates, snapshot.priors, demographics, config)

    weights = {
        name: SymptomWeights(
            text=text,
            retrieved=retrieved.get(name, 0.0),
            blended=blended.get(name, text),
            final=final[name],
        )
        for name, text in text_weights.items()
    }
    return DiagnosisResult(
        candidates=candidates,
        facts=adjusted,
        weights=weights,
        neighbours=neighbour_list,
    )
