"""Counterfactual audits: rerun one case under two knowledge-base versions
and report what the edit did to each disease's standing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .inference import EngineConfig
from .kb import SnapshotDiff, SnapshotStore, diff
from .model import Demographics, FuzzyFact
from .ranking import CaseIndex, DiagnosisResult, diagnose


@dataclass(frozen=True)
class AuditEntry:
    """One disease's before/after standing; ``None`` means not a candidate."""

    disease: str
    activation_before: Optional[float]
    activation_after: Optional[float]
    posterior_before: Optional[float]
    posterior_after: Optional[float]
    rank_before: Optional[int]
    rank_after: Optional[int]

    @property
    def posterior_delta(self) -> float:
        return (self.posterior_after or 0.0) - (self.posterior_before or 0.0)

    def to_json(self) -> dict:
        return {
            "disease": self.disease,
            "activation_before": self.activation_before,
            "activation_after": self.activation_after,
            "posterior_before": self.posterior_before,
            "posterior_after": self.posterior_after,
            "posterior_delta": self.posterior_delta,
            "rank_before": self.rank_before,
            "rank_after": self.rank_after,
        }


@dataclass
class AuditReport:
    version_before: int
    version_after: int
    entries: tuple[AuditEntry, ...]
    kb_changes: SnapshotDiff

    def entry(self, disease: str) -> AuditEntry:
        for entry in self.entries:
            if entry.disease == disease:
                return entry
        raise KeyError(disease)

    def to_json(self) -> dict:
        return {
            "version_before": self.version_before,
            "version_after": self.version_after,
            "entries": [entry.to_json() for entry in self.entries],
            "kb_changes": self.kb_changes.to_json(),
        }

    def summary(self) -> str:
        lines = [f"v{self.version_before} -> v{self.version_after}"]
        for e in self.entries:
            before = "-" if e.posterior_before is None else f"{e.posterior_before:.4f}"
            after = "-" if e.posterior_after is None else f"{e.posterior_after:.4f}"
            rank_before = "-" if e.rank_before is None else str(e.rank_before)
            rank_after = "-" if e.rank_after is None else str(e.rank_after)
            lines.append(
                f"  {e.disease}: posterior {before} -> {after} "
                f"(rank {rank_before} -> {rank_after})"
            )
        return "\n".join(lines)


def _standings(result: DiagnosisResult) -> dict[str, tuple[float, float, int]]:
    return {
        c.disease: (c.activation, c.posterior, rank)
        for rank, c in enumerate(result.candidates, start=1)
    }


def counterfactual_audit(
    store: SnapshotStore,
    facts: Sequence[FuzzyFact],
    version_before: int,
    version_after: int,
    config: EngineConfig = EngineConfig(),
    *,
    index: Optional[CaseIndex] = None,
    demographics: Optional[Demographics] = None,
) -> AuditReport:
    """Diagnose the same evidence under two stored versions and diff the
    outcome, most-moved diseases first."""
    older = store.get(version_before)
    newer = store.get(version_after)
    before = _standings(
        diagnose(older, facts, config, index=index, demographics=demographics)
    )
    after = _standings(
        diagnose(newer, facts, config, index=index, demographics=demographics)
    )
    entries = []
    for disease in sorted(set(before) | set(after)):
        b = before.get(disease)
        a = after.get(disease)
        entries.append(
            AuditEntry(
                disease=disease,
                activation_before=b[0] if b else None,
                activation_after=a[0] if a else None,
                posterior_before=b[1] if b else None,
                posterior_after=a[1] if a else None,
                rank_before=b[2] if b else None,
                rank_after=a[2] if a else None,
            )
        )
    entries.sort(key=lambda e: (-abs(e.posterior_delta), e.disease))
    return AuditReport(
        version_before=version_before,
        version_after=version_after,
        entries=tuple(entries),
        kb_changes=diff(older, newer),
    )
