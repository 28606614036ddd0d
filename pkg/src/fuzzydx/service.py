"""HTTP front door: diagnose cases, take clinician feedback, browse versions.

The API is deliberately plain JSON over a handful of routes:

* ``POST /diagnose``           — rank diseases for one case
* ``POST /feedback``           — apply edits and counter-examples, returns the diff
* ``GET  /snapshots``          — version manifests
* ``GET  /snapshots/{v}/rules``— one version's rules, priors, and lexicon
* ``GET  /snapshots/{a}/diff/{b}`` — structural diff between two versions
* ``POST /replay``             — re-diagnose one case under two stored versions
* ``POST /replay/log``         — verify a posted update log against the store

Malformed cases are a 400 (both or neither of text/symptoms) or a 422
(unusable values); a feedback race against a newer head is a 409 carrying the
current head version so clients can reload and retry.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from . import dsl
from .audit import counterfactual_audit
from .extraction import ExtractionConfig, ExtractionError, extract_facts
from .inference import EngineConfig
from .kb import (
    Author,
    ConsistencyViolation,
    EditRequest,
    KnowledgeBaseError,
    MissingSnapshotError,
    SnapshotStore,
    StaleVersionError,
    UnknownRuleIdError,
    action_from_json,
    diff,
)
from .learning import (
    LearnerConfig,
    LearningError,
    event_to_json,
    pa_update,
    replay_log,
)
from .model import CaseRecord, Demographics, EngineError
from .ranking import CaseIndex, RankingError, diagnose


class ApiError(Exception):
    """Carries an HTTP status for the common failure modes."""

    def __init__(self, status: int, message: str, **extra):
        self.status = status
        self.message = message
        self.extra = extra
        super().__init__(message)


def _parse_demographics(payload: dict) -> Optional[Demographics]:
    raw = payload.get("demographics")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ApiError(422, "demographics must be an object")
    try:
        demographics = Demographics.from_json(raw)
        demographics.band()  # age must fall in a known band
    except (TypeError, ValueError) as exc:
        raise ApiError(422, f"bad demographics: {exc}") from exc
    return demographics


def _parse_overrides(payload: dict) -> Optional[dict[str, float]]:
    raw = payload.get("weight_overrides")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ApiError(422, "weight_overrides must map symptom names to weights")
    try:
        return {str(name): float(value) for name, value in raw.items()}
    except (TypeError, ValueError) as exc:
        raise ApiError(422, f"bad weight override: {exc}") from exc


def _parse_counter_example(raw: dict, position: int) -> CaseRecord:
    from .evaluation import parse_case

    if not isinstance(raw, dict):
        raise ApiError(422, f"counter-example {position} must be an object")
    data = dict(raw)
    data.setdefault("id", f"feedback-{position}")
    try:
        record = parse_case(data)
    except (TypeError, ValueError) as exc:
        raise ApiError(422, f"counter-example {position}: {exc}") from exc
    if record.symptoms is None:
        raise ApiError(
            422, f"counter-example {position}: raw text is not trainable, send symptoms"
        )
    if not record.labels:
        raise ApiError(422, f"counter-example {position}: labels are required")
    return record


def create_app(
    store: SnapshotStore,
    *,
    engine_config: EngineConfig = EngineConfig(),
    learner_config: LearnerConfig = LearnerConfig(),
    index: Optional[CaseIndex] = None,
    extraction_config: Optional[ExtractionConfig] = None,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="fuzzydx", docs_url=None, redoc_url=None)

    # -- error mapping ---------------------------------------------------

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"detail": exc.message, **exc.extra}
        )

    @app.exception_handler(MissingSnapshotError)
    async def _missing(request: Request, exc: MissingSnapshotError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(StaleVersionError)
    async def _stale(request: Request, exc: StaleVersionError):
        return JSONResponse(
            status_code=409,
            content={"detail": str(exc), "head_version": store.head_version()},
        )

    @app.exception_handler(ConsistencyViolation)
    async def _inconsistent(request: Request, exc: ConsistencyViolation):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(EngineError)
    async def _engine_error(request: Request, exc: EngineError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    # -- reads -------------------------------------------------------------

    @app.get("/health")
    async def health():
        return {"status": "ok", "head_version": store.head_version()}

    @app.get("/snapshots")
    async def snapshots():
        return {"head_version": store.head_version(), "snapshots": store.manifests()}

    @app.get("/snapshots/{version}/rules")
    async def snapshot_rules(version: int):
        snapshot = store.get(version)
        return {
            "version": snapshot.version,
            "content_hash": snapshot.content_hash,
            "rules": [
                {
                    "id": rule.rule_id,
                    "disease": rule.disease,
                    "text": dsl.format_rule(rule),
                    "provenance": rule.provenance.value,
                }
                for rule in snapshot.rules
            ],
            "priors": [
                {
                    "disease": entry.disease,
                    "age_band": entry.age_band,
                    "sex": entry.sex,
                    "region": entry.region,
                    "prevalence": entry.prevalence,
                }
                for entry in snapshot.priors
            ],
            "lexicon": dict(sorted(snapshot.lexicon.items())),
        }

    @app.get("/snapshots/{older}/diff/{newer}")
    async def snapshot_diff(older: int, newer: int):
        delta = diff(store.get(older), store.get(newer))
        return {"older": older, "newer": newer, "diff": delta.to_json()}

    # -- diagnose ------------------------------------------------------------

    def _case_facts(payload: dict, snapshot):
        """One case's evidence: raw text (extracted under the snapshot's
        lexicon) or an explicit symptom list, never both."""
        text = payload.get("text")
        symptoms = payload.get("symptoms")
        if (text is None) == (symptoms is None):
            raise ApiError(400, "send exactly one of 'text' or 'symptoms'")

        if text is not None:
            if not isinstance(text, str) or not text.strip():
                raise ApiError(422, "text must be a non-empty string")
            if extraction_config is None:
                raise ApiError(422, "this server has no extraction lexicon; send symptoms")
            config = extraction_config.with_lexicon(snapshot.lexicon)
            try:
                return extract_facts(text, config).facts
            except ExtractionError as exc:
                raise ApiError(422, f"extraction failed: {exc}") from exc

        from .evaluation import parse_case

        try:
            record = parse_case({"id": "request", "symptoms": symptoms})
        except (TypeError, ValueError) as exc:
            raise ApiError(422, f"bad symptoms: {exc}") from exc
        if not record.symptoms:
            raise ApiError(422, "symptoms list is empty")
        return record.symptom_facts()

    @app.post("/diagnose")
    async def diagnose_case(payload: dict = Body(...)):
        version = payload.get("version")
        snapshot = store.head() if version is None else store.get(int(version))
        facts = _case_facts(payload, snapshot)

        try:
            result = diagnose(
                snapshot,
                facts,
                engine_config,
                index=index,
                demographics=_parse_demographics(payload),
                weight_overrides=_parse_overrides(payload),
            )
        except RankingError as exc:
            raise ApiError(422, str(exc)) from exc
        return {"version": snapshot.version, **result.to_json()}

    # -- feedback ------------------------------------------------------------

    @app.post("/feedback")
    async def feedback(payload: dict = Body(...)):
        base_version = payload.get("base_version")
        if not isinstance(base_version, int):
            raise ApiError(422, "base_version must be an integer")
        raw_edits = payload.get("edits", [])
        raw_counters = payload.get("counter_examples", [])
        if not isinstance(raw_edits, list) or not isinstance(raw_counters, list):
            raise ApiError(422, "edits and counter_examples must be arrays")
        if not raw_edits and not raw_counters:
            raise ApiError(422, "nothing to apply")
        note = str(payload.get("note", ""))

        try:
            actions = [action_from_json(raw) for raw in raw_edits]
        except KnowledgeBaseError as exc:
            raise ApiError(422, str(exc)) from exc
        counters = [
            _parse_counter_example(raw, position)
            for position, raw in enumerate(raw_counters, start=1)
        ]

        base_snapshot = store.get(base_version)
        events: list[dict] = []
        commits = 0
        if actions:
            edits = [
                EditRequest(action=action, author=Author.CLINICIAN, note=note)
                for action in actions
            ]
            store.commit(edits, base_version, note=note)
            commits += 1
        elif base_version != store.head_version():
            raise StaleVersionError(store.head_version(), base_version)

        for record in counters:
            head = store.head()
            try:
                outcome = pa_update(head, record, learner_config)
            except LearningError as exc:
                raise ApiError(422, str(exc)) from exc
            if outcome.changed:
                store.commit_snapshot(
                    outcome.snapshot, head.version, note=f"counter-example {record.case_id}"
                )
                commits += 1
                events.extend(event_to_json(event) for event in outcome.events)

        head = store.head()
        return {
            "base_version": base_version,
            "version": head.version,
            "commits": commits,
            "events": events,
            "diff": diff(base_snapshot, head).to_json(),
        }

    # -- replay ----------------------------------------------------------

    @app.post("/replay")
    async def replay_case(payload: dict = Body(...)):
        case = payload.get("case")
        if not isinstance(case, dict):
            raise ApiError(422, "case must be an object")
        t1 = payload.get("t1")
        t2 = payload.get("t2")
        if not isinstance(t1, int) or not isinstance(t2, int):
            raise ApiError(422, "t1 and t2 must be integers")
        after = store.get(t2)
        store.get(t1)  # 404 before any extraction work
        facts = _case_facts(case, after)
        try:
            report = counterfactual_audit(
                store,
                facts,
                t1,
                t2,
                engine_config,
                index=index,
                demographics=_parse_demographics(case),
            )
        except RankingError as exc:
            raise ApiError(422, str(exc)) from exc
        return report.to_json()

    @app.post("/replay/log")
    async def replay_journal(payload: dict = Body(...)):
        base_version = payload.get("base_version")
        if not isinstance(base_version, int):
            raise ApiError(422, "base_version must be an integer")
        entries = payload.get("entries")
        if not isinstance(entries, list):
            raise ApiError(422, "entries must be an array")
        base = store.get(base_version)
        try:
            final = replay_log(base, entries)
        except LearningError as exc:
            raise ApiError(422, f"replay failed: {exc}") from exc
        return {
            "ok": True,
            "base_version": base_version,
            "final_version": final.version,
            "final_hash": final.content_hash,
        }

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
