"""Record real API responses for the UI test suite.

Boots the diagnosis service on the chest-pain fixture knowledge base, walks
it through the flows the browser exercises (diagnose, slider override,
weight edit, rule add/remove, diff, counterfactual replay), and saves each
response verbatim under ``frontend/tests/fixtures/``.  The UI tests render
from these files, so every number they assert on is a field some real
response actually carried.

Run from the repository root after changing the service or the fixtures:

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from fuzzydx import dsl
from fuzzydx.extraction import ExtractionConfig, TermTable
from fuzzydx.kb import KnowledgeSnapshot, SnapshotStore, load_lexicon
from fuzzydx.service import create_app

ROOT = Path(__file__).resolve().parents[2]
FIXTURES = ROOT / "fixtures"
OUT = ROOT / "frontend" / "tests" / "fixtures"

NEW_RULE = "diagnosis(unstable_angina) :- symptom(chest_pain)@0.9, trigger(rest)@0.8."


def rule_id_of(store: SnapshotStore, disease: str) -> str:
    for rule in store.head().rules:
        if rule.disease == disease:
            return rule.rule_id
    raise SystemExit(f"no rule for {disease}")


def save(name: str, payload: dict) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / name).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {name}")


def main() -> None:
    program = dsl.parse_program((FIXTURES / "angina_full.kb").read_text())
    lexicon = load_lexicon((FIXTURES / "hedges.tsv").read_text())
    snapshot = KnowledgeSnapshot.create(
        tuple(program.rules), lexicon, tuple(program.priors), timestamp=0.0
    )
    note = (FIXTURES / "angina_note.txt").read_text()
    table = TermTable.from_tsv((FIXTURES / "terms.tsv").read_text())

    with tempfile.TemporaryDirectory() as tmp:
        store = SnapshotStore.initialize(Path(tmp) / "kb", snapshot)
        app = create_app(
            store,
            extraction_config=ExtractionConfig(term_table=table, hedge_lexicon={}),
        )
        client = TestClient(app)
        case = {"text": note, "demographics": {"age": 58, "sex": "male"}}

        def get(path: str) -> dict:
            response = client.get(path)
            assert response.status_code == 200, (path, response.text)
            return response.json()

        def post(path: str, body: dict) -> dict:
            response = client.post(path, json=body)
            assert response.status_code == 200, (path, response.text)
            return response.json()

        # v1: the walkthrough case, plain and with the slider override
        save("rules.json", get("/snapshots/1/rules"))
        save("diagnose.json", post("/diagnose", dict(case)))
        save(
            "diagnose_lowered.json",
            post("/diagnose", {**case, "weight_overrides": {"chest_pain": 0.7}}),
        )

        # v2: the weight-edit fixture
        angina_rule = rule_id_of(store, "stable_angina")
        save(
            "feedback.json",
            post(
                "/feedback",
                {
                    "base_version": 1,
                    "note": "chest pain is less specific than assumed",
                    "edits": [
                        {
                            "kind": "adjust_weight",
                            "rule_id": angina_rule,
                            "literal": "symptom(chest_pain)",
                            "weight": 0.5,
                        }
                    ],
                },
            ),
        )
        save("audit.json", post("/replay", {"case": case, "t1": 1, "t2": 2}))

        # v3: an addition and a removal so diffs show every change kind
        post(
            "/feedback",
            {
                "base_version": 2,
                "note": "swap the infarction rule for a rest-pain rule",
                "edits": [
                    {"kind": "add_rule", "rule": NEW_RULE, "provenance": "clinician"},
                    {"kind": "remove_rule", "rule_id": rule_id_of(store, "acute_mi")},
                ],
            },
        )
        save("snapshots.json", get("/snapshots"))
        save("diff_full.json", get("/snapshots/1/diff/3"))
        save("diff_empty.json", get("/snapshots/1/diff/1"))
        save("health.json", get("/health"))


if __name__ == "__main__":
    main()
