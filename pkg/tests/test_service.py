"""HTTP API: diagnosis, feedback commits, version browsing, replay audits."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from fuzzydx import dsl
from fuzzydx.extraction import ExtractionConfig, TermTable
from fuzzydx.kb import AdjustWeight, KnowledgeSnapshot, SnapshotStore, load_lexicon
from fuzzydx.learning import LearnerConfig, UpdateLog, pa_update
from fuzzydx.model import CaseRecord, Literal
from fuzzydx.service import create_app

# ===================== fixtures =====================


@pytest.fixture()
def store(tmp_path, fixtures_dir) -> SnapshotStore:
    program = dsl.parse_program((fixtures_dir / "angina_full.kb").read_text())
    lexicon = load_lexicon((fixtures_dir / "hedges.tsv").read_text())
    snapshot = KnowledgeSnapshot.create(
        tuple(program.rules), lexicon, tuple(program.priors), timestamp=0.0
    )
    return SnapshotStore.initialize(tmp_path / "kb", snapshot)


@pytest.fixture()
def client(store, fixtures_dir) -> TestClient:
    table = TermTable.from_tsv((fixtures_dir / "terms.tsv").read_text())
    app = create_app(
        store,
        extraction_config=ExtractionConfig(term_table=table, hedge_lexicon={}),
    )
    return TestClient(app)


def rule_id_of(store: SnapshotStore, disease: str) -> str:
    for rule in store.head().rules:
        if rule.disease == disease:
            return rule.rule_id
    raise AssertionError(f"no rule for {disease}")


CHEST_PAIN = str(Literal("symptom", ("chest_pain",)))


# ===================== health and reads =====================


class TestReads:
    def test_health_reports_head_version(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok", "head_version": 1}

    def test_snapshots_lists_manifests(self, client):
        payload = client.get("/snapshots").json()
        assert payload["head_version"] == 1
        assert len(payload["snapshots"]) == 1
        manifest = payload["snapshots"][0]
        assert manifest["version"] == 1
        assert "content_hash" in manifest

    def test_snapshot_rules_exposes_dsl_text(self, client):
        payload = client.get("/snapshots/1/rules").json()
        assert payload["version"] == 1
        assert len(payload["rules"]) == 3
        diseases = {rule["disease"] for rule in payload["rules"]}
        assert diseases == {"stable_angina", "acute_mi", "noncardiac_chest_pain"}
        for rule in payload["rules"]:
            assert rule["text"].startswith("diagnosis(")
        assert payload["lexicon"]["mild"] == pytest.approx(0.3)
        assert any(p["disease"] == "stable_angina" for p in payload["priors"])

    def test_missing_snapshot_is_404(self, client):
        assert client.get("/snapshots/9/rules").status_code == 404
        assert client.get("/snapshots/1/diff/9").status_code == 404


# ===================== diagnose =====================


class TestDiagnose:
    def test_symptom_case(self, client):
        response = client.post(
            "/diagnose", json={"symptoms": [["chest_pain", 1.0]]}
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["version"] == 1
        names = [c["disease"] for c in payload["candidates"]]
        assert names == ["noncardiac_chest_pain"]
        assert payload["candidates"][0]["activation"] == pytest.approx(0.45)
        assert "chest_pain" in payload["weights"]

    def test_text_case_runs_extraction_pipeline(self, client, angina_note):
        response = client.post(
            "/diagnose",
            json={"text": angina_note, "demographics": {"age": 52, "sex": "male"}},
        )
        assert response.status_code == 200
        payload = response.json()
        top = payload["candidates"][0]
        assert top["disease"] == "stable_angina"
        assert top["activation"] == pytest.approx(0.72, abs=1e-12)
        assert top["posterior"] == pytest.approx(0.5454545454545454, abs=1e-12)
        facts = {f["literal"] for f in payload["facts"]}
        assert str(Literal("trigger", ("exertion",))) in facts

    def test_text_case_uses_versioned_hedges(self, client, angina_note):
        # "mild breathlessness" -> hedge weight 0.3 from the stored lexicon
        response = client.post("/diagnose", json={"text": angina_note})
        weights = response.json()["weights"]
        assert weights["breathlessness"]["text"] == pytest.approx(0.3)

    def test_demographics_move_the_ranking(self, client, angina_note):
        plain = client.post("/diagnose", json={"text": angina_note}).json()
        stratified = client.post(
            "/diagnose",
            json={"text": angina_note, "demographics": {"age": 52, "sex": "male"}},
        ).json()
        # the wildcard prior favours noncardiac pain; the 40-64 male stratum
        # flips the lead to stable angina
        assert plain["candidates"][0]["disease"] == "noncardiac_chest_pain"
        assert stratified["candidates"][0]["disease"] == "stable_angina"

    def test_weight_overrides_rerun_the_case(self, client, angina_note):
        response = client.post(
            "/diagnose",
            json={"text": angina_note, "weight_overrides": {"chest_pain": 0.5}},
        )
        assert response.status_code == 200
        assert response.json()["candidates"] == []

    def test_both_channels_rejected(self, client):
        response = client.post(
            "/diagnose", json={"text": "hi", "symptoms": [["a", 1.0]]}
        )
        assert response.status_code == 400

    def test_neither_channel_rejected(self, client):
        assert client.post("/diagnose", json={}).status_code == 400

    def test_empty_symptom_list_rejected(self, client):
        assert client.post("/diagnose", json={"symptoms": []}).status_code == 422

    def test_blank_text_rejected(self, client):
        assert client.post("/diagnose", json={"text": "   "}).status_code == 422

    def test_out_of_range_override_rejected(self, client):
        response = client.post(
            "/diagnose",
            json={"symptoms": [["chest_pain", 1.0]], "weight_overrides": {"x": 1.5}},
        )
        assert response.status_code == 422

    def test_bad_demographics_rejected(self, client):
        response = client.post(
            "/diagnose",
            json={"symptoms": [["chest_pain", 1.0]], "demographics": {"age": -4}},
        )
        assert response.status_code == 422

    def test_diagnose_against_older_version(self, client, store):
        store.commit(
            [
                AdjustWeight(
                    rule_id_of(store, "noncardiac_chest_pain"),
                    Literal("symptom", ("chest_pain",)),
                    0.9,
                )
            ],
            base_version=1,
        )
        old = client.post(
            "/diagnose", json={"symptoms": [["chest_pain", 1.0]], "version": 1}
        ).json()
        new = client.post("/diagnose", json={"symptoms": [["chest_pain", 1.0]]}).json()
        assert old["version"] == 1
        assert new["version"] == 2
        assert old["candidates"][0]["activation"] == pytest.approx(0.45)
        assert new["candidates"][0]["activation"] == pytest.approx(0.9)


# ===================== feedback =====================


class TestFeedback:
    def adjust_payload(self, store, weight=0.5):
        return {
            "base_version": store.head_version(),
            "edits": [
                {
                    "kind": "adjust_weight",
                    "rule_id": rule_id_of(store, "stable_angina"),
                    "literal": CHEST_PAIN,
                    "weight": weight,
                }
            ],
        }

    def test_edit_commits_and_returns_diff(self, client, store):
        response = client.post("/feedback", json=self.adjust_payload(store))
        assert response.status_code == 200
        payload = response.json()
        assert payload["version"] == 2
        assert payload["commits"] == 1
        deltas = payload["diff"]["weight_deltas"]
        assert len(deltas) == 1
        assert deltas[0]["old"] == pytest.approx(0.8)
        assert deltas[0]["new"] == pytest.approx(0.5)
        assert store.head_version() == 2

    def test_stale_base_version_is_409_with_head(self, client, store):
        first = self.adjust_payload(store)
        assert client.post("/feedback", json=first).status_code == 200
        response = client.post("/feedback", json=first)
        assert response.status_code == 409
        assert response.json()["head_version"] == 2
        assert store.head_version() == 2

    def test_unknown_rule_is_422(self, client, store):
        payload = self.adjust_payload(store)
        payload["edits"][0]["rule_id"] = "r000000000000"
        assert client.post("/feedback", json=payload).status_code == 422

    def test_bad_action_kind_is_422(self, client):
        response = client.post(
            "/feedback", json={"base_version": 1, "edits": [{"kind": "nope"}]}
        )
        assert response.status_code == 422

    def test_counter_example_runs_one_learner_commit(self, client, store):
        response = client.post(
            "/feedback",
            json={
                "base_version": 1,
                "counter_examples": [
                    {"symptoms": [["chest_pain", 1.0]], "labels": ["stable_angina"]}
                ],
            },
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["commits"] == 1
        assert payload["version"] == 2
        kinds = {event["kind"] for event in payload["events"]}
        assert "weight_nudged" in kinds
        # gold edge up, imposter edge down
        deltas = {
            (d["rule_id"], d["literal"]): (d["old"], d["new"])
            for d in payload["diff"]["weight_deltas"]
        }
        gold_key = (rule_id_of(store, "stable_angina"), CHEST_PAIN)
        assert deltas[gold_key][1] > deltas[gold_key][0]

    def test_edits_and_counter_examples_chain_without_gaps(self, client, store):
        response = client.post(
            "/feedback",
            json={
                **self.adjust_payload(store, weight=0.6),
                "counter_examples": [
                    {"symptoms": [["chest_pain", 1.0]], "labels": ["stable_angina"]}
                ],
            },
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["commits"] == 2
        assert payload["version"] == 3
        assert store.versions() == [1, 2, 3]

    def test_nothing_to_apply_is_422(self, client):
        assert client.post("/feedback", json={"base_version": 1}).status_code == 422

    def test_counter_example_with_text_is_422(self, client):
        response = client.post(
            "/feedback",
            json={
                "base_version": 1,
                "counter_examples": [{"text": "chest pain", "labels": ["acute_mi"]}],
            },
        )
        assert response.status_code == 422

    def test_counter_example_without_labels_is_422(self, client):
        response = client.post(
            "/feedback",
            json={
                "base_version": 1,
                "counter_examples": [{"symptoms": [["chest_pain", 1.0]]}],
            },
        )
        assert response.status_code == 422

    def test_already_satisfied_counter_example_commits_nothing(self, client, store):
        response = client.post(
            "/feedback",
            json={
                "base_version": 1,
                "counter_examples": [
                    {"symptoms": [["chest_pain", 1.0]], "labels": ["acute_mi"]}
                ],
            },
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["commits"] == 0
        assert payload["version"] == 1
        assert payload["events"] == []
        assert store.head_version() == 1


# ===================== replay: counterfactual audit =====================


class TestReplay:
    def weight_edit(self, store) -> None:
        store.commit(
            [
                AdjustWeight(
                    rule_id_of(store, "stable_angina"),
                    Literal("symptom", ("chest_pain",)),
                    0.5,
                )
            ],
            base_version=1,
        )

    def test_same_version_has_zero_deltas(self, client):
        response = client.post(
            "/replay",
            json={"case": {"symptoms": [["chest_pain", 1.0]]}, "t1": 1, "t2": 1},
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["version_before"] == 1
        assert payload["version_after"] == 1
        assert payload["entries"], "same-version replay still lists the candidates"
        for entry in payload["entries"]:
            assert entry["posterior_delta"] == 0.0
            assert entry["rank_before"] == entry["rank_after"]
        changes = payload["kb_changes"]
        assert changes["added_rules"] == []
        assert changes["removed_rules"] == []
        assert changes["weight_deltas"] == []

    def test_weight_edit_shifts_the_posterior(self, client, store, angina_note):
        self.weight_edit(store)
        response = client.post(
            "/replay",
            json={
                "case": {
                    "text": angina_note,
                    "demographics": {"age": 52, "sex": "male"},
                },
                "t1": 1,
                "t2": 2,
            },
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["version_before"] == 1
        assert payload["version_after"] == 2
        moved = {entry["disease"]: entry for entry in payload["entries"]}
        angina = moved["stable_angina"]
        assert angina["posterior_before"] == pytest.approx(0.5454545454545454)
        assert angina["posterior_after"] == pytest.approx(0.42857142857142855)
        assert angina["posterior_delta"] < 0
        # entries come sorted by how far the posterior moved
        deltas = [abs(entry["posterior_delta"]) for entry in payload["entries"]]
        assert deltas == sorted(deltas, reverse=True)
        assert len(payload["kb_changes"]["weight_deltas"]) == 1

    def test_missing_version_is_404(self, client):
        response = client.post(
            "/replay",
            json={"case": {"symptoms": [["chest_pain", 1.0]]}, "t1": 1, "t2": 9},
        )
        assert response.status_code == 404

    def test_malformed_body_is_rejected(self, client):
        no_case = client.post("/replay", json={"t1": 1, "t2": 1})
        assert no_case.status_code == 422
        bad_version = client.post(
            "/replay",
            json={"case": {"symptoms": [["chest_pain", 1.0]]}, "t1": "one", "t2": 1},
        )
        assert bad_version.status_code == 422
        both_inputs = client.post(
            "/replay",
            json={
                "case": {"symptoms": [["chest_pain", 1.0]], "text": "chest pain"},
                "t1": 1,
                "t2": 1,
            },
        )
        assert both_inputs.status_code == 400


# ===================== replay: update journals =====================


class TestReplayLog:
    def test_recorded_update_replays_to_the_same_hash(self, client, store, tmp_path):
        base = store.head()
        record = CaseRecord(
            case_id="c1",
            symptoms=(("chest_pain", 1.0),),
            labels=("stable_angina",),
        )
        outcome = pa_update(base, record, LearnerConfig())
        assert outcome.changed
        log = UpdateLog(tmp_path / "updates.jsonl")
        log.append(base, outcome)
        store.commit_snapshot(outcome.snapshot, base.version)

        response = client.post(
            "/replay/log", json={"base_version": 1, "entries": log.entries()}
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["ok"] is True
        assert payload["final_version"] == 2
        assert payload["final_hash"] == store.head().content_hash

    def test_tampered_log_is_422(self, client, store, tmp_path):
        base = store.head()
        record = CaseRecord(
            case_id="c1",
            symptoms=(("chest_pain", 1.0),),
            labels=("stable_angina",),
        )
        outcome = pa_update(base, record, LearnerConfig())
        log = UpdateLog(tmp_path / "updates.jsonl")
        log.append(base, outcome)
        entries = log.entries()
        entries[0]["result_hash"] = "0" * 64
        response = client.post(
            "/replay/log", json={"base_version": 1, "entries": entries}
        )
        assert response.status_code == 422

    def test_missing_base_version_is_404(self, client):
        response = client.post("/replay/log", json={"base_version": 99, "entries": []})
        assert response.status_code == 404


# ===================== static frontend =====================


class TestStaticMount:
    def test_ui_directory_served_when_configured(self, store, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<html><body>case review</body></html>")
        app = create_app(store, static_dir=ui)
        client = TestClient(app)
        response = client.get("/ui/")
        assert response.status_code == 200
        assert "case review" in response.text
