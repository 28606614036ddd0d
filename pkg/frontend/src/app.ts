// ===================== DOM wiring =====================
//
// One mountApp() wires the static page to the API client.  All state lives
// in a single object; every handler fetches, stores the response, and
// re-renders the affected region in place — the page never reloads.

import { ApiClient } from "./api.js";
import type { CaseBody, DiagnoseResponse, EditAction } from "./types.js";
import {
  renderAudit,
  renderDiff,
  renderError,
  renderFacts,
  renderRanking,
  renderRules,
  renderTimeline,
  renderWeights,
  escapeHtml,
} from "./views.js";

export interface AppState {
  caseBody: CaseBody | null;
  overrides: Record<string, number>;
  lastResponse: DiagnoseResponse | null;
  pendingEdits: EditAction[];
  headVersion: number | null;
}

/** "fever=0.8, cough" → [["fever", 0.8], ["cough", 1.0]]. */
export function parseSymptoms(text: string): [string, number][] {
  const pairs: [string, number][] = [];
  for (const piece of text.split(",")) {
    const item = piece.trim();
    if (!item) continue;
    const eq = item.indexOf("=");
    if (eq < 0) {
      pairs.push([item, 1.0]);
      continue;
    }
    const name = item.slice(0, eq).trim();
    const weight = Number(item.slice(eq + 1).trim());
    if (!name || Number.isNaN(weight)) {
      throw new Error(`cannot read symptom ${JSON.stringify(item)}`);
    }
    pairs.push([name, weight]);
  }
  return pairs;
}

function describeEdit(edit: EditAction): string {
  switch (edit.kind) {
    case "add_rule":
      return `add: ${edit.rule}`;
    case "remove_rule":
      return `remove rule ${edit.rule_id}`;
    case "adjust_weight":
      return `set ${edit.rule_id} ${edit.literal} to ${edit.weight}`;
    case "lexicon_set":
      return `set hedge ${edit.term} to ${edit.weight}`;
    case "prior_set":
      return `set prior ${edit.disease} to ${edit.prevalence}`;
  }
}

export function mountApp(root: ParentNode, client: ApiClient): AppState {
  const state: AppState = {
    caseBody: null,
    overrides: {},
    lastResponse: null,
    pendingEdits: [],
    headVersion: null,
  };

  const element = <T extends HTMLElement>(id: string): T => {
    const node = root.querySelector<T>(`#${id}`);
    if (!node) throw new Error(`markup is missing #${id}`);
    return node;
  };

  const status = element<HTMLSpanElement>("server-status");
  const caseError = element<HTMLDivElement>("case-error");
  const factsView = element<HTMLDivElement>("facts-view");
  const rankingView = element<HTMLDivElement>("ranking-view");
  const weightsView = element<HTMLDivElement>("weights-view");
  const rulesView = element<HTMLDivElement>("rules-view");
  const pendingList = element<HTMLUListElement>("pending-edits");
  const editorError = element<HTMLDivElement>("editor-error");
  const editorDiff = element<HTMLDivElement>("editor-diff");
  const timelineView = element<HTMLDivElement>("timeline-view");
  const timelineError = element<HTMLDivElement>("timeline-error");
  const timelineDiff = element<HTMLDivElement>("timeline-diff");
  const auditError = element<HTMLDivElement>("audit-error");
  const auditView = element<HTMLDivElement>("audit-view");

  // -- shared refreshers ----------------------------------------------------

  async function refreshStatus(): Promise<void> {
    try {
      const health = await client.health();
      state.headVersion = health.head_version;
      status.textContent = `${health.status} · head v${health.head_version}`;
    } catch (error) {
      status.textContent = "server unreachable";
    }
  }

  async function refreshRules(): Promise<void> {
    if (state.headVersion === null) return;
    try {
      rulesView.innerHTML = renderRules(await client.snapshotRules(state.headVersion));
    } catch (error) {
      rulesView.innerHTML = renderError(error);
    }
  }

  async function refreshTimeline(): Promise<void> {
    try {
      const listing = await client.snapshots();
      timelineView.innerHTML = renderTimeline(listing.snapshots, listing.head_version);
    } catch (error) {
      timelineView.innerHTML = renderError(error);
    }
  }

  // -- case + ranking ---------------------------------------------------------

  async function runDiagnose(): Promise<void> {
    if (!state.caseBody) return;
    const body: CaseBody = { ...state.caseBody };
    if (Object.keys(state.overrides).length > 0) {
      body.weight_overrides = { ...state.overrides };
    }
    caseError.innerHTML = "";
    try {
      const response = await client.diagnose(body);
      state.lastResponse = response;
      factsView.innerHTML = renderFacts(response.facts);
      rankingView.innerHTML = renderRanking(response);
      weightsView.innerHTML = renderWeights(response.weights, state.overrides);
    } catch (error) {
      caseError.innerHTML = renderError(error);
    }
  }

  element<HTMLButtonElement>("diagnose-btn").onclick = () => {
    const note = element<HTMLTextAreaElement>("note-text").value.trim();
    const symptomText = element<HTMLInputElement>("symptoms-input").value.trim();
    const body: CaseBody = {};
    if (note) {
      body.text = note;
    } else if (symptomText) {
      try {
        body.symptoms = parseSymptoms(symptomText);
      } catch (error) {
        caseError.innerHTML = renderError(error);
        return;
      }
    } else {
      caseError.innerHTML = renderError(new Error("enter a note or a symptom list"));
      return;
    }
    const age = element<HTMLInputElement>("age-input").value;
    const sex = element<HTMLSelectElement>("sex-input").value;
    if (age || sex) {
      body.demographics = {};
      if (age) body.demographics.age = Number(age);
      if (sex) body.demographics.sex = sex;
    }
    state.caseBody = body;
    state.overrides = {};
    void runDiagnose();
  };

  // Dragging a slider re-runs inference with that weight pinned; only the
  // affected regions re-render.
  weightsView.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.type !== "range" || !target.dataset.symptom) return;
    state.overrides[target.dataset.symptom] = Number(target.value);
    void runDiagnose();
  });

  // -- rule editor ------------------------------------------------------------

  function renderPending(): void {
    pendingList.innerHTML = state.pendingEdits
      .map((edit) => `<li>${escapeHtml(describeEdit(edit))}</li>`)
      .join("");
  }

  rulesView.addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>("[data-rule-id]");
    if (row?.dataset.ruleId) {
      element<HTMLInputElement>("adjust-rule-id").value = row.dataset.ruleId;
    }
  });

  element<HTMLButtonElement>("queue-add-rule-btn").onclick = () => {
    const text = element<HTMLInputElement>("rule-text").value.trim();
    if (!text) return;
    state.pendingEdits.push({ kind: "add_rule", rule: text, provenance: "clinician" });
    element<HTMLInputElement>("rule-text").value = "";
    renderPending();
  };

  element<HTMLButtonElement>("queue-adjust-btn").onclick = () => {
    const ruleId = element<HTMLInputElement>("adjust-rule-id").value.trim();
    const literal = element<HTMLInputElement>("adjust-literal").value.trim();
    const weight = Number(element<HTMLInputElement>("adjust-weight").value);
    if (!ruleId || !literal || Number.isNaN(weight)) {
      editorError.innerHTML = renderError(new Error("adjust needs rule id, literal, and weight"));
      return;
    }
    editorError.innerHTML = "";
    state.pendingEdits.push({ kind: "adjust_weight", rule_id: ruleId, literal, weight });
    renderPending();
  };

  element<HTMLButtonElement>("submit-edits-btn").onclick = async () => {
    if (state.pendingEdits.length === 0) {
      editorError.innerHTML = renderError(new Error("queue at least one edit"));
      return;
    }
    if (state.headVersion === null) {
      editorError.innerHTML = renderError(new Error("server version unknown; reload"));
      return;
    }
    editorError.innerHTML = "";
    try {
      const result = await client.feedback({
        base_version: state.headVersion,
        edits: state.pendingEdits,
        note: element<HTMLInputElement>("edit-note").value,
      });
      state.pendingEdits = [];
      renderPending();
      editorDiff.innerHTML =
        `<h3>committed v${result.version}</h3>` + renderDiff(result.diff);
      await refreshStatus();
      await refreshRules();
      await refreshTimeline();
    } catch (error) {
      editorError.innerHTML = renderError(error);
    }
  };

  // A 409 renders a reload button; clicking it pulls the new head.
  editorError.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    if (target.dataset.action !== "reload-head") return;
    editorError.innerHTML = "";
    await refreshStatus();
    await refreshRules();
    await refreshTimeline();
  });

  // -- timeline ----------------------------------------------------------------

  element<HTMLButtonElement>("show-diff-btn").onclick = async () => {
    const older = root.querySelector<HTMLInputElement>('input[name="diff-older"]:checked');
    const newer = root.querySelector<HTMLInputElement>('input[name="diff-newer"]:checked');
    if (!older || !newer) {
      timelineError.innerHTML = renderError(new Error("pick an older and a newer version"));
      return;
    }
    timelineError.innerHTML = "";
    try {
      const result = await client.snapshotDiff(Number(older.value), Number(newer.value));
      timelineDiff.innerHTML =
        `<h3>v${result.older} → v${result.newer}</h3>` + renderDiff(result.diff);
    } catch (error) {
      timelineError.innerHTML = renderError(error);
    }
  };

  // -- counterfactual audit -----------------------------------------------------

  element<HTMLButtonElement>("run-audit-btn").onclick = async () => {
    if (!state.caseBody) {
      auditError.innerHTML = renderError(new Error("diagnose a case first"));
      return;
    }
    const t1 = Number(element<HTMLInputElement>("audit-t1").value);
    const t2 = Number(element<HTMLInputElement>("audit-t2").value);
    auditError.innerHTML = "";
    try {
      const report = await client.replay({ case: state.caseBody, t1, t2 });
      auditView.innerHTML = renderAudit(report);
    } catch (error) {
      auditError.innerHTML = renderError(error);
    }
  };

  // -- boot -----------------------------------------------------------------------

  void (async () => {
    await refreshStatus();
    await refreshRules();
    await refreshTimeline();
  })();

  return state;
}
