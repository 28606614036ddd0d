// ===================== pure render functions =====================
//
// Every view is a function from API payloads to an HTML string; no DOM
// access, no state, no arithmetic beyond formatting.  Activations, blends
// and posteriors arrive computed from the server — the browser never
// re-derives them.

import { ApiRequestError } from "./api.js";
import type {
  AuditReport,
  Candidate,
  DiagnoseResponse,
  ExtractedFact,
  ProofRule,
  ProofTree,
  RulesResponse,
  SnapshotDiff,
  SnapshotManifest,
  WeightTriplet,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** One fixed format for every weight/probability so tests can trace each
 * rendered number back to the response field it came from. */
export function fmt(value: number | null | undefined): string {
  return value === null || value === undefined ? "—" : value.toFixed(4);
}

function barWidth(posterior: number | null): string {
  return ((posterior ?? 0) * 100).toFixed(1);
}

// ===================== ranking =====================

function renderProofRule(rule: ProofRule): string {
  const leaves = rule.leaves
    .map((leaf) => {
      const fact =
        leaf.fact === null
          ? `<span class="leaf-unmatched">no matching fact</span>`
          : `${escapeHtml(leaf.fact)} @ ${fmt(leaf.fact_weight)}`;
      return `<li class="proof-leaf">${escapeHtml(leaf.literal)} · edge ${fmt(
        leaf.edge_weight,
      )} · ${fact} · contributes ${fmt(leaf.weight)}</li>`;
    })
    .join("");
  return `<details class="proof-rule"><summary>${escapeHtml(
    rule.id,
  )} · activation ${fmt(rule.activation)}</summary><ul>${leaves}</ul></details>`;
}

export function renderProof(proof: ProofTree): string {
  const rules = proof.rules.map(renderProofRule).join("");
  return `<details class="proof"><summary>why ${escapeHtml(
    proof.hypothesis,
  )} · confidence ${fmt(proof.confidence)}</summary>${rules}</details>`;
}

function renderCandidate(candidate: Candidate, rank: number): string {
  const posterior = candidate.posterior;
  const prior =
    candidate.prior === null ? "" : ` · prior ${fmt(candidate.prior)}`;
  return `<li class="candidate" data-disease="${escapeHtml(candidate.disease)}">
    <div class="candidate-head">
      <span class="rank">${rank}.</span>
      <span class="disease">${escapeHtml(candidate.disease)}</span>
      <span class="posterior">${fmt(posterior)}</span>
    </div>
    <div class="bar-track"><div class="bar" style="width:${barWidth(posterior)}%"></div></div>
    <div class="candidate-meta">activation ${fmt(candidate.activation)} · confidence ${fmt(
      candidate.confidence_display,
    )}${prior}</div>
    <div class="explanation">${escapeHtml(candidate.explanation)}</div>
    ${renderProof(candidate.proof)}
  </li>`;
}

export function renderRanking(response: DiagnoseResponse): string {
  if (response.candidates.length === 0) {
    return `<p class="empty">No rule fired for this case under v${response.version}.</p>`;
  }
  const items = response.candidates
    .map((candidate, position) => renderCandidate(candidate, position + 1))
    .join("");
  return `<p class="ranking-version">ranked under v${response.version}</p><ol class="ranking">${items}</ol>`;
}

export function renderFacts(facts: ExtractedFact[]): string {
  if (facts.length === 0) return "";
  const chips = facts
    .map(
      (fact) =>
        `<span class="fact" title="${escapeHtml(fact.source)}">${escapeHtml(
          fact.literal,
        )} @ ${fmt(fact.weight)} (${escapeHtml(fact.temporal)})</span>`,
    )
    .join(" ");
  return `<div class="facts">${chips}</div>`;
}

// ===================== weight sliders =====================

export function renderWeights(
  weights: Record<string, WeightTriplet>,
  overrides: Record<string, number>,
): string {
  const names = Object.keys(weights).sort();
  if (names.length === 0) return "";
  const rows = names
    .map((name) => {
      const triplet = weights[name]!;
      const value = overrides[name] ?? triplet.final;
      return `<tr data-symptom="${escapeHtml(name)}">
        <td class="symptom">${escapeHtml(name)}</td>
        <td>${fmt(triplet.text)}</td>
        <td>${fmt(triplet.retrieved)}</td>
        <td>${fmt(triplet.blended)}</td>
        <td class="final">${fmt(triplet.final)}</td>
        <td><input type="range" min="0" max="1" step="0.01" value="${value.toFixed(2)}"
             data-symptom="${escapeHtml(name)}" aria-label="weight for ${escapeHtml(name)}"></td>
      </tr>`;
    })
    .join("");
  return `<table class="weights">
    <thead><tr><th>symptom</th><th>text</th><th>retrieved</th><th>blended</th><th>used</th><th>override</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

// ===================== rules and diffs =====================

export function renderRules(response: RulesResponse): string {
  const rows = response.rules
    .map(
      (rule) => `<li class="rule" data-rule-id="${escapeHtml(rule.id)}">
      <span class="rule-id">${escapeHtml(rule.id)}</span>
      <span class="provenance provenance-${escapeHtml(rule.provenance)}">${escapeHtml(
        rule.provenance,
      )}</span>
      <code>${escapeHtml(rule.text)}</code>
    </li>`,
    )
    .join("");
  return `<p class="rules-version">v${response.version} · ${escapeHtml(
    response.content_hash.slice(0, 12),
  )}</p><ul class="rules">${rows}</ul>`;
}

export function diffIsEmpty(diff: SnapshotDiff): boolean {
  return (
    diff.added_rules.length === 0 &&
    diff.removed_rules.length === 0 &&
    diff.weight_deltas.length === 0 &&
    diff.lexicon_deltas.length === 0 &&
    diff.prior_deltas.length === 0
  );
}

export function renderDiff(diff: SnapshotDiff): string {
  if (diffIsEmpty(diff)) {
    return `<p class="diff-empty">no changes</p>`;
  }
  const lines: string[] = [];
  for (const rule of diff.added_rules) {
    lines.push(`<li class="diff-add">+ <code>${escapeHtml(rule)}</code></li>`);
  }
  for (const ruleId of diff.removed_rules) {
    lines.push(`<li class="diff-remove">− rule ${escapeHtml(ruleId)}</li>`);
  }
  for (const delta of diff.weight_deltas) {
    lines.push(
      `<li class="diff-weight">~ ${escapeHtml(delta.rule_id)} ${escapeHtml(
        delta.literal,
      )}: ${fmt(delta.old)} → ${fmt(delta.new)}</li>`,
    );
  }
  for (const delta of diff.lexicon_deltas) {
    lines.push(
      `<li class="diff-lexicon">~ hedge ${escapeHtml(delta.term)}: ${fmt(
        delta.old,
      )} → ${fmt(delta.new)}</li>`,
    );
  }
  for (const delta of diff.prior_deltas) {
    const scope = `${delta.age_band}/${delta.sex}/${delta.region}`;
    lines.push(
      `<li class="diff-prior">~ prior ${escapeHtml(delta.disease)} (${escapeHtml(
        scope,
      )}): ${fmt(delta.old)} → ${fmt(delta.new)}</li>`,
    );
  }
  return `<ul class="diff">${lines.join("")}</ul>`;
}

// ===================== snapshot timeline =====================

export function renderTimeline(
  snapshots: SnapshotManifest[],
  headVersion: number,
): string {
  const rows = [...snapshots]
    .sort((a, b) => b.version - a.version)
    .map((manifest) => {
      const head = manifest.version === headVersion ? `<span class="badge-head">head</span>` : "";
      const note = manifest.note ? escapeHtml(manifest.note) : "<em>no note</em>";
      return `<li class="snapshot" data-version="${manifest.version}">
        <label><input type="radio" name="diff-older" value="${manifest.version}"> older</label>
        <label><input type="radio" name="diff-newer" value="${manifest.version}"> newer</label>
        <span class="version">v${manifest.version}</span> ${head}
        <span class="author">${escapeHtml(manifest.author)}</span>
        <span class="note">${note}</span>
        <span class="hash">${escapeHtml(manifest.content_hash.slice(0, 12))}</span>
      </li>`;
    })
    .join("");
  return `<ul class="timeline">${rows}</ul>`;
}

// ===================== counterfactual audit =====================

function deltaClass(delta: number): string {
  if (delta > 0) return "delta-up";
  if (delta < 0) return "delta-down";
  return "delta-zero";
}

export function renderAudit(report: AuditReport): string {
  const rows = report.entries
    .map(
      (entry) => `<tr data-disease="${escapeHtml(entry.disease)}">
      <td>${escapeHtml(entry.disease)}</td>
      <td>${fmt(entry.posterior_before)}</td>
      <td>${fmt(entry.posterior_after)}</td>
      <td class="${deltaClass(entry.posterior_delta)}">${fmt(entry.posterior_delta)}</td>
      <td>${entry.rank_before ?? "—"} → ${entry.rank_after ?? "—"}</td>
    </tr>`,
    )
    .join("");
  return `<h3>v${report.version_before} → v${report.version_after}</h3>
  <table class="audit">
    <thead><tr><th>disease</th><th>posterior before</th><th>posterior after</th><th>Δ posterior</th><th>rank</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  <h4>knowledge-base changes</h4>
  ${renderDiff(report.kb_changes)}`;
}

// ===================== errors =====================

export function renderError(error: unknown): string {
  if (error instanceof ApiRequestError && error.status === 409) {
    const head =
      error.headVersion === undefined ? "" : ` Head is now v${error.headVersion}.`;
    return `<div class="error conflict">Someone else committed first: ${escapeHtml(
      error.detail,
    )}${head} <button type="button" data-action="reload-head">Reload latest version</button></div>`;
  }
  if (error instanceof ApiRequestError) {
    return `<div class="error">${error.status}: ${escapeHtml(error.detail)}</div>`;
  }
  const message = error instanceof Error ? error.message : String(error);
  return `<div class="error">${escapeHtml(message)}</div>`;
}
