// ===================== service API payload shapes =====================
//
// Mirrors the JSON the diagnosis service emits, field for field.  The UI
// never derives numbers of its own: everything rendered traces back to one
// of these fields.

export interface HealthResponse {
  status: string;
  head_version: number;
}

// -- diagnose ---------------------------------------------------------------

export interface ProofLeaf {
  literal: string;
  weight: number;
  span: [number, number] | null;
  edge_weight: number;
  fact: string | null;
  fact_weight: number | null;
}

export interface ProofRule {
  id: string;
  activation: number;
  leaves: ProofLeaf[];
}

export interface ProofTree {
  hypothesis: string;
  rules: ProofRule[];
  confidence: number;
}

export interface Candidate {
  disease: string;
  activation: number;
  confidence: number;
  confidence_display: number;
  prior: number | null;
  posterior: number | null;
  proof: ProofTree;
  explanation: string;
}

export interface ExtractedFact {
  literal: string;
  weight: number;
  temporal: string;
  source: string;
}

/** How one symptom's weight moved through the pipeline. */
export interface WeightTriplet {
  text: number;
  retrieved: number;
  blended: number;
  final: number;
}

export interface Neighbour {
  id: string;
  similarity: number;
}

export interface DiagnoseResponse {
  version: number;
  candidates: Candidate[];
  facts: ExtractedFact[];
  weights: Record<string, WeightTriplet>;
  neighbours: Neighbour[];
}

export interface CaseDemographics {
  age?: number;
  sex?: string;
  region?: string;
}

/** Request body for POST /diagnose; exactly one of text/symptoms. */
export interface CaseBody {
  text?: string;
  symptoms?: [string, number][];
  demographics?: CaseDemographics;
  version?: number;
  weight_overrides?: Record<string, number>;
}

// -- snapshots --------------------------------------------------------------

export interface SnapshotManifest {
  version: number;
  timestamp: number;
  parent: number | null;
  content_hash: string;
  author: string;
  note: string;
}

export interface SnapshotsResponse {
  head_version: number;
  snapshots: SnapshotManifest[];
}

export interface RuleView {
  id: string;
  disease: string;
  text: string;
  provenance: string;
}

export interface PriorView {
  disease: string;
  age_band: string;
  sex: string;
  region: string;
  prevalence: number;
}

export interface RulesResponse {
  version: number;
  content_hash: string;
  rules: RuleView[];
  priors: PriorView[];
  lexicon: Record<string, number>;
}

export interface WeightDelta {
  rule_id: string;
  literal: string;
  old: number;
  new: number;
}

export interface LexiconDelta {
  term: string;
  old: number | null;
  new: number | null;
}

export interface PriorDelta {
  disease: string;
  age_band: string;
  sex: string;
  region: string;
  old: number | null;
  new: number | null;
}

export interface SnapshotDiff {
  added_rules: string[];
  removed_rules: string[];
  weight_deltas: WeightDelta[];
  lexicon_deltas: LexiconDelta[];
  prior_deltas: PriorDelta[];
}

export interface DiffResponse {
  older: number;
  newer: number;
  diff: SnapshotDiff;
}

// -- feedback ---------------------------------------------------------------

export type EditAction =
  | { kind: "add_rule"; rule: string; provenance?: string }
  | { kind: "remove_rule"; rule_id: string }
  | { kind: "adjust_weight"; rule_id: string; literal: string; weight: number }
  | { kind: "lexicon_set"; term: string; weight: number | null }
  | {
      kind: "prior_set";
      disease: string;
      age_band?: string;
      sex?: string;
      region?: string;
      prevalence: number | null;
    };

export interface FeedbackRequest {
  base_version: number;
  edits: EditAction[];
  note?: string;
}

export interface FeedbackResponse {
  base_version: number;
  version: number;
  commits: number;
  events: object[];
  diff: SnapshotDiff;
}

// -- replay (counterfactual audit) -------------------------------------------

export interface ReplayRequest {
  case: CaseBody;
  t1: number;
  t2: number;
}

export interface AuditEntry {
  disease: string;
  activation_before: number | null;
  activation_after: number | null;
  posterior_before: number | null;
  posterior_after: number | null;
  posterior_delta: number;
  rank_before: number | null;
  rank_after: number | null;
}

export interface AuditReport {
  version_before: number;
  version_after: number;
  entries: AuditEntry[];
  kb_changes: SnapshotDiff;
}
