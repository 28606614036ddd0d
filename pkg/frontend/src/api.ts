// ===================== service client =====================

import type {
  AuditReport,
  CaseBody,
  DiagnoseResponse,
  DiffResponse,
  FeedbackRequest,
  FeedbackResponse,
  HealthResponse,
  ReplayRequest,
  RulesResponse,
  SnapshotsResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx reply, keeping the status and the server's own message.  A 409
 * carries the current head version so callers can offer a reload. */
export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly headVersion?: number,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiRequestError";
  }
}

export class ApiClient {
  private readonly fetchImpl: FetchLike;
  private readonly base: string;

  constructor(fetchImpl?: FetchLike, base = "") {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
    this.base = base;
  }

  private async request<T>(method: string, path: string, body?: object): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    let payload: Record<string, unknown> = {};
    try {
      payload = (await response.json()) as Record<string, unknown>;
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!response.ok) {
      const detail =
        typeof payload.detail === "string" ? payload.detail : response.statusText;
      const head =
        typeof payload.head_version === "number" ? payload.head_version : undefined;
      throw new ApiRequestError(response.status, detail, head);
    }
    return payload as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("GET", "/health");
  }

  diagnose(body: CaseBody): Promise<DiagnoseResponse> {
    return this.request("POST", "/diagnose", body);
  }

  feedback(body: FeedbackRequest): Promise<FeedbackResponse> {
    return this.request("POST", "/feedback", body);
  }

  snapshots(): Promise<SnapshotsResponse> {
    return this.request("GET", "/snapshots");
  }

  snapshotRules(version: number): Promise<RulesResponse> {
    return this.request("GET", `/snapshots/${version}/rules`);
  }

  snapshotDiff(older: number, newer: number): Promise<DiffResponse> {
    return this.request("GET", `/snapshots/${older}/diff/${newer}`);
  }

  replay(body: ReplayRequest): Promise<AuditReport> {
    return this.request("POST", "/replay", body);
  }
}
