// Thin typed client over the service's HTTP API.  Every request carries the
// moderator token when one is configured; the server decides what that
// grants.  fetch is injectable so tests can run against a mock service.

import { decisionJson } from "./decisions";
import type {
  DecisionRecord,
  ErrorBody,
  ExamplesResponse,
  ExplanationResponse,
  SearchResponse,
  SubmitResponse,
  TaskRecord,
  ThresholdProfileRecord,
} from "./types";

export interface ConsoleConfig {
  baseUrl: string;
  moderatorToken: string | null;
}

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly detail: string,
    public readonly status: number,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly token: string | null;
  private readonly fetchImpl: FetchLike;

  constructor(config: ConsoleConfig, fetchImpl?: FetchLike) {
    this.base = config.baseUrl.replace(/\/+$/, "");
    this.token = config.moderatorToken;
    // Bind so a bare global fetch keeps its expected receiver.
    this.fetchImpl = fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  assetUrl(assetId: string): string {
    return `${this.base}/assets/${encodeURIComponent(assetId)}.png`;
  }

  nextTask(): Promise<TaskRecord> {
    return this.request<TaskRecord>("GET", "/moderation/next");
  }

  submitReview(decision: DecisionRecord): Promise<SubmitResponse> {
    return this.request<SubmitResponse>(
      "POST",
      `/moderation/${encodeURIComponent(decision.task_id)}/review`,
      decisionJson(decision),
    );
  }

  search(params: { q?: string; threshold?: number; page?: number; pageSize?: number }): Promise<SearchResponse> {
    const query = new URLSearchParams();
    if (params.q) query.set("q", params.q);
    if (params.threshold !== undefined) query.set("threshold", String(params.threshold));
    if (params.page !== undefined) query.set("page", String(params.page));
    if (params.pageSize !== undefined) query.set("page_size", String(params.pageSize));
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request<SearchResponse>("GET", `/search${suffix}`);
  }

  examples(threshold: number, n = 5, seed = 0): Promise<ExamplesResponse> {
    const query = new URLSearchParams({ threshold: String(threshold), n: String(n), seed: String(seed) });
    return this.request<ExamplesResponse>("GET", `/examples?${query.toString()}`);
  }

  explanation(thingId: string): Promise<ExplanationResponse> {
    return this.request<ExplanationResponse>("GET", `/things/${encodeURIComponent(thingId)}/explanation`);
  }

  thresholds(): Promise<{ profiles: Record<string, ThresholdProfileRecord> }> {
    return this.request("GET", "/thresholds");
  }

  private async request<T>(method: string, path: string, body?: string): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["X-Moderator"] = this.token;
    if (body !== undefined) headers["Content-Type"] = "application/json";

    let response: Response;
    try {
      response = await this.fetchImpl(`${this.base}${path}`, { method, headers, body });
    } catch (err) {
      throw new ApiError("network_error", err instanceof Error ? err.message : String(err), 0);
    }
    if (!response.ok) {
      let parsed: ErrorBody | null = null;
      try {
        parsed = (await response.json()) as ErrorBody;
      } catch {
        // non-JSON error body; fall through to the generic error below
      }
      if (parsed && typeof parsed.error === "string") {
        throw new ApiError(parsed.error, parsed.detail ?? "", response.status);
      }
      throw new ApiError("http_error", `unexpected status ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }
}
