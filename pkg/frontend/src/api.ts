/** Typed client over the annotation service; fetch is injectable for tests. */

import type { PendingRequest, StatusDoc, Submission } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type SubmitOutcome =
  | { kind: "ok" }
  | { kind: "stale" }
  | { kind: "invalid"; detail: string };

export class AnnotationClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  /** null when no request is pending (HTTP 204). */
  async fetchPending(): Promise<PendingRequest | null> {
    const reply = await this.fetchFn(`${this.baseUrl}/api/pending`);
    if (reply.status === 204) return null;
    if (!reply.ok) throw new Error(`pending fetch failed: ${reply.status}`);
    return (await reply.json()) as PendingRequest;
  }

  async submit(submission: Submission): Promise<SubmitOutcome> {
    const reply = await this.fetchFn(`${this.baseUrl}/api/annotations`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(submission),
    });
    if (reply.ok) return { kind: "ok" };
    if (reply.status === 409) return { kind: "stale" };
    const detail = await reply
      .json()
      .then((d: { error?: string }) => d.error ?? "invalid")
      .catch(() => "invalid");
    return { kind: "invalid", detail };
  }

  async status(): Promise<StatusDoc> {
    const reply = await this.fetchFn(`${this.baseUrl}/api/status`);
    if (!reply.ok) throw new Error(`status fetch failed: ${reply.status}`);
    return (await reply.json()) as StatusDoc;
  }
}
