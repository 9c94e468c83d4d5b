/** Thin fetch client for the four annotation service endpoints. */

import type { AnnotationTask, Progress, StoredAnnotation } from "./types.js";

/** HTTP-level failure carrying the status code and the server's message. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export class AnnotationApi {
  /** Base URL without trailing slash; "" means same origin. */
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  fetchTasks(status: "pending" | "done" | "all" = "pending", limit?: number): Promise<AnnotationTask[]> {
    const params = new URLSearchParams({ status });
    if (limit !== undefined) params.set("limit", String(limit));
    return this.getJson<AnnotationTask[]>(`/api/tasks?${params.toString()}`);
  }

  fetchProgress(): Promise<Progress> {
    return this.getJson<Progress>("/api/progress");
  }

  /**
   * Submit one judgment. entityId must come from a task the service handed
   * out; the client never makes ids up.
   */
  async submitAnnotation(entityId: string, relevant: boolean, annotator: string): Promise<StoredAnnotation> {
    const response = await fetch(this.baseUrl + "/api/annotations", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ entity_id: entityId, relevant, annotator }),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as StoredAnnotation;
  }

  /** Where the resolved annotations can be downloaded from. */
  exportUrl(): string {
    return this.baseUrl + "/api/export";
  }
}
