/** Shared fixtures: sample tasks and an in-memory stand-in for the service. */

import type { AnnotationTask } from "../src/types.js";

export function makeTask(n: number, overrides: Partial<AnnotationTask> = {}): AnnotationTask {
  const term = "smoker";
  const sentence = `Entry ${n}: patient is a ${term} since last year.`;
  const start = sentence.indexOf(term);
  return {
    entity_id: `e${String(n).padStart(3, "0")}`,
    doc_id: `doc-${n}`,
    sentence_text: sentence,
    highlight: [start, start + term.length],
    term,
    status: "pending",
    ...overrides,
  };
}

export function makeTasks(count: number): AnnotationTask[] {
  return Array.from({ length: count }, (_, i) => makeTask(i + 1));
}

/**
 * Fetch-compatible fake of the four service endpoints, backed by a Map so
 * tests can inspect resolved annotations and simulate restarts (a page
 * reload hits the same store again, like the real append-only log).
 */
export class FakeService {
  tasks: AnnotationTask[];
  resolved = new Map<string, boolean>();
  down = false;
  failNextPost = false;
  postCount = 0;

  constructor(tasks: AnnotationTask[]) {
    this.tasks = tasks;
  }

  export(): string {
    const ids = [...this.resolved.keys()].sort();
    return ids.map((id) => JSON.stringify({ entity_id: id, relevant: this.resolved.get(id) }) + "\n").join("");
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    if (this.down) {
      throw new TypeError("fetch failed");
    }
    const url = new URL(String(input), "http://service.test");
    if (url.pathname === "/api/tasks") {
      const status = url.searchParams.get("status") ?? "pending";
      const limitParam = url.searchParams.get("limit");
      const limit = limitParam === null ? Infinity : Number(limitParam);
      const out = [];
      for (const task of this.tasks) {
        const taskStatus = this.resolved.has(task.entity_id) ? "done" : "pending";
        if (status !== "all" && taskStatus !== status) continue;
        out.push({ ...task, status: taskStatus });
        if (out.length >= limit) break;
      }
      return jsonResponse(200, out);
    }
    if (url.pathname === "/api/progress") {
      const done = this.tasks.filter((t) => this.resolved.has(t.entity_id)).length;
      return jsonResponse(200, { done, total: this.tasks.length });
    }
    if (url.pathname === "/api/export") {
      return new Response(this.export(), {
        status: 200,
        headers: { "Content-Type": "application/x-ndjson; charset=utf-8" },
      });
    }
    if (url.pathname === "/api/annotations" && init?.method === "POST") {
      this.postCount += 1;
      if (this.failNextPost) {
        this.failNextPost = false;
        throw new TypeError("fetch failed");
      }
      const body = JSON.parse(String(init.body));
      if (typeof body.entity_id !== "string" || typeof body.relevant !== "boolean") {
        return jsonResponse(400, { error: "malformed annotation" });
      }
      if (!this.tasks.some((t) => t.entity_id === body.entity_id)) {
        return jsonResponse(404, { error: `unknown entity_id ${body.entity_id}` });
      }
      this.resolved.set(body.entity_id, body.relevant);
      return jsonResponse(200, {
        entity_id: body.entity_id,
        relevant: body.relevant,
        annotator: body.annotator ?? "anonymous",
        timestamp: "2026-01-01T00:00:00+00:00",
      });
    }
    return jsonResponse(404, { error: `no route for ${url.pathname}` });
  };
}

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json; charset=utf-8" },
  });
}

/** Resolve once queued microtasks (pending fetch handlers) have run. */
export function flushAsync(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
