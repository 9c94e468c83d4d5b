/**
 * Controller tests against a fake of the whole HTTP contract: queue loading,
 * optimistic submits with rollback, keyboard shortcuts, retry banner, and a
 * full label-then-reload round trip.
 */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { startApp } from "../src/app.js";
import { FakeService, flushAsync, makeTasks } from "./helpers.js";

let service: FakeService;
let root: HTMLElement;

beforeEach(() => {
  service = new FakeService(makeTasks(10));
  vi.stubGlobal("fetch", service.fetch);
  window.localStorage.clear();
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
});

afterEach(() => {
  vi.unstubAllGlobals();
});

async function boot(): Promise<void> {
  startApp(root, new AnnotationApi());
  await flushAsync();
}

function currentCardId(): string | undefined {
  return root.querySelector<HTMLElement>(".task-card")?.dataset.entityId;
}

function press(key: string): void {
  document.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true, cancelable: true }));
}

describe("loading", () => {
  it("renders the first pending task and the progress counter", async () => {
    await boot();
    expect(currentCardId()).toBe("e001");
    expect(root.querySelector(".progress-text")!.textContent).toBe("0 / 10 annotated");
    expect(root.querySelector<HTMLElement>(".actions")!.hidden).toBe(false);
  });

  it("highlights the term inside the rendered card", async () => {
    await boot();
    const mark = root.querySelector("mark")!;
    expect(mark.textContent).toBe("smoker");
  });

  it("shows the all-done state with an export link when nothing is pending", async () => {
    for (const task of service.tasks) service.resolved.set(task.entity_id, true);
    await boot();
    expect(root.querySelector(".all-done")).not.toBeNull();
    expect(root.querySelector(".all-done a")!.getAttribute("href")).toBe("/api/export");
    expect(root.querySelector<HTMLElement>(".actions")!.hidden).toBe(true);
  });
});

describe("labeling", () => {
  it("keyboard shortcuts submit and advance through the queue", async () => {
    await boot();
    press("r");
    press("i");
    await flushAsync();
    expect(service.resolved.get("e001")).toBe(true);
    expect(service.resolved.get("e002")).toBe(false);
    expect(currentCardId()).toBe("e003");
    expect(root.querySelector(".progress-text")!.textContent).toBe("2 / 10 annotated");
  });

  it("buttons do the same as the shortcuts", async () => {
    await boot();
    root.querySelector<HTMLButtonElement>(".btn-relevant")!.click();
    await flushAsync();
    expect(service.resolved.get("e001")).toBe(true);
    root.querySelector<HTMLButtonElement>(".btn-irrelevant")!.click();
    await flushAsync();
    expect(service.resolved.get("e002")).toBe(false);
  });

  it("skip cycles the task to the back and posts nothing", async () => {
    await boot();
    press("s");
    await flushAsync();
    expect(currentCardId()).toBe("e002");
    expect(service.postCount).toBe(0);
    expect(service.resolved.size).toBe(0);
  });

  it("sends the annotator from the header field", async () => {
    await boot();
    const input = root.querySelector<HTMLInputElement>(".annotator-input")!;
    input.value = "dr-b";
    press("r");
    await flushAsync();
    expect(service.postCount).toBe(1);
    const tasks = await service.fetch("/api/tasks?status=done");
    expect(((await tasks.json()) as unknown[]).length).toBe(1);
  });

  it("ignores shortcuts while typing in the annotator field", async () => {
    await boot();
    const input = root.querySelector<HTMLInputElement>(".annotator-input")!;
    input.focus();
    input.dispatchEvent(new KeyboardEvent("keydown", { key: "r", bubbles: true }));
    await flushAsync();
    expect(service.postCount).toBe(0);
    expect(currentCardId()).toBe("e001");
  });

  it("reaches the all-done state after the last judgment", async () => {
    service = new FakeService(makeTasks(2));
    vi.stubGlobal("fetch", service.fetch);
    await boot();
    press("r");
    press("r");
    await flushAsync();
    expect(root.querySelector(".all-done")).not.toBeNull();
    expect(root.querySelector(".progress-text")!.textContent).toBe("2 / 2 annotated");
  });
});

describe("failure handling", () => {
  it("rolls back the optimistic advance when the POST dies mid-flight", async () => {
    await boot();
    service.failNextPost = true;
    press("r");
    expect(currentCardId()).toBe("e002");
    await flushAsync();
    expect(currentCardId()).toBe("e001");
    expect(service.resolved.has("e001")).toBe(false);
    expect(root.querySelector(".toast")!.textContent).toContain("Annotation not saved");
  });

  it("a retried submit after a failure leaves one resolved record", async () => {
    await boot();
    service.failNextPost = true;
    press("r");
    await flushAsync();
    press("r");
    await flushAsync();
    expect(service.resolved.get("e001")).toBe(true);
    expect(service.export().split("\n").filter(Boolean)).toHaveLength(1);
    expect(currentCardId()).toBe("e002");
  });

  it("shows the retry banner when the service is down at load", async () => {
    service.down = true;
    await boot();
    const banner = root.querySelector<HTMLElement>(".retry-banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("Cannot reach the annotation service");
    expect(currentCardId()).toBeUndefined();
  });

  it("the retry button reloads the queue once the service is back", async () => {
    service.down = true;
    await boot();
    service.down = false;
    root.querySelector<HTMLButtonElement>(".retry-button")!.click();
    await flushAsync();
    expect(root.querySelector<HTMLElement>(".retry-banner")!.hidden).toBe(true);
    expect(currentCardId()).toBe("e001");
  });
});

describe("round trip", () => {
  it("labels five entities, exports exactly those five, and survives a reload", async () => {
    await boot();
    press("r");
    press("i");
    press("r");
    press("i");
    press("r");
    await flushAsync();

    const exportLines = service.export().split("\n").filter(Boolean);
    expect(exportLines).toHaveLength(5);
    expect(exportLines.map((line) => JSON.parse(line))).toEqual([
      { entity_id: "e001", relevant: true },
      { entity_id: "e002", relevant: false },
      { entity_id: "e003", relevant: true },
      { entity_id: "e004", relevant: false },
      { entity_id: "e005", relevant: true },
    ]);

    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
    await boot();
    expect(root.querySelector(".progress-text")!.textContent).toBe("5 / 10 annotated");
    expect(currentCardId()).toBe("e006");
    expect(service.export().split("\n").filter(Boolean)).toHaveLength(5);
  });
});
