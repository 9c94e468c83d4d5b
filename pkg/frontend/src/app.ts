/**
 * Annotation page controller: one card at a time, keyboard-first.
 *
 * The queue is optimistic. A judgment removes the card immediately and the
 * POST runs behind it; a failed POST puts the card back at the front and
 * raises a toast, so nothing is ever marked done locally that the service
 * did not confirm.
 */

import { AnnotationApi } from "./api.js";
import { TaskQueue } from "./queue.js";
import { renderAllDone, renderProgress, renderTaskCard } from "./render.js";
import type { AnnotationTask } from "./types.js";

const RETRY_INTERVAL_MS = 5000;
const TOAST_LIFETIME_MS = 4000;

function scaffold(root: HTMLElement): void {
  root.innerHTML = `
    <header class="top-bar">
      <h1>Relevance review</h1>
      <div class="progress" role="status">
        <div class="progress-track"><div class="progress-fill"></div></div>
        <span class="progress-text"></span>
      </div>
      <label class="annotator-field">
        Annotator
        <input type="text" class="annotator-input" spellcheck="false">
      </label>
    </header>
    <div class="retry-banner" hidden>
      <span class="retry-message"></span>
      <button type="button" class="retry-button">Retry now</button>
    </div>
    <main class="card-slot"></main>
    <footer class="actions" hidden>
      <button type="button" class="btn-irrelevant" title="shortcut: i">Irrelevant <kbd>i</kbd></button>
      <button type="button" class="btn-skip" title="shortcut: s">Skip <kbd>s</kbd></button>
      <button type="button" class="btn-relevant" title="shortcut: r">Relevant <kbd>r</kbd></button>
    </footer>
    <div class="toasts"></div>
  `;
}

export function startApp(root: HTMLElement, api: AnnotationApi): void {
  scaffold(root);

  const cardSlot = root.querySelector<HTMLElement>(".card-slot")!;
  const actions = root.querySelector<HTMLElement>(".actions")!;
  const progressBox = root.querySelector<HTMLElement>(".progress")!;
  const banner = root.querySelector<HTMLElement>(".retry-banner")!;
  const bannerMessage = banner.querySelector<HTMLElement>(".retry-message")!;
  const toasts = root.querySelector<HTMLElement>(".toasts")!;
  const annotatorInput = root.querySelector<HTMLInputElement>(".annotator-input")!;

  annotatorInput.value = window.localStorage.getItem("annotator") ?? "expert";
  annotatorInput.addEventListener("change", () => {
    window.localStorage.setItem("annotator", annotatorInput.value.trim() || "expert");
  });

  let queue = new TaskQueue([]);
  let loaded = false;
  let retryTimer: number | undefined;

  function toast(message: string): void {
    const el = document.createElement("div");
    el.className = "toast";
    el.textContent = message;
    toasts.append(el);
    window.setTimeout(() => el.remove(), TOAST_LIFETIME_MS);
  }

  function showBanner(message: string): void {
    bannerMessage.textContent = message;
    banner.hidden = false;
    if (retryTimer === undefined) {
      retryTimer = window.setTimeout(() => {
        retryTimer = undefined;
        void load();
      }, RETRY_INTERVAL_MS);
    }
  }

  function hideBanner(): void {
    banner.hidden = true;
    if (retryTimer !== undefined) {
      window.clearTimeout(retryTimer);
      retryTimer = undefined;
    }
  }

  function renderCurrent(): void {
    cardSlot.replaceChildren();
    const task = queue.current();
    if (task === undefined) {
      if (loaded) {
        cardSlot.append(renderAllDone(api.exportUrl()));
      }
      actions.hidden = true;
      return;
    }
    const card = renderTaskCard(task);
    cardSlot.append(card);
    actions.hidden = false;
    card.focus();
  }

  async function refreshProgress(): Promise<void> {
    try {
      renderProgress(progressBox, await api.fetchProgress());
    } catch {
      // stale counter until the next successful refresh; the judgment itself landed
    }
  }

  function submit(relevant: boolean): void {
    const task = queue.advance();
    if (task === undefined) return;
    renderCurrent();
    const annotator = annotatorInput.value.trim() || "expert";
    api
      .submitAnnotation(task.entity_id, relevant, annotator)
      .then(() => refreshProgress())
      .catch((err: unknown) => {
        queue.restore(task);
        renderCurrent();
        const reason = err instanceof Error ? err.message : String(err);
        toast(`Annotation not saved: ${reason}`);
      });
  }

  function skip(): void {
    if (queue.skip() !== undefined) {
      renderCurrent();
    }
  }

  async function load(): Promise<void> {
    let tasks: AnnotationTask[];
    try {
      tasks = await api.fetchTasks("pending");
      renderProgress(progressBox, await api.fetchProgress());
    } catch (err: unknown) {
      const reason = err instanceof Error ? err.message : String(err);
      showBanner(`Cannot reach the annotation service (${reason}).`);
      return;
    }
    hideBanner();
    loaded = true;
    queue = new TaskQueue(tasks);
    renderCurrent();
  }

  banner.querySelector<HTMLButtonElement>(".retry-button")!.addEventListener("click", () => {
    hideBanner();
    void load();
  });
  root.querySelector<HTMLButtonElement>(".btn-relevant")!.addEventListener("click", () => submit(true));
  root.querySelector<HTMLButtonElement>(".btn-irrelevant")!.addEventListener("click", () => submit(false));
  root.querySelector<HTMLButtonElement>(".btn-skip")!.addEventListener("click", () => skip());

  function onKeydown(event: KeyboardEvent): void {
    if (!root.isConnected) {
      // the app was torn out of the page (remount); stop handling keys
      document.removeEventListener("keydown", onKeydown);
      return;
    }
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    if (event.ctrlKey || event.metaKey || event.altKey) return;
    switch (event.key.toLowerCase()) {
      case "r":
        submit(true);
        break;
      case "i":
        submit(false);
        break;
      case "s":
        skip();
        break;
      default:
        return;
    }
    event.preventDefault();
  }
  document.addEventListener("keydown", onKeydown);

  void load();
}
