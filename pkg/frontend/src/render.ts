/** DOM builders for the annotation page. */

import type { AnnotationTask, Progress } from "./types.js";

export interface HighlightParts {
  before: string;
  marked: string;
  after: string;
}

/**
 * Split a sentence around the [start, end) highlight span. The marked slice
 * is exactly the span the service reported, nothing widened or trimmed.
 */
export function highlightParts(sentence: string, span: [number, number]): HighlightParts {
  const [start, end] = span;
  return {
    before: sentence.slice(0, start),
    marked: sentence.slice(start, end),
    after: sentence.slice(end),
  };
}

/** One sentence card with the matched term highlighted. */
export function renderTaskCard(task: AnnotationTask): HTMLElement {
  const card = document.createElement("article");
  card.className = "task-card";
  card.tabIndex = -1;
  card.dataset.entityId = task.entity_id;

  const meta = document.createElement("div");
  meta.className = "task-meta";
  const docId = document.createElement("span");
  docId.className = "task-doc";
  docId.textContent = task.doc_id;
  const term = document.createElement("span");
  term.className = "task-term";
  term.textContent = task.term;
  meta.append(docId, term);

  const sentence = document.createElement("p");
  sentence.className = "task-sentence";
  const parts = highlightParts(task.sentence_text, task.highlight);
  const mark = document.createElement("mark");
  mark.textContent = parts.marked;
  sentence.append(document.createTextNode(parts.before), mark, document.createTextNode(parts.after));

  card.append(meta, sentence);
  return card;
}

/** Update the progress bar and its counter text in place. */
export function renderProgress(container: HTMLElement, progress: Progress): void {
  const bar = container.querySelector<HTMLElement>(".progress-fill");
  const text = container.querySelector<HTMLElement>(".progress-text");
  const fraction = progress.total > 0 ? progress.done / progress.total : 0;
  if (bar) {
    bar.style.width = `${parseFloat((fraction * 100).toFixed(1))}%`;
  }
  if (text) {
    text.textContent = `${progress.done} / ${progress.total} annotated`;
  }
}

/** Terminal state once the queue is empty. */
export function renderAllDone(exportUrl: string): HTMLElement {
  const done = document.createElement("div");
  done.className = "all-done";
  const heading = document.createElement("h2");
  heading.textContent = "All done";
  const line = document.createElement("p");
  line.append("Every task has a judgment. ");
  const link = document.createElement("a");
  link.href = exportUrl;
  link.textContent = "Download the export";
  line.append(link, ".");
  done.append(heading, line);
  return done;
}
