/** Payload shapes of the annotation service's JSON API. */

export type TaskStatus = "pending" | "done";

/** One entity to judge, as returned by GET /api/tasks. */
export interface AnnotationTask {
  entity_id: string;
  doc_id: string;
  sentence_text: string;
  /** [start, end) character offsets of the matched term within sentence_text. */
  highlight: [number, number];
  term: string;
  status: TaskStatus;
}

/** Response of POST /api/annotations. */
export interface StoredAnnotation {
  entity_id: string;
  relevant: boolean;
  annotator: string;
  timestamp: string;
}

/** Response of GET /api/progress. */
export interface Progress {
  done: number;
  total: number;
}
