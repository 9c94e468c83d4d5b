/** Local working queue of pending tasks, kept in service order. */

import type { AnnotationTask } from "./types.js";

export class TaskQueue {
  private items: AnnotationTask[];

  constructor(tasks: Iterable<AnnotationTask>) {
    this.items = [...tasks];
  }

  get length(): number {
    return this.items.length;
  }

  get isEmpty(): boolean {
    return this.items.length === 0;
  }

  /** The task the annotator is looking at, if any. */
  current(): AnnotationTask | undefined {
    return this.items[0];
  }

  /**
   * Optimistically remove the current task when a submit starts, so the next
   * card can render before the service replies.
   */
  advance(): AnnotationTask | undefined {
    return this.items.shift();
  }

  /** Put a task back at the front after a failed submit. */
  restore(task: AnnotationTask): void {
    this.items.unshift(task);
  }

  /** Move the current task to the back without judging it. */
  skip(): AnnotationTask | undefined {
    const task = this.items.shift();
    if (task !== undefined) {
      this.items.push(task);
    }
    return task;
  }

  toArray(): AnnotationTask[] {
    return [...this.items];
  }
}
