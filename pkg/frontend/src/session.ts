/**
 * Labeling session flow, independent of the DOM.
 *
 * All state is recoverable from server responses: a reload simply asks for
 * the next unjudged item again. The session guarantees at most one posted
 * judgment per rendered item (rapid double answers are ignored while a
 * post is in flight or after the item has been answered).
 */

import { Judged, LabelerApi, NextItem, Progress, SessionStatus } from "./api.js";

export interface SeenItem {
  itemId: string;
  imageUrl: string;
}

export class LabelerSession {
  private status: SessionStatus | null = null;
  private posting = false;
  private answered = new Set<string>();
  /** Items shown during this browser session, for the browsable gallery. */
  readonly seen: SeenItem[] = [];

  constructor(
    private readonly api: LabelerApi,
    readonly examinerId: string,
  ) {}

  get current(): NextItem | null {
    return this.status?.kind === "item" ? this.status.item : null;
  }

  get done(): boolean {
    return this.status?.kind === "done";
  }

  get progress(): Progress | null {
    if (this.status === null) return null;
    return this.status.kind === "item" ? this.status.item.progress : this.status.progress;
  }

  async start(): Promise<SessionStatus> {
    this.status = await this.api.nextItem(this.examinerId);
    this.remember();
    return this.status;
  }

  /**
   * Post the judgment for the current item and advance to the next one.
   * Returns the unchanged status when there is nothing to answer or an
   * answer for this item is already on its way.
   */
  async answer(judged: Judged): Promise<SessionStatus> {
    const item = this.current;
    if (item === null || this.posting || this.answered.has(item.item_id)) {
      return this.status as SessionStatus;
    }
    this.posting = true;
    try {
      await this.api.postJudgment(item.item_id, this.examinerId, judged);
      this.answered.add(item.item_id);
      this.status = await this.api.nextItem(this.examinerId);
      this.remember();
    } finally {
      this.posting = false;
    }
    return this.status as SessionStatus;
  }

  private remember(): void {
    const item = this.current;
    if (item !== null && !this.seen.some((s) => s.itemId === item.item_id)) {
      this.seen.push({ itemId: item.item_id, imageUrl: item.image_url });
    }
  }
}
