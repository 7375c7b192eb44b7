/**
 * Typed client for the labeling service API.
 *
 * The server is the single source of session state: it hands out the next
 * unjudged item per examiner and records judgments append-only. Payloads
 * never contain truth labels or timing metadata.
 */

export type Judged = "real" | "generated";

export interface Progress {
  judged: number;
  assigned: number;
}

export interface NextItem {
  item_id: string;
  image_url: string;
  question: string;
  progress: Progress;
}

export type SessionStatus =
  | { kind: "item"; item: NextItem }
  | { kind: "done"; progress: Progress | null };

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

export class LabelerApi {
  constructor(private readonly baseUrl: string = "") {}

  /** Next unjudged assigned item, or the completion signal (HTTP 204). */
  async nextItem(examinerId: string): Promise<SessionStatus> {
    const url = `${this.baseUrl}/api/items/next?examiner=${encodeURIComponent(examinerId)}`;
    const response = await fetch(url);
    if (response.status === 204) {
      const judged = response.headers.get("X-Progress-Judged");
      const assigned = response.headers.get("X-Progress-Assigned");
      const progress =
        judged !== null && assigned !== null
          ? { judged: Number(judged), assigned: Number(assigned) }
          : null;
      return { kind: "done", progress };
    }
    if (!response.ok) {
      throw new ApiError(`next item failed: HTTP ${response.status}`, response.status);
    }
    const item = (await response.json()) as NextItem;
    return { kind: "item", item };
  }

  /** Record one judgment; answers are immutable once posted. */
  async postJudgment(itemId: string, examinerId: string, judged: Judged): Promise<void> {
    const response = await fetch(`${this.baseUrl}/api/judgments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ item_id: itemId, examiner_id: examinerId, judged }),
    });
    if (!response.ok) {
      throw new ApiError(`judgment rejected: HTTP ${response.status}`, response.status);
    }
  }
}
