import { ApiClient, ApiError } from "./api.js";
import type { LabelSummary, SegmentsDoc } from "./types.js";

export type LabelKey = "p" | "n" | "u";

/** Labeling session state machine.
 *
 * Two clicks select an adjacent pair (a non-adjacent second click starts a
 * new first selection instead), P/N posts the label and clears the
 * selection, U undoes the last record. Counts are never tracked locally:
 * every mutation re-reads the server summary, so the UI always equals the
 * export ledger.
 */
export class LabelSession {
  first: number | null = null;
  pair: [number, number] | null = null;
  counts: LabelSummary = { positive: 0, negative: 0, total: 0 };
  toast: string | null = null;

  private adjacency = new Set<string>();

  constructor(
    private api: ApiClient,
    readonly tile: string,
    doc: SegmentsDoc,
    private onChange: () => void = () => {},
  ) {
    for (const [a, b] of doc.adjacency) {
      this.adjacency.add(`${Math.min(a, b)}:${Math.max(a, b)}`);
    }
  }

  async init(): Promise<void> {
    await this.refreshCounts();
  }

  isAdjacent(a: number, b: number): boolean {
    return this.adjacency.has(`${Math.min(a, b)}:${Math.max(a, b)}`);
  }

  adjacentTo(id: number): number[] {
    const out: number[] = [];
    for (const key of this.adjacency) {
      const [a, b] = key.split(":").map(Number);
      if (a === id) out.push(b);
      else if (b === id) out.push(a);
    }
    return out.sort((x, y) => x - y);
  }

  /** Selection rule: first click anchors, an adjacent second click forms
   * the pair, anything else re-anchors. */
  clickSegment(id: number | null): void {
    this.toast = null;
    if (id === null) {
      this.first = null;
      this.pair = null;
    } else if (this.first === null || this.pair !== null || id === this.first) {
      this.first = id;
      this.pair = null;
    } else if (this.isAdjacent(this.first, id)) {
      this.pair = [this.first, id];
    } else {
      this.first = id;
      this.pair = null;
    }
    this.onChange();
  }

  async pressKey(key: LabelKey): Promise<void> {
    this.toast = null;
    try {
      if (key === "u") {
        await this.api.undo();
        await this.refreshCounts();
      } else if (this.pair) {
        const label = key === "p" ? "positive" : "negative";
        await this.api.postLabel(this.tile, this.pair[0], this.pair[1], label);
        this.first = null;
        this.pair = null;
        await this.refreshCounts();
      } else {
        this.toast = "select an adjacent pair first";
      }
    } catch (err) {
      // conflicts surface as a toast; the selection stays intact
      this.toast = err instanceof ApiError ? err.message : String(err);
    }
    this.onChange();
  }

  async refreshCounts(): Promise<void> {
    this.counts = await this.api.summary();
    this.onChange();
  }
}
