import type { LabelRecord, LabelSummary, SegmentsDoc, TileInfo } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Thin typed client over the labeling service HTTP API. */
export class ApiClient {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = (await resp.json()).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    const text = await resp.text();
    return (path.endsWith("/export") ? (text as unknown) : JSON.parse(text)) as T;
  }

  tiles(): Promise<TileInfo[]> {
    return this.request("/api/tiles");
  }

  segments(tile: string): Promise<SegmentsDoc> {
    return this.request(`/api/tiles/${tile}/segments.json`);
  }

  imageUrl(tile: string): string {
    return `${this.base}/api/tiles/${tile}/image.png`;
  }

  postLabel(tile: string, a: number, b: number, label: "positive" | "negative") {
    return this.request<{ ok: boolean; count: number }>("/api/labels", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ tile, a, b, label, annotator: "ui" }),
    });
  }

  undo() {
    return this.request<{ ok: boolean; undone: LabelRecord; count: number }>(
      "/api/labels/undo",
      { method: "POST" },
    );
  }

  summary(): Promise<LabelSummary> {
    return this.request("/api/labels/summary");
  }

  async exportRecords(): Promise<LabelRecord[]> {
    const text = await this.request<string>("/api/labels/export");
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as LabelRecord);
  }
}
