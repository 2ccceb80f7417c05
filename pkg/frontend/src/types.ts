export interface TileInfo {
  id: string;
  width: number;
  height: number;
  segments: number;
}

export type Ring = [number, number][];

export interface SegmentPolygon {
  id: number;
  ring: Ring;
  holes: Ring[];
}

export interface SegmentsDoc {
  tile: string;
  width: number;
  height: number;
  polygons: SegmentPolygon[];
  adjacency: [number, number][];
}

export interface LabelRecord {
  tile: string;
  a: number;
  b: number;
  label: "positive" | "negative";
  ts: string;
  annotator: string;
}

export interface LabelSummary {
  positive: number;
  negative: number;
  total: number;
}
