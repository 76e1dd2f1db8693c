// Wire types of the evaluation service. Field names match the HTTP API
// (snake_case); the client re-exposes them untouched so values compare
// bit-for-bit against file reports.

export interface Category {
  id: number;
  name: string;
  isthing: 0 | 1;
}

export interface SegmentInfo {
  id: number;
  class_id: number;
  instance_id?: number | null;
  iscrowd?: number;
}

export interface ArrayPayload {
  /** [height, width] of the row-major buffer */
  shape: [number, number];
  dtype: "int32";
  /** base64 of little-endian int32 data, len = 4 * height * width */
  data_b64: string;
}

export interface PanopticArrays {
  labels: ArrayPayload;
  segments: SegmentInfo[];
}

export interface SplitRow {
  pq: number;
  sq: number;
  rq: number;
  n_classes: number;
  tp: number;
  fp: number;
  fn: number;
}

export interface ClassRow {
  class_id: number;
  name: string;
  kind: "stuff" | "thing";
  pq: number;
  sq: number;
  rq: number;
  tp: number;
  fp: number;
  fn: number;
}

export interface Report {
  all: SplitRow | null;
  stuff: SplitRow | null;
  things: SplitRow | null;
  per_class: ClassRow[];
}

export interface ScoredInstancePayload {
  class_id: number;
  score: number;
  /** row-major run lengths, first run counting zeros */
  counts: number[];
}
