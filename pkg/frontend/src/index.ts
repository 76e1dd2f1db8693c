export { PanopticClient, ServiceError } from "./client.js";
export {
  decodeLabels,
  encodeLabels,
  rleDecode,
  rleEncode,
} from "./encoding.js";
export type {
  ArrayPayload,
  Category,
  ClassRow,
  PanopticArrays,
  Report,
  ScoredInstancePayload,
  SegmentInfo,
  SplitRow,
} from "./types.js";
