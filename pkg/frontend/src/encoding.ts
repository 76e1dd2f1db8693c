import type { ArrayPayload } from "./types.js";

// Int32Array buffers are platform-endian; the wire format is little-endian.
// Node targets in practice are LE, but convert defensively if not.
const LITTLE_ENDIAN =
  new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

function toLittleEndian(data: Int32Array): Int32Array {
  if (LITTLE_ENDIAN) return data;
  const out = new Int32Array(data.length);
  const view = new DataView(out.buffer);
  for (let i = 0; i < data.length; i++) view.setInt32(4 * i, data[i], true);
  return out;
}

function fromLittleEndian(data: Int32Array): Int32Array {
  return toLittleEndian(data); // byte swap is its own inverse
}

/** Pack a row-major Int32Array raster into the wire payload. */
export function encodeLabels(
  labels: Int32Array,
  height: number,
  width: number,
): ArrayPayload {
  if (labels.length !== height * width) {
    throw new Error(
      `labels length ${labels.length} != ${height}*${width}`,
    );
  }
  const le = toLittleEndian(labels);
  const bytes = Buffer.from(le.buffer, le.byteOffset, 4 * le.length);
  return {
    shape: [height, width],
    dtype: "int32",
    data_b64: bytes.toString("base64"),
  };
}

/** Unpack a wire payload into a row-major Int32Array raster. */
export function decodeLabels(payload: ArrayPayload): {
  data: Int32Array;
  height: number;
  width: number;
} {
  const [height, width] = payload.shape;
  const bytes = Buffer.from(payload.data_b64, "base64");
  if (bytes.length !== 4 * height * width) {
    throw new Error(
      `payload holds ${bytes.length} bytes, expected ${4 * height * width}`,
    );
  }
  const aligned = new Int32Array(
    bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.length),
  );
  return { data: fromLittleEndian(aligned), height, width };
}

/** Row-major run lengths of a binary mask, first run counting zeros. */
export function rleEncode(mask: Uint8Array): number[] {
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (const px of mask) {
    const bit = px ? 1 : 0;
    if (bit === value) {
      run++;
    } else {
      counts.push(run);
      value = bit;
      run = 1;
    }
  }
  counts.push(run);
  return counts;
}

/** Inverse of rleEncode; throws when the runs do not tile width*height. */
export function rleDecode(
  counts: number[],
  width: number,
  height: number,
): Uint8Array {
  const total = width * height;
  const mask = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of counts) {
    if (run < 0) throw new Error("negative run length");
    if (value) mask.fill(1, pos, pos + run);
    pos += run;
    value = 1 - value;
  }
  if (pos !== total) {
    throw new Error(`run lengths sum to ${pos}, expected ${total}`);
  }
  return mask;
}
