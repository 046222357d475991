/** Tensor and JSON encoding for the wire protocol. */

/** Encode float64 values as base64 of little-endian float32, row-major. */
export function encodeF32(values: ArrayLike<number>): string {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], i * 4);
  }
  return buf.toString("base64");
}

/** Decode a base64 float32 payload; the byte length must match `count` values. */
export function decodeF32(payload: string, count: number): Float64Array {
  const raw = Buffer.from(payload, "base64");
  if (raw.length !== count * 4) {
    throw new Error(
      `tensor payload holds ${raw.length} bytes, expected ${count * 4} for ${count} values`,
    );
  }
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = raw.readFloatLE(i * 4);
  }
  return out;
}

function sortValue(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortValue);
  }
  if (value !== null && typeof value === "object") {
    const sorted: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      sorted[key] = sortValue((value as Record<string, unknown>)[key]);
    }
    return sorted;
  }
  return value;
}

/** Canonical JSON: keys sorted recursively, compact separators. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortValue(value));
}
