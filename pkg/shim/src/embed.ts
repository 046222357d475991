/** Reference embedder: deterministic, exactly unit-norm sign patterns.
 *
 * Stand-in for a real image/text encoder. The first byte of a sha256 over
 * the raw payload selects the signs of a +-0.5 vector, so identical inputs
 * embed identically and every vector has norm exactly 1.
 */

import { createHash } from "node:crypto";

export const EMBED_DIM = 4;

/** Input side length the image route accepts (the scorer's preprocessing size). */
export const IMAGE_SIDE = 224;

export function signEmbedding(raw: Buffer, dim = EMBED_DIM): number[] {
  const byte = createHash("sha256").update(raw).digest()[0];
  const out: number[] = [];
  for (let i = 0; i < dim; i++) {
    out.push(byte & (1 << (7 - i)) ? 0.5 : -0.5);
  }
  return out;
}
