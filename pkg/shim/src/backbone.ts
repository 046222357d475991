/** Noise-prediction backbones behind the server.
 *
 * A backbone computes one estimate for one conditioning; `prompt === null`
 * asks for the unconditional estimate. Guidance never reaches a backbone:
 * the server combines conditional and unconditional outputs itself. A real
 * pretrained model plugs in by implementing this interface; the two built-in
 * backbones are deterministic stand-ins for protocol and pipeline tests.
 */

import { createHash } from "node:crypto";

export type Shape = [number, number, number];

export interface Backbone {
  readonly name: string;
  predict(x: Float64Array, shape: Shape, t: number, prompt: string | null): Float64Array;
}

/** Returns the input unchanged; conditional and unconditional agree. */
export class EchoBackbone implements Backbone {
  readonly name = "echo";

  predict(x: Float64Array): Float64Array {
    return Float64Array.from(x);
  }
}

/** Deterministic prompt-dependent estimate, distinct from its unconditional one.
 *
 * eps = 0.9 * x + 0.2 * pattern(prompt), with the pattern derived from the
 * prompt's sha256 bytes and the unconditional pattern all zeros.
 */
export class ToyBackbone implements Backbone {
  readonly name = "toy";

  predict(x: Float64Array, _shape: Shape, _t: number, prompt: string | null): Float64Array {
    const out = new Float64Array(x.length);
    const pattern = prompt === null ? null : createHash("sha256").update(prompt, "utf8").digest();
    for (let i = 0; i < x.length; i++) {
      const p = pattern === null ? 0 : pattern[i % pattern.length] / 127.5 - 1.0;
      out[i] = 0.9 * x[i] + 0.2 * p;
    }
    return out;
  }
}

export function backboneByName(name: string): Backbone {
  if (name === "echo") return new EchoBackbone();
  if (name === "toy") return new ToyBackbone();
  throw new Error(`unknown backbone '${name}' (expected echo or toy)`);
}
