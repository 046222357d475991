/** HTTP server implementing the denoiser/scorer wire protocol.
 *
 * Guidance is applied here, around the mounted backbone, so a client never
 * sees unconditional estimates: eps = eps_u + g * (eps_c - eps_u), with
 * g = 1 returning the conditional output untouched. Responses are canonical
 * JSON (sorted keys, compact), matching the shared byte-level fixtures.
 * Node's single-threaded loop serializes backbone calls; concurrent
 * requests simply queue.
 */

import http from "node:http";

import { Backbone, EchoBackbone, Shape } from "./backbone.js";
import { canonicalJson, decodeF32, encodeF32 } from "./codec.js";
import { EMBED_DIM, IMAGE_SIDE, signEmbedding } from "./embed.js";
import { linearBeta, validateAlphas } from "./schedule.js";

export interface ServerConfig {
  model: string;
  resolution: Shape;
  alphasCumprod: number[];
  backbone: Backbone;
  device?: string;
  halfPrecision?: boolean;
}

/** Profile serving the shared protocol fixtures (tiny schedule, echo model). */
export function fixtureConfig(): ServerConfig {
  return {
    model: "reference-shim/echo",
    resolution: [1, 2, 2],
    alphasCumprod: [0.99, 0.9, 0.75, 0.5, 0.3, 0.15, 0.05, 0.01],
    backbone: new EchoBackbone(),
  };
}

export function defaultConfig(backbone: Backbone, T = 1000): ServerConfig {
  return {
    model: `reference-shim/${backbone.name}`,
    resolution: [3, 64, 64],
    alphasCumprod: linearBeta(T),
    backbone,
  };
}

class BadRequest extends Error {}

function requireInt(value: unknown, what: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new BadRequest(`${what} must be an integer, got ${JSON.stringify(value)}`);
  }
  return value;
}

function requireTensor(
  body: Record<string, unknown>,
  field: string,
  expected: Shape,
): Float64Array {
  const shape = body.shape;
  if (!Array.isArray(shape) || shape.length !== 3 || !shape.every(Number.isInteger)) {
    throw new BadRequest(`shape must be [C, H, W], got ${JSON.stringify(shape)}`);
  }
  if (body.dtype !== "f32le") {
    throw new BadRequest(`dtype must be "f32le", got ${JSON.stringify(body.dtype)}`);
  }
  const [c, h, w] = shape as number[];
  if (c !== expected[0] || h !== expected[1] || w !== expected[2]) {
    throw new BadRequest(`shape [${shape}] does not match served [${expected}]`);
  }
  const payload = body[field];
  if (typeof payload !== "string") {
    throw new BadRequest(`missing base64 tensor field '${field}'`);
  }
  try {
    return decodeF32(payload, c * h * w);
  } catch (err) {
    throw new BadRequest((err as Error).message);
  }
}

function handlePredict(config: ServerConfig, body: Record<string, unknown>): unknown {
  const x = requireTensor(body, "x_t", config.resolution);
  const t = requireInt(body.t, "t");
  if (t < 0 || t > config.alphasCumprod.length) {
    throw new BadRequest(`t = ${t} outside the served schedule 0..${config.alphasCumprod.length}`);
  }
  const conditions = body.conditions;
  if (!Array.isArray(conditions) || conditions.length === 0) {
    throw new BadRequest("conditions must be a non-empty list");
  }
  const epsilons: string[] = [];
  for (const cond of conditions) {
    if (typeof cond !== "object" || cond === null || typeof cond.prompt !== "string") {
      throw new BadRequest(`each condition needs a string prompt, got ${JSON.stringify(cond)}`);
    }
    const guidance = cond.guidance === undefined ? 1.0 : cond.guidance;
    if (typeof guidance !== "number" || !(guidance >= 0)) {
      throw new BadRequest(`guidance must be a number >= 0, got ${JSON.stringify(cond.guidance)}`);
    }
    const conditional = config.backbone.predict(x, config.resolution, t, cond.prompt);
    let eps = conditional;
    if (guidance !== 1.0) {
      const unconditional = config.backbone.predict(x, config.resolution, t, null);
      eps = new Float64Array(x.length);
      for (let i = 0; i < x.length; i++) {
        eps[i] = unconditional[i] + guidance * (conditional[i] - unconditional[i]);
      }
    }
    epsilons.push(encodeF32(eps));
  }
  return { epsilons };
}

function handleEmbedImage(config: ServerConfig, body: Record<string, unknown>): unknown {
  const shape = body.shape;
  if (!Array.isArray(shape) || shape.length !== 3 || !shape.every(Number.isInteger)) {
    throw new BadRequest(`shape must be [C, H, W], got ${JSON.stringify(shape)}`);
  }
  const [c, h, w] = shape as number[];
  if (h !== IMAGE_SIDE || w !== IMAGE_SIDE) {
    throw new BadRequest(`image embedding expects ${IMAGE_SIDE}x${IMAGE_SIDE} input, got ${h}x${w}`);
  }
  if (body.dtype !== "f32le") {
    throw new BadRequest(`dtype must be "f32le", got ${JSON.stringify(body.dtype)}`);
  }
  if (typeof body.image !== "string") {
    throw new BadRequest("missing base64 tensor field 'image'");
  }
  const raw = Buffer.from(body.image, "base64");
  if (raw.length !== c * h * w * 4) {
    throw new BadRequest(`tensor payload holds ${raw.length} bytes, expected ${c * h * w * 4}`);
  }
  return { dim: EMBED_DIM, embedding: signEmbedding(raw) };
}

function handleEmbedText(body: Record<string, unknown>): unknown {
  if (typeof body.text !== "string") {
    throw new BadRequest("missing string field 'text'");
  }
  return { dim: EMBED_DIM, embedding: signEmbedding(Buffer.from(body.text, "utf8")) };
}

function readBody(req: http.IncomingMessage): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => resolve(Buffer.concat(chunks)));
    req.on("error", reject);
  });
}

export function createServer(config: ServerConfig): http.Server {
  validateAlphas(config.alphasCumprod);

  const send = (res: http.ServerResponse, code: number, payload: unknown) => {
    const body = Buffer.from(canonicalJson(payload), "utf8");
    res.writeHead(code, {
      "Content-Type": "application/json",
      "Content-Length": body.length,
    });
    res.end(body);
  };

  return http.createServer(async (req, res) => {
    try {
      if (req.method === "GET" && req.url === "/v1/info") {
        send(res, 200, {
          T: config.alphasCumprod.length,
          alphas_cumprod: config.alphasCumprod,
          resolution: config.resolution,
          model: config.model,
        });
        return;
      }
      if (req.method === "POST") {
        let body: Record<string, unknown>;
        try {
          body = JSON.parse((await readBody(req)).toString("utf8"));
        } catch (err) {
          throw new BadRequest(`request body is not valid JSON: ${(err as Error).message}`);
        }
        if (req.url === "/v1/predict_noise") {
          send(res, 200, handlePredict(config, body));
          return;
        }
        if (req.url === "/v1/embed_image") {
          send(res, 200, handleEmbedImage(config, body));
          return;
        }
        if (req.url === "/v1/embed_text") {
          send(res, 200, handleEmbedText(body));
          return;
        }
      }
      send(res, 404, { error: `no such route ${req.method} ${req.url}` });
    } catch (err) {
      if (err instanceof BadRequest) {
        send(res, 400, { error: err.message });
      } else {
        send(res, 500, { error: `internal error: ${(err as Error).message}` });
      }
    }
  });
}
