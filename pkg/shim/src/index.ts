/** CLI entry: start the reference server.
 *
 * Usage: node dist/index.js [--port 8000] [--host 127.0.0.1]
 *        [--backbone echo|toy] [--steps 1000] [--fixture]
 */

import { backboneByName } from "./backbone.js";
import { createServer, defaultConfig, fixtureConfig } from "./server.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) continue;
    const key = arg.slice(2);
    if (key === "fixture") {
      out.set(key, "true");
    } else {
      out.set(key, argv[++i]);
    }
  }
  return out;
}

const args = parseArgs(process.argv.slice(2));
const port = Number(args.get("port") ?? 8000);
const host = args.get("host") ?? "127.0.0.1";
const config = args.has("fixture")
  ? fixtureConfig()
  : defaultConfig(backboneByName(args.get("backbone") ?? "echo"), Number(args.get("steps") ?? 1000));

const server = createServer(config);
server.listen(port, host, () => {
  console.log(`serving ${config.model} (T=${config.alphasCumprod.length}) on http://${host}:${port}`);
});
