/**
 * Matcher worker entry point: line-delimited JSON over stdin/stdout.
 *
 * Usage: node dist/worker.js --backend grid
 *
 * Exactly one response line per request line, ids echoed back; malformed
 * requests are answered with an error object (id -1 when unparseable) and
 * never kill the loop. Logging goes to stderr only, so stdout stays a
 * clean protocol stream.
 */

import { createInterface } from "node:readline";

import { BACKENDS, MatcherBackend } from "./backends.js";
import { isMatchRequest, Response } from "./protocol.js";

function log(message: string): void {
  process.stderr.write(`[worker] ${message}\n`);
}

function respond(obj: Response | { ready: true; name: string }): void {
  process.stdout.write(JSON.stringify(obj) + "\n");
}

function parseArgs(argv: string[]): { backend: string } {
  let backend = "grid";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--backend" && i + 1 < argv.length) {
      backend = argv[i + 1];
      i++;
    }
  }
  return { backend };
}

export function serve(backend: MatcherBackend): void {
  respond({ ready: true, name: backend.name });

  const rl = createInterface({ input: process.stdin, terminal: false });
  let pending: Promise<void> = Promise.resolve();

  rl.on("line", (line: string) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    // Serialize responses in request order even though matching is async.
    pending = pending.then(async () => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(trimmed);
      } catch {
        log(`unparseable request: ${trimmed.slice(0, 120)}`);
        respond({ id: -1, error: "request is not valid JSON" });
        return;
      }
      if (!isMatchRequest(parsed)) {
        const id =
          typeof (parsed as Record<string, unknown>)?.id === "number"
            ? ((parsed as Record<string, unknown>).id as number)
            : -1;
        respond({ id, error: "malformed request: expected {id, op:'match', image1, image2, longest_dim}" });
        return;
      }
      try {
        const result = await backend.match(parsed.image1, parsed.image2, parsed.longest_dim);
        respond({ id: parsed.id, ...result });
      } catch (err) {
        const message = err instanceof Error ? err.message : String(err);
        log(`backend error on request ${parsed.id}: ${message}`);
        respond({ id: parsed.id, error: message });
      }
    });
  });

  rl.on("close", () => {
    pending.then(() => process.exit(0));
  });
}

const isMain = process.argv[1]?.endsWith("worker.js") || process.argv[1]?.endsWith("worker.ts");
if (isMain) {
  const { backend } = parseArgs(process.argv.slice(2));
  const impl = BACKENDS[backend];
  if (!impl) {
    log(`unknown backend ${backend}; available: ${Object.keys(BACKENDS).join(", ")}`);
    process.exit(2);
  }
  serve(impl);
}
