import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { createInterface, Interface } from "node:readline";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { makePng } from "./helpers.js";

const WORKER = join(__dirname, "..", "dist", "worker.js");

class WorkerHarness {
  proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private queue: string[] = [];
  private waiters: Array<(line: string) => void> = [];

  constructor(backend = "grid") {
    this.proc = spawn(process.execPath, [WORKER, "--backend", backend], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => {
      const waiter = this.waiters.shift();
      if (waiter) waiter(line);
      else this.queue.push(line);
    });
  }

  send(raw: string): void {
    this.proc.stdin.write(raw + "\n");
  }

  async next(timeoutMs = 5000): Promise<any> {
    const line =
      this.queue.shift() ??
      (await new Promise<string>((resolve, reject) => {
        const timer = setTimeout(() => reject(new Error("timed out waiting for line")), timeoutMs);
        this.waiters.push((l) => {
          clearTimeout(timer);
          resolve(l);
        });
      }));
    return JSON.parse(line);
  }

  close(): void {
    this.proc.stdin.end();
    this.proc.kill();
  }
}

describe("worker protocol", () => {
  let harness: WorkerHarness;
  let img1: string;
  let img2: string;

  beforeEach(() => {
    const dir = mkdtempSync(join(tmpdir(), "covis-worker-"));
    img1 = join(dir, "a.png");
    img2 = join(dir, "b.png");
    writeFileSync(img1, makePng(320, 240));
    writeFileSync(img2, makePng(320, 240));
    harness = new WorkerHarness();
  });

  afterEach(() => {
    harness.close();
  });

  it("emits the ready handshake first", async () => {
    const hello = await harness.next();
    expect(hello).toEqual({ ready: true, name: "grid" });
  });

  it("answers a match request with equal-length arrays and the same id", async () => {
    await harness.next(); // handshake
    harness.send(
      JSON.stringify({ id: 7, op: "match", image1: img1, image2: img2, longest_dim: 256 })
    );
    const resp = await harness.next();
    expect(resp.id).toBe(7);
    expect(resp.kp1.length).toBeGreaterThan(0);
    expect(resp.kp1.length).toBe(resp.kp2.length);
    expect(resp.kp1.length).toBe(resp.conf.length);
  });

  it("ids stay bijective across many requests", async () => {
    await harness.next();
    for (const id of [1, 2, 3, 4, 5]) {
      harness.send(
        JSON.stringify({ id, op: "match", image1: img1, image2: img2, longest_dim: 128 })
      );
    }
    const ids = [];
    for (let i = 0; i < 5; i++) ids.push((await harness.next()).id);
    expect(ids).toEqual([1, 2, 3, 4, 5]);
  });

  it("answers malformed requests with an error and keeps serving", async () => {
    await harness.next();
    harness.send("not json at all");
    const err1 = await harness.next();
    expect(err1.id).toBe(-1);
    expect(typeof err1.error).toBe("string");

    harness.send(JSON.stringify({ id: 9, op: "transmogrify" }));
    const err2 = await harness.next();
    expect(err2.id).toBe(9);
    expect(err2.error).toMatch(/malformed/);

    harness.send(
      JSON.stringify({ id: 10, op: "match", image1: img1, image2: img2, longest_dim: 256 })
    );
    const ok = await harness.next();
    expect(ok.id).toBe(10);
    expect(ok.kp1.length).toBeGreaterThan(0);
  });

  it("reports unreadable images as error responses, not crashes", async () => {
    await harness.next();
    harness.send(
      JSON.stringify({ id: 3, op: "match", image1: "/missing.png", image2: img2, longest_dim: 256 })
    );
    const resp = await harness.next();
    expect(resp.id).toBe(3);
    expect(typeof resp.error).toBe("string");
    harness.send(
      JSON.stringify({ id: 4, op: "match", image1: img1, image2: img2, longest_dim: 256 })
    );
    expect((await harness.next()).id).toBe(4);
  });

  it("writes nothing but protocol lines to stdout", async () => {
    await harness.next();
    harness.send("garbage");
    await harness.next();
    harness.send(
      JSON.stringify({ id: 1, op: "match", image1: img1, image2: img2, longest_dim: 128 })
    );
    const resp = await harness.next();
    // Every stdout line so far parsed as JSON or this test would have
    // thrown inside next(); spot-check the last is a proper response.
    expect(resp.id).toBe(1);
  });
});
