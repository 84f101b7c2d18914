import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { BACKENDS, GRID_STEP, gridMatches, resizedDims } from "../src/backends.js";
import { parsePngDims } from "../src/png.js";
import { makePng } from "./helpers.js";

describe("resizedDims", () => {
  it("keeps the aspect ratio with half-up rounding", () => {
    expect(resizedDims(1600, 1200, 800)).toEqual([800, 600]);
    expect(resizedDims(1000, 750, 840)).toEqual([840, 630]);
    expect(resizedDims(750, 1000, 840)).toEqual([630, 840]);
  });

  it("never collapses the short side below one pixel", () => {
    expect(resizedDims(4000, 16, 64)[1]).toBeGreaterThanOrEqual(1);
  });

  it("rejects a non-positive target", () => {
    expect(() => resizedDims(100, 100, 0)).toThrow();
  });
});

describe("gridMatches", () => {
  it("lays keypoints at half-cell centers", () => {
    const r = gridMatches(640, 480, 640, 480, 320);
    const [rw, rh] = resizedDims(640, 480, 320);
    expect(r.kp1.length).toBe(Math.floor(rw / GRID_STEP) * Math.floor(rh / GRID_STEP));
    expect(r.kp1[0]).toEqual([8, 8]);
    expect(r.kp2).toEqual(r.kp1);
    expect(r.conf.every((c) => c === 1)).toBe(true);
  });

  it("fits the lattice to the smaller resized frame", () => {
    const r = gridMatches(640, 480, 320, 480, 320);
    const [rw2] = resizedDims(320, 480, 320);
    for (const [x] of r.kp1) expect(x).toBeLessThanOrEqual(rw2);
  });

  it("returns no matches when a frame is tinier than one cell", () => {
    const r = gridMatches(1000, 10, 1000, 10, 100);
    expect(r.kp1.length).toBe(0);
  });
});

describe("png dims", () => {
  it("reads IHDR width and height", () => {
    const png = makePng(123, 45);
    expect(parsePngDims(png)).toEqual({ width: 123, height: 45 });
  });

  it("rejects non-PNG data", () => {
    expect(() => parsePngDims(Buffer.from("definitely not a png, just text"))).toThrow();
  });

  it("backend matches via files on disk", async () => {
    const dir = mkdtempSync(join(tmpdir(), "covis-worker-"));
    const p1 = join(dir, "a.png");
    const p2 = join(dir, "b.png");
    writeFileSync(p1, makePng(320, 240));
    writeFileSync(p2, makePng(320, 240));
    const result = await BACKENDS.grid.match(p1, p2, 256);
    const [rw, rh] = resizedDims(320, 240, 256);
    expect(result.kp1.length).toBe(Math.floor(rw / 16) * Math.floor(rh / 16));
  });
});
