/**
 * Matcher backends. A backend turns two image files plus a target
 * resolution into matched keypoints in the resized frames.
 *
 * The bundled "grid" backend is a deterministic grid-of-keypoints identity
 * matcher for protocol and integration testing: it must stay in lock-step
 * with the host's in-process grid matcher (same resize rounding, same
 * lattice). Neural or otherwise heavyweight matchers plug in by
 * implementing MatcherBackend and registering in BACKENDS.
 */

import { readPngDims } from "./png.js";

export interface MatchResult {
  kp1: Array<[number, number]>;
  kp2: Array<[number, number]>;
  conf: number[];
}

export interface MatcherBackend {
  name: string;
  match(image1: string, image2: string, longestDim: number): Promise<MatchResult>;
}

export const GRID_STEP = 16;

/**
 * Integer dimensions after resizing so the longest side equals longestDim;
 * the shorter side rounds half-up, minimum 1. Must match the host exactly.
 */
export function resizedDims(
  width: number,
  height: number,
  longestDim: number
): [number, number] {
  if (longestDim < 1) throw new Error(`longest_dim must be >= 1, got ${longestDim}`);
  const scale = longestDim / Math.max(width, height);
  if (width >= height) {
    return [longestDim, Math.max(1, Math.floor(height * scale + 0.5))];
  }
  return [Math.max(1, Math.floor(width * scale + 0.5)), longestDim];
}

/** Half-cell grid lattice over the intersection of both resized frames. */
export function gridMatches(
  width1: number,
  height1: number,
  width2: number,
  height2: number,
  longestDim: number
): MatchResult {
  const [rw1, rh1] = resizedDims(width1, height1, longestDim);
  const [rw2, rh2] = resizedDims(width2, height2, longestDim);
  const rw = Math.min(rw1, rw2);
  const rh = Math.min(rh1, rh2);
  const nx = Math.floor(rw / GRID_STEP);
  const ny = Math.floor(rh / GRID_STEP);
  const kp: Array<[number, number]> = [];
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      kp.push([GRID_STEP * (i + 0.5), GRID_STEP * (j + 0.5)]);
    }
  }
  return {
    kp1: kp,
    kp2: kp.map(([x, y]) => [x, y] as [number, number]),
    conf: kp.map(() => 1.0),
  };
}

const gridBackend: MatcherBackend = {
  name: "grid",
  async match(image1, image2, longestDim) {
    const dims1 = await readPngDims(image1);
    const dims2 = await readPngDims(image2);
    return gridMatches(dims1.width, dims1.height, dims2.width, dims2.height, longestDim);
  },
};

export const BACKENDS: Record<string, MatcherBackend> = {
  grid: gridBackend,
};
