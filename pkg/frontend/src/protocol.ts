/**
 * Wire protocol types for the matcher worker.
 *
 * One JSON object per line over stdin/stdout. The worker emits a ready
 * handshake on startup, then answers each request line with exactly one
 * response line carrying the same id. Keypoint coordinates are in each
 * image's resized frame (longest side = longest_dim).
 */

export interface MatchRequest {
  id: number;
  op: "match";
  image1: string;
  image2: string;
  longest_dim: number;
}

export interface MatchResponse {
  id: number;
  kp1: Array<[number, number]>;
  kp2: Array<[number, number]>;
  conf: number[];
}

export interface ErrorResponse {
  id: number;
  error: string;
}

export interface ReadyHandshake {
  ready: true;
  name: string;
}

export type Response = MatchResponse | ErrorResponse;

export function isMatchRequest(value: unknown): value is MatchRequest {
  if (typeof value !== "object" || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    typeof v.id === "number" &&
    v.op === "match" &&
    typeof v.image1 === "string" &&
    typeof v.image2 === "string" &&
    typeof v.longest_dim === "number" &&
    Number.isFinite(v.longest_dim) &&
    v.longest_dim >= 1
  );
}
