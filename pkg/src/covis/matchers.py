"""Matcher backends and the external-worker wire protocol client.

Three in-process backends ship with the package:

* ``harris`` (the default builtin): Harris corners described by
  mean-normalized intensity patches, scored with normalized cross
  correlation, filtered by mutual nearest neighbour + ratio test. Good
  enough for synthetic scenes, which is all it has to be: real models plug
  in over the wire protocol.
* ``grid``: a trivial deterministic grid-of-keypoints identity matcher,
  used to validate the wire protocol against out-of-process workers.
* ``synthetic``: resolved by the pipeline against scene ground truth (see
  ``synthetic.simulate_matches``).

External matchers are one-request-one-response workers over line-delimited
JSON on their standard streams (or a local TCP socket):

    -> {"id": 1, "op": "match", "image1": "/a.png", "image2": "/b.png",
        "longest_dim": 840}
    <- {"id": 1, "kp1": [[x, y], ...], "kp2": [[x, y], ...], "conf": [...]}

with kp coordinates in each image's resized frame (longest side =
longest_dim). Workers emit {"ready": true, "name": ...} on startup and
answer malformed input with {"id": ..., "error": "..."}.
"""

from __future__ import annotations

import json
import logging
import shlex
import socket
import subprocess
import threading
import queue
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .core import resized_dims
from .errors import MatcherUnavailableError, MatchTimeoutError, ProtocolError
from .imageops import resize_longest

logger = logging.getLogger(__name__)

HARRIS_K = 0.06
PATCH_RADIUS = 5  # 11x11 descriptor patches
RATIO_TEST = 0.9
GRID_STEP = 16


class MatcherKind(Enum):
    BUILTIN = "builtin"
    EXTERNAL = "external"


@dataclass(frozen=True)
class MatcherSpec:
    """One matcher slot of a pipeline stage."""

    kind: MatcherKind
    name: str
    resolution: int
    endpoint: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution < 64:
            raise ValueError(f"resolution must be >= 64, got {self.resolution}")
        if self.kind is MatcherKind.EXTERNAL and not self.endpoint:
            raise ValueError("external matchers need an endpoint (command line or tcp:host:port)")


@dataclass(eq=False)
class RawMatches:
    """Matcher output in the matcher's working frame."""

    kp1: np.ndarray
    kp2: np.ndarray
    conf: np.ndarray

    def __post_init__(self):
        self.kp1 = np.asarray(self.kp1, dtype=np.float64).reshape(-1, 2)
        self.kp2 = np.asarray(self.kp2, dtype=np.float64).reshape(-1, 2)
        self.conf = np.asarray(self.conf, dtype=np.float64).reshape(-1)
        if not (len(self.kp1) == len(self.kp2) == len(self.conf)):
            raise ValueError("kp1, kp2 and conf must have equal lengths")

    def __len__(self) -> int:
        return len(self.kp1)


# ---------------------------------------------------------------------------
# Builtin Harris + NCC matcher
# ---------------------------------------------------------------------------


def detect_corners(image: np.ndarray, max_kp: int) -> tuple[np.ndarray, np.ndarray]:
    """Harris corners with non-max suppression and sub-pixel refinement.

    Returns (keypoints (n, 2), responses (n,)) sorted by response
    descending, at most max_kp of them. The response is det(M) - k tr(M)^2
    of the locally averaged gradient structure tensor. Suppression is a
    3x3 local-max test followed by a greedy minimum-separation pass in
    response order (ties broken by position), so periodic patterns with
    exactly equal responses cannot yield duplicate detections.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 16:
        raise ValueError(f"image must be a 2-D grid of at least 16x16, got {img.shape}")

    smoothed = ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")
    gy, gx = np.gradient(smoothed)
    ixx = ndimage.gaussian_filter(gx * gx, sigma=1.5, mode="nearest")
    iyy = ndimage.gaussian_filter(gy * gy, sigma=1.5, mode="nearest")
    ixy = ndimage.gaussian_filter(gx * gy, sigma=1.5, mode="nearest")
    response = ixx * iyy - ixy * ixy - HARRIS_K * (ixx + iyy) ** 2

    peak = response.max()
    if peak <= 0.0:
        return np.empty((0, 2)), np.empty(0)
    is_max = response == ndimage.maximum_filter(response, size=3, mode="nearest")
    strong = is_max & (response > 1e-6 * peak)
    # Keep a border so descriptor patches and the quadratic fit stay inside.
    b = PATCH_RADIUS + 1
    strong[:b, :] = False
    strong[-b:, :] = False
    strong[:, :b] = False
    strong[:, -b:] = False

    ys, xs = np.nonzero(strong)
    if len(xs) == 0:
        return np.empty((0, 2)), np.empty(0)
    resp = response[ys, xs]
    order = np.lexsort((xs, ys, -resp))
    ys, xs, resp = ys[order], xs[order], resp[order]
    keep = _greedy_nms(xs, ys, max_kp, min_dist=2.0)
    ys, xs, resp = ys[keep], xs[keep], resp[keep]

    # Quadratic (parabola) refinement per axis on the response surface.
    left = response[ys, xs - 1]
    right = response[ys, xs + 1]
    up = response[ys - 1, xs]
    down = response[ys + 1, xs]
    center = response[ys, xs]
    dx = _parabola_offset(left, center, right)
    dy = _parabola_offset(up, center, down)
    pts = np.stack([xs + dx, ys + dy], axis=1)
    return pts, resp


def _greedy_nms(xs: np.ndarray, ys: np.ndarray, max_kp: int, min_dist: float) -> list[int]:
    """Indices of points (pre-sorted by priority) kept by greedy separation."""
    cell = max(min_dist, 1.0)
    buckets: dict[tuple[int, int], list[int]] = {}
    keep: list[int] = []
    d2 = min_dist * min_dist
    for i in range(len(xs)):
        cx, cy = int(xs[i] // cell), int(ys[i] // cell)
        clash = False
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in buckets.get((cx + dx, cy + dy), ()):
                    if (xs[i] - xs[j]) ** 2 + (ys[i] - ys[j]) ** 2 < d2:
                        clash = True
                        break
                if clash:
                    break
            if clash:
                break
        if not clash:
            keep.append(i)
            buckets.setdefault((cx, cy), []).append(i)
            if len(keep) >= max_kp:
                break
    return keep


def _parabola_offset(lo: np.ndarray, mid: np.ndarray, hi: np.ndarray) -> np.ndarray:
    denom = lo - 2.0 * mid + hi
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (lo - hi) / denom
    off[~np.isfinite(off)] = 0.0
    return np.clip(off, -0.5, 0.5)


def _describe(img: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Mean-normalized, unit-length 11x11 patches around integer keypoints."""
    r = PATCH_RADIUS
    n = len(pts)
    desc = np.empty((n, (2 * r + 1) ** 2))
    xi = np.round(pts[:, 0]).astype(np.int64)
    yi = np.round(pts[:, 1]).astype(np.int64)
    for i in range(n):
        patch = img[yi[i] - r : yi[i] + r + 1, xi[i] - r : xi[i] + r + 1].ravel()
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        desc[i] = patch / norm if norm > 1e-12 else patch
    return desc


def match_images(img1: np.ndarray, img2: np.ndarray, max_kp: int = 512) -> RawMatches:
    """Builtin matcher: Harris + NCC patches, mutual NN, ratio test.

    Confidence is the NCC score mapped from [-1, 1] to [0, 1]. Symmetric:
    swapping the images yields the pair-reversed match list.
    """
    kp1, _ = detect_corners(img1, max_kp)
    kp2, _ = detect_corners(img2, max_kp)
    if len(kp1) == 0 or len(kp2) == 0:
        return RawMatches(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))

    d1 = _describe(img1, kp1)
    d2 = _describe(img2, kp2)
    scores = d1 @ d2.T  # NCC of normalized patches

    best12, ratio1 = _best_and_ratio(scores)
    best21, ratio2 = _best_and_ratio(scores.T)
    idx1 = np.arange(len(kp1))
    mutual = best21[best12] == idx1
    keep = mutual & (ratio1 < RATIO_TEST) & (ratio2[best12] < RATIO_TEST)

    i1 = idx1[keep]
    i2 = best12[keep]
    ncc = scores[i1, i2]
    conf = np.clip(0.5 * (ncc + 1.0), 0.0, 1.0)
    return RawMatches(kp1[i1], kp2[i2], conf)


def _best_and_ratio(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: nearest-neighbour column and Lowe ratio of NCC distances.

    Distances are d = sqrt(2 - 2 ncc); a second-best tied with the best
    (identical patches elsewhere) makes the ratio 1, i.e. ambiguous and
    rejected.
    """
    best = np.argmax(scores, axis=1)
    rows = np.arange(scores.shape[0])
    first = scores[rows, best]
    masked = scores.copy()
    masked[rows, best] = -np.inf
    second = masked.max(axis=1)
    d1 = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * first))
    d2 = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * second))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2 > 1e-9, d1 / d2, np.where(d1 <= 1e-9, 1.0, np.inf))
    return best, ratio


def grid_matches(width1: int, height1: int, width2: int, height2: int, longest_dim: int) -> RawMatches:
    """Deterministic grid-of-keypoints identity matches in the resized frame.

    Keypoints sit at half-cell centers of a GRID_STEP lattice over the
    intersection of both resized frames; kp2 equals kp1 with confidence 1.
    This is the reference backend for protocol equivalence tests and must
    stay in lock-step with the bundled worker adapters.
    """
    rw1, rh1 = resized_dims(width1, height1, longest_dim)
    rw2, rh2 = resized_dims(width2, height2, longest_dim)
    rw, rh = min(rw1, rw2), min(rh1, rh2)
    nx, ny = rw // GRID_STEP, rh // GRID_STEP
    if nx < 1 or ny < 1:
        return RawMatches(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))
    xs = GRID_STEP * (np.arange(nx) + 0.5)
    ys = GRID_STEP * (np.arange(ny) + 0.5)
    gx, gy = np.meshgrid(xs, ys)
    kp = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return RawMatches(kp, kp.copy(), np.ones(len(kp)))


def run_builtin(
    name: str, img1: np.ndarray, img2: np.ndarray, resolution: int, options: dict | None = None
) -> RawMatches:
    """Run a builtin matcher on full-resolution grayscale images.

    Images are resized here so the longest side equals ``resolution``;
    the returned keypoints are in those resized frames.
    """
    options = options or {}
    if name in ("harris", "builtin"):
        r1, _ = resize_longest(img1, resolution)
        r2, _ = resize_longest(img2, resolution)
        max_kp = int(options.get("max_kp", 512))
        return match_images(r1, r2, max_kp=max_kp)
    if name == "grid":
        h1, w1 = img1.shape
        h2, w2 = img2.shape
        return grid_matches(w1, h1, w2, h2, resolution)
    raise ValueError(f"unknown builtin matcher {name!r}")


# ---------------------------------------------------------------------------
# External matcher client
# ---------------------------------------------------------------------------


class _LineTransport:
    """Request/response line IO over a subprocess or TCP socket."""

    def __init__(self, endpoint: str, timeout: float):
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        self._queue: "queue.Queue[str | None]" = queue.Queue()
        try:
            if endpoint.startswith("tcp:"):
                _, host, port = endpoint.split(":")
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
                reader = self._sock.makefile("r", encoding="utf-8")
                self._writer = self._sock.makefile("w", encoding="utf-8")
            else:
                self._proc = subprocess.Popen(
                    shlex.split(endpoint),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    text=True,
                    bufsize=1,
                )
                reader = self._proc.stdout
                self._writer = self._proc.stdin
        except (OSError, ValueError) as exc:
            raise MatcherUnavailableError(f"cannot reach matcher endpoint {endpoint!r}: {exc}")

        self._thread = threading.Thread(target=self._pump, args=(reader,), daemon=True)
        self._thread.start()

    def _pump(self, reader):
        try:
            for line in reader:
                self._queue.put(line)
        except (OSError, ValueError):
            pass
        self._queue.put(None)

    def send_line(self, line: str) -> None:
        try:
            self._writer.write(line + "\n")
            self._writer.flush()
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise MatcherUnavailableError(f"matcher worker pipe closed: {exc}")

    def recv_line(self, timeout: float | None = None) -> str:
        try:
            line = self._queue.get(timeout=timeout or self.timeout)
        except queue.Empty:
            raise MatchTimeoutError(f"no response within {timeout or self.timeout} s")
        if line is None:
            raise MatcherUnavailableError("matcher worker closed its output stream")
        return line

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            self._sock.close()


def external_match(
    spec: MatcherSpec,
    img1_path: str,
    img2_path: str,
    resolution: int | None = None,
    timeout: float = 60.0,
) -> RawMatches:
    """One-shot request against an external worker (transient connection).

    Long-running callers (the pipeline) hold an ExternalMatcherClient per
    worker instead of paying the spawn cost per pair.
    """
    with ExternalMatcherClient(spec, timeout=timeout) as client:
        return client.match(img1_path, img2_path, resolution or spec.resolution)


class ExternalMatcherClient:
    """Client for one external matcher worker.

    Strict request/response: one outstanding request per connection. All
    failures surface as the package's error types so callers can skip a
    pair and keep a benchmark run alive.
    """

    def __init__(self, spec: MatcherSpec, timeout: float = 60.0):
        if spec.kind is not MatcherKind.EXTERNAL or not spec.endpoint:
            raise ValueError("ExternalMatcherClient needs an external MatcherSpec")
        self.spec = spec
        self.timeout = timeout
        self._transport = _LineTransport(spec.endpoint, timeout)
        self._next_id = 0
        self.worker_name = self._handshake()

    def _handshake(self) -> str:
        # Startup (spawn + imports) is budgeted separately from requests.
        line = self._transport.recv_line(timeout=max(self.timeout, 15.0))
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"invalid handshake line: {line!r}")
        if not msg.get("ready"):
            raise ProtocolError(f"worker did not signal readiness: {msg}")
        return str(msg.get("name", self.spec.name))

    def match(self, image1_path: str, image2_path: str, longest_dim: int) -> RawMatches:
        self._next_id += 1
        req_id = self._next_id
        request = {
            "id": req_id,
            "op": "match",
            "image1": str(image1_path),
            "image2": str(image2_path),
            "longest_dim": int(longest_dim),
        }
        self._transport.send_line(json.dumps(request))
        line = self._transport.recv_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"response is not valid JSON: {line[:200]!r}")
        if msg.get("id") != req_id:
            raise ProtocolError(f"response id {msg.get('id')} does not match request id {req_id}")
        if "error" in msg:
            raise ProtocolError(f"worker error: {msg['error']}")
        try:
            kp1 = np.asarray(msg["kp1"], dtype=np.float64).reshape(-1, 2)
            kp2 = np.asarray(msg["kp2"], dtype=np.float64).reshape(-1, 2)
            conf = np.asarray(msg["conf"], dtype=np.float64).reshape(-1)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed match arrays: {exc}")
        if not (len(kp1) == len(kp2) == len(conf)):
            raise ProtocolError(
                f"array lengths disagree: kp1={len(kp1)} kp2={len(kp2)} conf={len(conf)}"
            )
        if len(conf) and (conf.min() < 0.0 or conf.max() > 1.0):
            raise ProtocolError("confidences outside [0, 1]")
        if len(kp1) and not (np.isfinite(kp1).all() and np.isfinite(kp2).all()):
            raise ProtocolError("non-finite keypoint coordinates")
        return RawMatches(kp1, kp2, conf)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
