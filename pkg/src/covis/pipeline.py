"""Two-stage matching orchestration.

Stage one runs every configured matcher on the full images; the pooled
keypoints feed the crop proposal; stage two re-matches inside the crops;
both stages' correspondences are concatenated (stage order, then declared
model order, then match index) and handed to robust estimation. Stage-two
keypoints are mapped back to the original frame the moment they arrive,
so every later consumer works in one coordinate frame.

Stage-one matches are kept in the output rather than replaced: a crop box
built from clusters can cut away small shared areas, and full-frame
coverage is worth the extra noise it carries, since rejecting that noise
is exactly what the robust estimator is for.
"""

from __future__ import annotations

import hashlib
import logging
import tempfile
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (
    CropBox,
    ImageMeta,
    MatchSet,
    Stage,
    build_match_set,
    map_points_to_original,
)
from .errors import (
    CovisError,
    DegenerateConfigurationError,
    EstimationFailedError,
    InsufficientDataError,
    PipelineError,
    StageFailedError,
)
from .geometry import CameraIntrinsics, EstimatorParams, Model3x3, ModelKind, ransac
from .imageops import resize_longest, round_rect
from .matchers import (
    ExternalMatcherClient,
    MatcherKind,
    MatcherSpec,
    RawMatches,
    grid_matches,
    match_images,
)
from .cropping import CropProposal, CropParams, propose_crops
from .synthetic import SimulatedMatcherParams, SyntheticScene, simulate_matches

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ImageInput:
    """One image as the pipeline sees it.

    ``pixels`` feeds the builtin matcher, ``path`` external workers and
    ``scene`` the simulated matcher; any subset may be present and each
    backend checks for what it needs.
    """

    meta: ImageMeta
    pixels: np.ndarray | None = None
    path: str | None = None
    scene: SyntheticScene | None = None
    intrinsics: CameraIntrinsics | None = None

    @classmethod
    def from_array(cls, image_id: str, pixels: np.ndarray, **kw) -> "ImageInput":
        h, w = pixels.shape
        return cls(meta=ImageMeta(image_id, w, h), pixels=pixels, **kw)


def scene_inputs(scene: SyntheticScene) -> tuple[ImageInput, ImageInput]:
    return (
        ImageInput(meta=scene.meta1, scene=scene, intrinsics=scene.k1),
        ImageInput(meta=scene.meta2, scene=scene, intrinsics=scene.k2),
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a two-stage run needs.

    Stage lists hold matcher specs with their target resolution baked in;
    repeating a matcher at several resolutions is the multi-resolution
    ensemble. An empty stage2 is single-stage mode.
    """

    stage1: tuple[MatcherSpec, ...]
    stage2: tuple[MatcherSpec, ...] = ()
    crop: CropParams = field(default_factory=CropParams)
    estimator: EstimatorParams = field(default_factory=EstimatorParams)
    model_kind: ModelKind = ModelKind.FUNDAMENTAL

    def __post_init__(self):
        if not self.stage1:
            raise ValueError("stage1 needs at least one matcher")


@dataclass(eq=False)
class PipelineResult:
    matches: MatchSet
    proposal: CropProposal | None
    model: Model3x3 | None
    timings_ms: dict[str, float]
    estimation_error: str | None = None
    stage1_count: int = 0
    stage2_count: int = 0


def derive_pair_seed(base_seed: int, id1: str, id2: str) -> int:
    """Stable per-pair RANSAC seed so benchmark tables reproduce exactly."""
    digest = hashlib.sha256(f"{base_seed}:{id1}|{id2}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _simulated_params(options: dict) -> SimulatedMatcherParams:
    return SimulatedMatcherParams(
        n_candidates=int(options.get("n_candidates", 200)),
        covis_bias=float(options.get("covis_bias", 0.0)),
        noise_sigma=float(options.get("noise_sigma", 0.5)),
        covis_precision=float(options.get("covis_precision", 1.0)),
    )


class TwoStagePipeline:
    """Reusable runner; holds one external-worker client per endpoint and
    thread, since the wire protocol is strictly request-response."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._clients: dict[tuple[str, int], ExternalMatcherClient] = {}
        self._lock = threading.Lock()

    # -- matcher dispatch -------------------------------------------------

    def _client(self, spec: MatcherSpec) -> ExternalMatcherClient:
        key = (spec.endpoint or "", threading.get_ident())
        with self._lock:
            client = self._clients.get(key)
            if client is None:
                client = ExternalMatcherClient(spec, timeout=float(spec.options.get("timeout", 60.0)))
                self._clients[key] = client
        return client

    def _run_matcher(
        self,
        spec: MatcherSpec,
        img1: ImageInput,
        img2: ImageInput,
        rect1: tuple[int, int, int, int],
        rect2: tuple[int, int, int, int],
        tmp_dir: str | None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns original-frame (pts1, pts2, conf) for one matcher."""
        x0a, y0a, x1a, y1a = rect1
        x0b, y0b, x1b, y1b = rect2
        cw1, ch1 = x1a - x0a, y1a - y0a
        cw2, ch2 = x1b - x0b, y1b - y0b
        scale1 = spec.resolution / max(cw1, ch1)
        scale2 = spec.resolution / max(cw2, ch2)

        if spec.kind is MatcherKind.BUILTIN and spec.name == "synthetic":
            scene = img1.scene or img2.scene
            if scene is None:
                raise PipelineError("synthetic matcher needs scene-backed image inputs")
            pts1, pts2, conf = simulate_matches(
                scene,
                CropBox(float(x0a), float(y0a), float(x1a), float(y1a)),
                CropBox(float(x0b), float(y0b), float(x1b), float(y1b)),
                spec.resolution,
                _simulated_params(spec.options),
            )
            return pts1, pts2, conf

        if spec.kind is MatcherKind.BUILTIN and spec.name == "grid":
            raw = grid_matches(cw1, ch1, cw2, ch2, spec.resolution)
        elif spec.kind is MatcherKind.BUILTIN:
            if img1.pixels is None or img2.pixels is None:
                raise PipelineError(f"builtin matcher {spec.name!r} needs pixel data")
            c1 = img1.pixels[y0a:y1a, x0a:x1a]
            c2 = img2.pixels[y0b:y1b, x0b:x1b]
            r1, _ = resize_longest(c1, spec.resolution)
            r2, _ = resize_longest(c2, spec.resolution)
            raw = match_images(r1, r2, max_kp=int(spec.options.get("max_kp", 512)))
        else:
            raw = self._run_external(spec, img1, img2, rect1, rect2, tmp_dir)

        pts1 = map_points_to_original(raw.kp1, (float(x0a), float(y0a)), scale1, img1.meta)
        pts2 = map_points_to_original(raw.kp2, (float(x0b), float(y0b)), scale2, img2.meta)
        return pts1, pts2, raw.conf

    def _run_external(
        self,
        spec: MatcherSpec,
        img1: ImageInput,
        img2: ImageInput,
        rect1: tuple[int, int, int, int],
        rect2: tuple[int, int, int, int],
        tmp_dir: str | None,
    ) -> RawMatches:
        from .imagefiles import save_grayscale

        paths = []
        for img, rect, tag in ((img1, rect1, "1"), (img2, rect2, "2")):
            x0, y0, x1, y1 = rect
            full = (x0, y0) == (0, 0) and (x1, y1) == (img.meta.width, img.meta.height)
            if full and img.path:
                paths.append(img.path)
                continue
            if img.pixels is None:
                raise PipelineError("external matcher with crops needs pixel data to write")
            if tmp_dir is None:
                raise PipelineError("no scratch directory for cropped images")
            out = Path(tmp_dir) / f"crop{tag}_{x0}_{y0}_{x1}_{y1}.png"
            if not out.exists():
                save_grayscale(img.pixels[y0:y1, x0:x1], out)
            paths.append(str(out))
        client = self._client(spec)
        return client.match(paths[0], paths[1], spec.resolution)

    # -- stages ------------------------------------------------------------

    def run_stage(
        self,
        specs: tuple[MatcherSpec, ...],
        img1: ImageInput,
        img2: ImageInput,
        crops: tuple[CropBox, CropBox] | None,
        stage: Stage,
    ) -> MatchSet:
        """Run each matcher in declared order; returns the concatenation in
        the original frame. Individual matcher failures are logged and
        skipped; only all of them failing raises."""
        if not specs:
            return MatchSet.empty(img1.meta, img2.meta)
        box1 = crops[0] if crops else CropBox.full_image(img1.meta)
        box2 = crops[1] if crops else CropBox.full_image(img2.meta)
        rect1 = round_rect(box1, img1.meta.width, img1.meta.height)
        rect2 = round_rect(box2, img2.meta.width, img2.meta.height)

        out = MatchSet.empty(img1.meta, img2.meta)
        failures = 0
        with tempfile.TemporaryDirectory(prefix="covis-stage-") as tmp_dir:
            for spec in specs:
                try:
                    pts1, pts2, conf = self._run_matcher(spec, img1, img2, rect1, rect2, tmp_dir)
                except (CovisError, ValueError, OSError) as exc:
                    failures += 1
                    logger.warning(
                        "matcher %s@%d failed on pair (%s, %s): %s",
                        spec.name,
                        spec.resolution,
                        img1.meta.id,
                        img2.meta.id,
                        exc,
                    )
                    continue
                source = f"{spec.name}@{spec.resolution}"
                out = out.concat(
                    build_match_set(pts1, pts2, conf, img1.meta, img2.meta, source, stage)
                )
        if failures == len(specs):
            raise StageFailedError(f"all {failures} matchers of stage {stage.name} failed")
        return out

    def run(self, img1: ImageInput, img2: ImageInput) -> PipelineResult:
        cfg = self.config
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        try:
            stage1 = self.run_stage(cfg.stage1, img1, img2, None, Stage.ONE)
        except StageFailedError as exc:
            raise PipelineError(f"stage one failed: {exc}") from exc
        timings["stage1"] = 1000.0 * (time.perf_counter() - t0)

        proposal: CropProposal | None = None
        stage2 = MatchSet.empty(img1.meta, img2.meta)
        if cfg.stage2 and len(stage1) >= 1:
            t0 = time.perf_counter()
            proposal = propose_crops(
                img1.meta, img2.meta, stage1.points1(), stage1.points2(), cfg.crop
            )
            timings["crop"] = 1000.0 * (time.perf_counter() - t0)

            t0 = time.perf_counter()
            try:
                stage2 = self.run_stage(
                    cfg.stage2, img1, img2, (proposal.box1, proposal.box2), Stage.TWO
                )
            except StageFailedError as exc:
                logger.warning("stage two failed, continuing with stage-one matches: %s", exc)
                stage2 = MatchSet.empty(img1.meta, img2.meta)
            timings["stage2"] = 1000.0 * (time.perf_counter() - t0)

        matches = stage1.concat(stage2)

        model: Model3x3 | None = None
        error: str | None = None
        t0 = time.perf_counter()
        params = replace(
            cfg.estimator, seed=derive_pair_seed(cfg.estimator.seed, img1.meta.id, img2.meta.id)
        )
        try:
            model = ransac(
                matches,
                cfg.model_kind,
                params,
                k1=img1.intrinsics,
                k2=img2.intrinsics,
            )
        except (InsufficientDataError, EstimationFailedError, DegenerateConfigurationError, ValueError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            logger.warning("estimation failed on pair (%s, %s): %s", img1.meta.id, img2.meta.id, error)
        timings["estimation"] = 1000.0 * (time.perf_counter() - t0)

        return PipelineResult(
            matches=matches,
            proposal=proposal,
            model=model,
            timings_ms=timings,
            estimation_error=error,
            stage1_count=len(stage1),
            stage2_count=len(stage2),
        )

    def close(self) -> None:
        with self._lock:
            for client in self._clients.values():
                client.close()
            self._clients.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_stage(
    specs: tuple[MatcherSpec, ...],
    img1: ImageInput,
    img2: ImageInput,
    crops: tuple[CropBox, CropBox] | None = None,
    stage: Stage = Stage.ONE,
) -> MatchSet:
    """One-shot stage run (transient pipeline, see TwoStagePipeline.run_stage)."""
    config = PipelineConfig(stage1=tuple(specs))
    with TwoStagePipeline(config) as p:
        return p.run_stage(tuple(specs), img1, img2, crops, stage)


def run_two_stage(img1: ImageInput, img2: ImageInput, config: PipelineConfig) -> PipelineResult:
    """One-shot two-stage run (transient pipeline, see TwoStagePipeline.run)."""
    with TwoStagePipeline(config) as p:
        return p.run(img1, img2)
