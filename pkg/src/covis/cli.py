"""Command-line interface: match, benchmark, crop, synth.

Exit codes are stable per failure class:

    0  success
    2  usage errors (argparse)
    3  configuration errors (bad config file / unknown matcher)
    4  input/output errors (missing files, bad manifest)
    5  pipeline or estimation errors

The pair manifest is CSV with header
``pair_id,image1,image2,K1_0..K1_8,K2_0..K2_8,R_0..R_8,t_0,t_1,t_2`` plus
an optional ``covis_score``; unknown extra columns are ignored with a
warning. Matrices are row-major. Reports are JSON with a ``pairs`` list
and an ``aggregate`` block, and every value in the aggregate can be
recomputed from the rows.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .clustering import DbscanParams
from .core import CropBox, ImageMeta, MatchSet, Stage
from .errors import CovisError, PipelineError, UnsupportedMetricError
from .geometry import CameraIntrinsics, EstimatorParams, ModelKind, pose_from_fundamental
from .imagefiles import load_grayscale, save_grayscale
from .matchers import MatcherKind, MatcherSpec
from .metrics import (
    PoseError,
    ThresholdGrid,
    maa,
    metric_translation_error,
    pose_auc,
    rotation_error,
    translation_error,
)
from .cropping import CropParams, propose_crops
from .pipeline import ImageInput, PipelineConfig, TwoStagePipeline, scene_inputs
from .synthetic import (
    SCENE_SUFFIX,
    generate_epipolar_scene,
    load_scene,
    random_scene_spec,
    render_planar_pair,
    save_scene,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_PIPELINE = 5

AUC_THRESHOLDS = (5.0, 10.0, 20.0)

MATCHER_ENV_VAR = "COVIS_MATCHER_PATH"


class ConfigError(CovisError):
    pass


class ManifestError(CovisError):
    pass


# ---------------------------------------------------------------------------
# Config file <-> PipelineConfig
# ---------------------------------------------------------------------------


def _matcher_from_dict(d: dict) -> MatcherSpec:
    kind_raw = str(d.get("kind", "builtin")).lower()
    try:
        kind = MatcherKind(kind_raw)
    except ValueError:
        raise ConfigError(f"unknown matcher kind {kind_raw!r}")
    endpoint = d.get("endpoint")
    if kind is MatcherKind.EXTERNAL and not endpoint:
        endpoint = os.environ.get(MATCHER_ENV_VAR)
        if not endpoint:
            raise ConfigError(
                f"external matcher needs an endpoint (or set {MATCHER_ENV_VAR})"
            )
    try:
        return MatcherSpec(
            kind=kind,
            name=str(d.get("name", "harris")),
            resolution=int(d.get("resolution", 840)),
            endpoint=endpoint,
            options={str(k): str(v) for k, v in dict(d.get("options", {})).items()},
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _matcher_to_dict(m: MatcherSpec) -> dict:
    return {
        "kind": m.kind.value,
        "name": m.name,
        "resolution": m.resolution,
        "endpoint": m.endpoint,
        "options": dict(m.options),
    }


def config_from_dict(d: dict) -> PipelineConfig:
    try:
        mk = d.get("crop", {})
        dbscan = None
        if mk.get("eps") is not None:
            dbscan = DbscanParams(eps=float(mk["eps"]), min_pts=int(mk.get("min_pts", 5)))
        crop_params = CropParams(
            t=float(mk.get("t", 0.05)),
            dbscan=dbscan,
            eps_factor=float(mk.get("eps_factor", 0.04)),
            min_pts=int(mk.get("min_pts", 5)),
            e_h=float(mk.get("e_h", 1.05)),
            e_v=float(mk.get("e_v", 1.0)),
            min_box_side=float(mk.get("min_box_side", 64.0)),
        )
        est = d.get("estimator", {})
        estimator = EstimatorParams(
            threshold=float(est.get("threshold", 1.5)),
            max_iters=int(est.get("max_iters", 10000)),
            confidence=float(est.get("confidence", 0.9999)),
            seed=int(est.get("seed", 0)),
        )
        stage1 = tuple(_matcher_from_dict(m) for m in d.get("stage1", []))
        stage2 = tuple(_matcher_from_dict(m) for m in d.get("stage2", []))
        kind = ModelKind(str(d.get("model_kind", "fundamental")).lower())
        return PipelineConfig(
            stage1=stage1, stage2=stage2, crop=crop_params, estimator=estimator, model_kind=kind
        )
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid pipeline config: {exc}")


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Full config echo: every effective value, defaults included."""
    return {
        "model_kind": cfg.model_kind.value,
        "stage1": [_matcher_to_dict(m) for m in cfg.stage1],
        "stage2": [_matcher_to_dict(m) for m in cfg.stage2],
        "crop": {
            "t": cfg.crop.t,
            "eps": cfg.crop.dbscan.eps if cfg.crop.dbscan else None,
            "eps_factor": cfg.crop.eps_factor,
            "min_pts": cfg.crop.min_pts,
            "e_h": cfg.crop.e_h,
            "e_v": cfg.crop.e_v,
            "min_box_side": cfg.crop.min_box_side,
        },
        "estimator": dataclasses.asdict(cfg.estimator),
    }


def default_config() -> PipelineConfig:
    return PipelineConfig(
        stage1=(MatcherSpec(MatcherKind.BUILTIN, "harris", 840),),
        stage2=(MatcherSpec(MatcherKind.BUILTIN, "harris", 840),),
    )


def load_config(path: str | None, seed: int | None = None) -> PipelineConfig:
    if path is None:
        cfg = default_config()
    else:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}")
        cfg = config_from_dict(data)
    if seed is not None:
        cfg = dataclasses.replace(cfg, estimator=dataclasses.replace(cfg.estimator, seed=seed))
    return cfg


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

_K_COLS = [f"K1_{i}" for i in range(9)] + [f"K2_{i}" for i in range(9)]
_GT_COLS = [f"R_{i}" for i in range(9)] + ["t_0", "t_1", "t_2"]
MANIFEST_COLUMNS = ["pair_id", "image1", "image2"] + _K_COLS + _GT_COLS


@dataclasses.dataclass(eq=False)
class PairRow:
    pair_id: str
    image1: str
    image2: str
    k1: np.ndarray
    k2: np.ndarray
    r_gt: np.ndarray
    t_gt: np.ndarray
    covis_score: float | None = None


def read_manifest(path: str | Path) -> list[PairRow]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ManifestError(f"manifest {path} is empty")
            missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
            if missing:
                raise ManifestError(f"manifest {path} lacks columns: {', '.join(missing)}")
            extra = [
                c for c in reader.fieldnames if c not in MANIFEST_COLUMNS + ["covis_score"]
            ]
            if extra:
                logger.warning("manifest %s: ignoring unknown columns %s", path, extra)
            rows = []
            base = Path(path).parent
            for i, rec in enumerate(reader):
                try:
                    k1 = np.array([float(rec[c]) for c in _K_COLS[:9]]).reshape(3, 3)
                    k2 = np.array([float(rec[c]) for c in _K_COLS[9:]]).reshape(3, 3)
                    r = np.array([float(rec[f"R_{j}"]) for j in range(9)]).reshape(3, 3)
                    t = np.array([float(rec[f"t_{j}"]) for j in range(3)])
                except (ValueError, TypeError, KeyError) as exc:
                    raise ManifestError(f"manifest {path} row {i + 1}: bad matrix value ({exc})")
                if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
                    raise ManifestError(f"manifest {path} row {i + 1}: R_gt is not orthonormal")
                covis = rec.get("covis_score")
                rows.append(
                    PairRow(
                        pair_id=rec["pair_id"],
                        image1=str((base / rec["image1"]).resolve()) if not os.path.isabs(rec["image1"]) else rec["image1"],
                        image2=str((base / rec["image2"]).resolve()) if not os.path.isabs(rec["image2"]) else rec["image2"],
                        k1=k1,
                        k2=k2,
                        r_gt=r,
                        t_gt=t,
                        covis_score=float(covis) if covis not in (None, "") else None,
                    )
                )
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}")
    if not rows:
        raise ManifestError(f"manifest {path} has no data rows")
    return rows


def write_manifest(rows: list[PairRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.pair_id, row.image1, row.image2]
                + [repr(float(v)) for v in row.k1.ravel()]
                + [repr(float(v)) for v in row.k2.ravel()]
                + [repr(float(v)) for v in row.r_gt.ravel()]
                + [repr(float(v)) for v in row.t_gt.ravel()]
            )


def _load_pair_inputs(row: PairRow) -> tuple[ImageInput, ImageInput]:
    k1 = CameraIntrinsics.from_matrix(row.k1)
    k2 = CameraIntrinsics.from_matrix(row.k2)
    if row.image1.endswith(SCENE_SUFFIX):
        scene = generate_epipolar_scene(load_scene(row.image1))
        a, b = scene_inputs(scene)
        a.path, b.path = row.image1, row.image2
        return a, b
    img1 = load_grayscale(row.image1)
    img2 = load_grayscale(row.image2)
    h1, w1 = img1.shape
    h2, w2 = img2.shape
    return (
        ImageInput(ImageMeta(row.pair_id + "/1", w1, h1), pixels=img1, path=row.image1, intrinsics=k1),
        ImageInput(ImageMeta(row.pair_id + "/2", w2, h2), pixels=img2, path=row.image2, intrinsics=k2),
    )


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


@dataclasses.dataclass(eq=False)
class BenchmarkPair:
    pair_id: str
    error: PoseError
    trans_error_m: float | None
    n_matches: int
    n_inliers: int
    stage1_count: int
    stage2_count: int
    timings_ms: dict
    failure: str | None = None


def evaluate_pair(pipeline: TwoStagePipeline, row: PairRow) -> BenchmarkPair:
    try:
        img1, img2 = _load_pair_inputs(row)
        result = pipeline.run(img1, img2)
    except (CovisError, OSError, ValueError) as exc:
        return BenchmarkPair(
            pair_id=row.pair_id,
            error=PoseError.failure(),
            trans_error_m=None,
            n_matches=0,
            n_inliers=0,
            stage1_count=0,
            stage2_count=0,
            timings_ms={},
            failure=f"{type(exc).__name__}: {exc}",
        )

    if result.model is None:
        return BenchmarkPair(
            pair_id=row.pair_id,
            error=PoseError.failure(),
            trans_error_m=None,
            n_matches=len(result.matches),
            n_inliers=0,
            stage1_count=result.stage1_count,
            stage2_count=result.stage2_count,
            timings_ms=result.timings_ms,
            failure=result.estimation_error,
        )

    try:
        pose = pose_from_fundamental(
            result.model,
            CameraIntrinsics.from_matrix(row.k1),
            CameraIntrinsics.from_matrix(row.k2),
            result.matches,
        )
        err = PoseError(
            rot_deg=rotation_error(pose.rotation, row.r_gt),
            trans_deg=translation_error(pose.translation, row.t_gt),
        )
        trans_m = None
        if float(np.linalg.norm(row.t_gt)) > 0.0:
            trans_m = metric_translation_error(pose.translation, row.t_gt)
        failure = None
    except (CovisError, ValueError) as exc:
        err = PoseError.failure()
        trans_m = None
        failure = f"{type(exc).__name__}: {exc}"

    return BenchmarkPair(
        pair_id=row.pair_id,
        error=err,
        trans_error_m=trans_m,
        n_matches=len(result.matches),
        n_inliers=result.model.score,
        stage1_count=result.stage1_count,
        stage2_count=result.stage2_count,
        timings_ms=result.timings_ms,
        failure=failure,
    )


def run_benchmark(
    rows: list[PairRow], config: PipelineConfig, jobs: int = 1
) -> tuple[list[BenchmarkPair], dict]:
    """Run the pipeline on every manifest row; per-pair failures become
    failed rows, never aborts. Output order follows the manifest."""
    with TwoStagePipeline(config) as pipeline:
        if jobs <= 1:
            results = [evaluate_pair(pipeline, row) for row in rows]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda r: evaluate_pair(pipeline, r), rows))

    errors = [r.error for r in results]
    aggregate: dict = {"n_pairs": len(results)}
    aucs = pose_auc(errors, list(AUC_THRESHOLDS))
    for tau, value in zip(AUC_THRESHOLDS, aucs):
        aggregate[f"auc{int(tau)}"] = value
    trans_m = [r.trans_error_m for r in results]
    if all(v is not None for v in trans_m):
        try:
            aggregate["maa"] = maa(errors, [float(v) for v in trans_m], ThresholdGrid.default())
        except UnsupportedMetricError:
            aggregate["maa"] = None
    else:
        aggregate["maa"] = None
    return results, aggregate


def report_to_dict(
    results: list[BenchmarkPair], aggregate: dict, config: PipelineConfig
) -> dict:
    phases: dict[str, list[float]] = {}
    for r in results:
        for phase, ms in r.timings_ms.items():
            phases.setdefault(phase, []).append(ms)
    timing_stats = {
        phase: {"mean_ms": float(np.mean(v)), "total_ms": float(np.sum(v))}
        for phase, v in sorted(phases.items())
    }
    return {
        "config": config_to_dict(config),
        "pairs": [
            {
                "pair_id": r.pair_id,
                "rot_deg": None if r.error.failed else r.error.rot_deg,
                "trans_deg": None if r.error.failed else r.error.trans_deg,
                "combined_deg": None if r.error.failed else r.error.combined,
                "failed": r.error.failed,
                "trans_error_m": r.trans_error_m,
                "n_matches": r.n_matches,
                "n_inliers": r.n_inliers,
                "stage1": r.stage1_count,
                "stage2": r.stage2_count,
                "failure": r.failure,
            }
            for r in results
        ],
        "aggregate": aggregate,
        "timings_ms": timing_stats,
    }


def format_table(results: list[BenchmarkPair], aggregate: dict) -> str:
    header = f"{'pair_id':<24} {'rot':>8} {'trans':>8} {'comb':>8} {'match':>6} {'inl':>6}  status"
    lines = [header, "-" * len(header)]
    for r in results:
        if r.error.failed:
            rot = trans = comb = "-"
            status = (r.failure or "failed")[:40]
        else:
            rot = f"{r.error.rot_deg:.2f}"
            trans = f"{r.error.trans_deg:.2f}"
            comb = f"{r.error.combined:.2f}"
            status = "ok"
        lines.append(
            f"{r.pair_id:<24} {rot:>8} {trans:>8} {comb:>8} {r.n_matches:>6} {r.n_inliers:>6}  {status}"
        )
    lines.append("-" * len(header))
    agg = " ".join(
        f"AUC@{int(tau)}={aggregate[f'auc{int(tau)}']:.2f}%" for tau in AUC_THRESHOLDS
    )
    if aggregate.get("maa") is not None:
        agg += f" mAA={aggregate['maa']:.2f}%"
    lines.append(f"pairs={aggregate['n_pairs']} {agg}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Overlay rendering
# ---------------------------------------------------------------------------

_STAGE_COLORS = {Stage.ONE: (255, 150, 40), Stage.TWO: (60, 200, 255)}
_INLIER_RING = (70, 230, 90)
_OUTLIER_RING = (230, 60, 60)
_BOX_COLOR = (250, 230, 60)


def render_overlay(
    image: np.ndarray,
    matches: MatchSet,
    side: int,
    out_path: str | Path,
    box: CropBox | None = None,
    inliers: np.ndarray | None = None,
) -> None:
    """Rasterize keypoints (stage-colored), inlier/outlier rings and the
    crop box onto the image; deterministic output for identical inputs."""
    arr = (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    im = Image.fromarray(arr, mode="L").convert("RGB")
    draw = ImageDraw.Draw(im)

    if box is not None:
        draw.rectangle([box.x_min, box.y_min, box.x_max - 1, box.y_max - 1], outline=_BOX_COLOR, width=3)

    pts = matches.points1() if side == 1 else matches.points2()
    for i, c in enumerate(matches.items):
        x, y = pts[i]
        color = _STAGE_COLORS[c.stage]
        if inliers is not None and i < len(inliers):
            ring = _INLIER_RING if inliers[i] else _OUTLIER_RING
            draw.ellipse([x - 4, y - 4, x + 4, y + 4], outline=ring, width=1)
        draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=color)
    im.save(out_path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _model_to_dict(result) -> dict | None:
    if result.model is None:
        return None
    return {
        "kind": result.model.kind.value,
        "matrix": result.model.m.ravel().tolist(),
        "n_inliers": result.model.score,
        "inliers": result.model.inliers.astype(int).tolist(),
    }


def _proposal_to_dict(proposal) -> dict | None:
    if proposal is None:
        return None
    return {
        "box1": [proposal.box1.x_min, proposal.box1.y_min, proposal.box1.x_max, proposal.box1.y_max],
        "box2": [proposal.box2.x_min, proposal.box2.y_min, proposal.box2.x_max, proposal.box2.y_max],
        "kept_clusters1": list(proposal.kept_clusters1),
        "kept_clusters2": list(proposal.kept_clusters2),
        "degenerate": proposal.degenerate,
    }


def _matches_to_dict(matches: MatchSet) -> dict:
    return {
        "image1": {"id": matches.image1.id, "width": matches.image1.width, "height": matches.image1.height},
        "image2": {"id": matches.image2.id, "width": matches.image2.width, "height": matches.image2.height},
        "p1": matches.points1().tolist(),
        "p2": matches.points2().tolist(),
        "confidence": matches.confidences().tolist(),
        "stage": matches.stages().tolist(),
        "source": [c.source for c in matches.items],
    }


def cmd_match(args) -> int:
    for p in (args.image1, args.image2):
        if not Path(p).exists():
            print(f"error: image not found: {p}", file=sys.stderr)
            return EXIT_IO
    try:
        config = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out or "covis-out")
    try:
        img1 = load_grayscale(args.image1)
        img2 = load_grayscale(args.image2)
    except OSError as exc:
        print(f"error: cannot read images: {exc}", file=sys.stderr)
        return EXIT_IO

    h1, w1 = img1.shape
    h2, w2 = img2.shape
    in1 = ImageInput(ImageMeta(str(args.image1), w1, h1), pixels=img1, path=str(args.image1))
    in2 = ImageInput(ImageMeta(str(args.image2), w2, h2), pixels=img2, path=str(args.image2))

    try:
        with TwoStagePipeline(config) as pipeline:
            result = pipeline.run(in1, in2)
    except (PipelineError, CovisError) as exc:
        print(f"error: pipeline failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "matches.json").write_text(json.dumps(_matches_to_dict(result.matches)))
    (out_dir / "model.json").write_text(
        json.dumps({"model": _model_to_dict(result), "error": result.estimation_error, "timings_ms": result.timings_ms})
    )
    (out_dir / "proposal.json").write_text(json.dumps(_proposal_to_dict(result.proposal)))
    inliers = result.model.inliers if result.model is not None else None
    box1 = result.proposal.box1 if result.proposal else None
    box2 = result.proposal.box2 if result.proposal else None
    render_overlay(img1, result.matches, 1, out_dir / "overlay1.png", box1, inliers)
    render_overlay(img2, result.matches, 2, out_dir / "overlay2.png", box2, inliers)
    n_inl = result.model.score if result.model else 0
    print(f"{len(result.matches)} matches, {n_inl} inliers; artifacts in {out_dir}")
    return EXIT_OK if result.model is not None else EXIT_PIPELINE


def cmd_benchmark(args) -> int:
    try:
        config = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = read_manifest(args.manifest)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    results, aggregate = run_benchmark(rows, config, jobs=args.jobs)
    report = report_to_dict(results, aggregate, config)
    table = format_table(results, aggregate)

    out = Path(args.out or "report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1))
    out.with_suffix(".txt").write_text(table + "\n")
    print(table)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_crop(args) -> int:
    for p in (args.image1, args.image2):
        if not Path(p).exists():
            print(f"error: image not found: {p}", file=sys.stderr)
            return EXIT_IO
    try:
        config = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        img1 = load_grayscale(args.image1)
        img2 = load_grayscale(args.image2)
    except OSError as exc:
        print(f"error: cannot read images: {exc}", file=sys.stderr)
        return EXIT_IO

    h1, w1 = img1.shape
    h2, w2 = img2.shape
    in1 = ImageInput(ImageMeta(str(args.image1), w1, h1), pixels=img1, path=str(args.image1))
    in2 = ImageInput(ImageMeta(str(args.image2), w2, h2), pixels=img2, path=str(args.image2))

    try:
        with TwoStagePipeline(config) as pipeline:
            stage1 = pipeline.run_stage(config.stage1, in1, in2, None, Stage.ONE)
        if len(stage1) == 0:
            print("error: stage one produced no matches", file=sys.stderr)
            return EXIT_PIPELINE
        proposal = propose_crops(
            in1.meta, in2.meta, stage1.points1(), stage1.points2(), config.crop
        )
    except CovisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE

    out_dir = Path(args.out or "covis-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "proposal.json").write_text(json.dumps(_proposal_to_dict(proposal)))
    render_overlay(img1, stage1, 1, out_dir / "overlay1.png", proposal.box1)
    render_overlay(img2, stage1, 2, out_dir / "overlay2.png", proposal.box2)
    print(json.dumps(_proposal_to_dict(proposal)))
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out or "synth-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    if args.mode == "planar":
        angle = math.radians(args.angle)
        c, s = math.cos(angle), math.sin(angle)
        cx, cy = args.size / 2.0, args.size / 2.0
        h = np.array(
            [
                [c, -s, cx - c * cx + s * cy + args.shift],
                [s, c, cy - s * cx - c * cy],
                [0.0, 0.0, 1.0],
            ]
        )
        img1, img2 = render_planar_pair(args.seed, h, args.size)
        save_grayscale(img1, out_dir / "img1.png")
        save_grayscale(img2, out_dir / "img2.png")
        (out_dir / "gt_h.json").write_text(json.dumps({"h": h.ravel().tolist()}))
        print(f"planar pair written to {out_dir}")
        return EXIT_OK

    rows = []
    for i in range(args.pairs):
        spec = random_scene_spec(
            rng,
            width=args.width,
            height=args.height,
            n_inliers=args.n_inliers,
            noise_sigma=args.noise,
            outlier_rate=args.outlier_rate,
            covis_frac=args.covis_frac,
        )
        scene_path = out_dir / f"pair_{i:04d}{SCENE_SUFFIX}"
        save_scene(spec, scene_path)
        rows.append(
            PairRow(
                pair_id=f"pair_{i:04d}",
                # Manifest-relative so the output directory stays portable.
                image1=scene_path.name,
                image2=scene_path.name,
                k1=spec.intrinsics1.matrix(),
                k2=spec.intrinsics2.matrix(),
                r_gt=spec.pose.rotation,
                t_gt=spec.pose.translation * spec.baseline,
            )
        )
    manifest = out_dir / "manifest.csv"
    write_manifest(rows, manifest)
    print(f"{len(rows)} scenes + manifest written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="pipeline config JSON (defaults echoed in reports)")
    sub.add_argument("--jobs", type=int, default=1, help="parallel pairs")
    sub.add_argument("--seed", type=int, default=None, help="override estimator seed")
    sub.add_argument("--out", help="output file or directory")
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covis", description=__doc__.split("\n")[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p_match = subs.add_parser("match", help="match one image pair and write artifacts")
    p_match.add_argument("image1")
    p_match.add_argument("image2")
    _add_common(p_match)

    p_bench = subs.add_parser("benchmark", help="run the pipeline over a pair manifest")
    p_bench.add_argument("manifest")
    _add_common(p_bench)

    p_crop = subs.add_parser("crop", help="propose co-visible region crops for a pair")
    p_crop.add_argument("image1")
    p_crop.add_argument("image2")
    _add_common(p_crop)

    p_synth = subs.add_parser("synth", help="generate synthetic scenes or image pairs")
    p_synth.add_argument("mode", choices=["epipolar", "planar"])
    p_synth.add_argument("--pairs", type=int, default=20)
    p_synth.add_argument("--n-inliers", dest="n_inliers", type=int, default=120)
    p_synth.add_argument("--noise", type=float, default=0.5)
    p_synth.add_argument("--outlier-rate", dest="outlier_rate", type=float, default=0.0)
    p_synth.add_argument("--covis-frac", dest="covis_frac", type=float, default=0.4)
    p_synth.add_argument("--width", type=int, default=1280)
    p_synth.add_argument("--height", type=int, default=960)
    p_synth.add_argument("--size", type=int, default=512, help="planar image side")
    p_synth.add_argument("--angle", type=float, default=5.0, help="planar rotation (degrees)")
    p_synth.add_argument("--shift", type=float, default=10.0, help="planar x shift (pixels)")
    _add_common(p_synth)
    p_synth.set_defaults(seed=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "match": cmd_match,
        "benchmark": cmd_benchmark,
        "crop": cmd_crop,
        "synth": cmd_synth,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
