import json

import numpy as np
import pytest

from covis.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    ConfigError,
    ManifestError,
    PairRow,
    config_from_dict,
    config_to_dict,
    format_table,
    load_config,
    main,
    read_manifest,
    report_to_dict,
    run_benchmark,
    write_manifest,
)
from covis.imagefiles import save_grayscale
from covis.matchers import MatcherKind
from covis.synthetic import render_planar_pair


def _scene_config(n=300, stage2=True, max_iters=1024):
    cfg = {
        "model_kind": "fundamental",
        "stage1": [
            {
                "kind": "builtin",
                "name": "synthetic",
                "resolution": 1600,
                "options": {
                    "n_candidates": str(n),
                    "covis_bias": "0.6667",
                    "noise_sigma": "0.4",
                    "covis_precision": "0.75",
                },
            }
        ],
        "stage2": [],
        "estimator": {"threshold": 1.5, "max_iters": max_iters, "confidence": 0.9999, "seed": 0},
    }
    if stage2:
        cfg["stage2"] = [dict(cfg["stage1"][0])]
    return cfg


@pytest.fixture
def scene_manifest(tmp_path):
    code = main(
        [
            "synth",
            "epipolar",
            "--pairs",
            "6",
            "--n-inliers",
            "80",
            "--outlier-rate",
            "0.3",
            "--seed",
            "3",
            "--out",
            str(tmp_path / "scenes"),
        ]
    )
    assert code == EXIT_OK
    return tmp_path / "scenes" / "manifest.csv"


class TestConfig:
    def test_round_trip_echo_has_all_defaults(self):
        cfg = config_from_dict(_scene_config())
        echo = config_to_dict(cfg)
        assert echo["crop"]["t"] == 0.05
        assert echo["crop"]["e_h"] == 1.05
        assert echo["estimator"]["confidence"] == 0.9999
        again = config_from_dict(echo)
        assert config_to_dict(again) == echo

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"stage1": [{"kind": "martian", "name": "x", "resolution": 840}]})

    def test_external_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("COVIS_MATCHER_PATH", raising=False)
        with pytest.raises(ConfigError):
            config_from_dict({"stage1": [{"kind": "external", "name": "x", "resolution": 840}]})

    def test_endpoint_from_environment(self, monkeypatch):
        monkeypatch.setenv("COVIS_MATCHER_PATH", "python worker.py")
        cfg = config_from_dict({"stage1": [{"kind": "external", "name": "x", "resolution": 840}]})
        assert cfg.stage1[0].endpoint == "python worker.py"
        assert cfg.stage1[0].kind is MatcherKind.EXTERNAL

    def test_seed_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(_scene_config()))
        cfg = load_config(str(p), seed=99)
        assert cfg.estimator.seed == 99

    def test_unreadable_config(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/config.json")


class TestManifest:
    def _row(self, tmp_path, pid="p0"):
        k = np.array([[100.0, 0, 64], [0, 100, 48], [0, 0, 1]])
        return PairRow(
            pair_id=pid,
            image1=str(tmp_path / "a.png"),
            image2=str(tmp_path / "b.png"),
            k1=k,
            k2=k,
            r_gt=np.eye(3),
            t_gt=np.array([1.0, 0.0, 0.0]),
        )

    def test_write_read_round_trip(self, tmp_path):
        rows = [self._row(tmp_path, "p0"), self._row(tmp_path, "p1")]
        path = tmp_path / "m.csv"
        write_manifest(rows, path)
        back = read_manifest(path)
        assert [r.pair_id for r in back] == ["p0", "p1"]
        np.testing.assert_allclose(back[0].k1, rows[0].k1)
        np.testing.assert_allclose(back[0].t_gt, rows[0].t_gt)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        write_manifest([], path)
        with pytest.raises(ManifestError):
            read_manifest(path)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("pair_id,image1\np0,a.png\n")
        with pytest.raises(ManifestError):
            read_manifest(path)

    def test_non_orthonormal_r_rejected(self, tmp_path):
        rows = [self._row(tmp_path)]
        rows[0].r_gt = np.eye(3) * 2.0
        path = tmp_path / "m.csv"
        write_manifest(rows, path)
        with pytest.raises(ManifestError):
            read_manifest(path)

    def test_unknown_columns_warn_not_fail(self, tmp_path, caplog):
        rows = [self._row(tmp_path)]
        path = tmp_path / "m.csv"
        write_manifest(rows, path)
        text = path.read_text().splitlines()
        text[0] += ",mystery"
        text[1] += ",42"
        path.write_text("\n".join(text) + "\n")
        import logging

        with caplog.at_level(logging.WARNING):
            back = read_manifest(path)
        assert len(back) == 1
        assert any("mystery" in m for m in caplog.messages)


class TestBenchmark:
    def test_scene_benchmark_two_stage(self, scene_manifest):
        rows = read_manifest(scene_manifest)
        cfg = config_from_dict(_scene_config())
        results, aggregate = run_benchmark(rows, cfg, jobs=2)
        assert aggregate["n_pairs"] == 6
        assert len(results) == 6
        ok = [r for r in results if not r.error.failed]
        assert len(ok) >= 5
        assert aggregate["auc5"] > 0.0
        assert aggregate["maa"] is not None
        # Aggregates recomputable from rows.
        from covis.metrics import pose_auc

        errs = [r.error for r in results]
        assert pose_auc(errs, [5.0])[0] == pytest.approx(aggregate["auc5"])

    def test_report_and_table(self, scene_manifest):
        rows = read_manifest(scene_manifest)
        cfg = config_from_dict(_scene_config(stage2=False))
        results, aggregate = run_benchmark(rows, cfg)
        report = report_to_dict(results, aggregate, cfg)
        assert report["config"]["crop"]["t"] == 0.05
        assert len(report["pairs"]) == 6
        table = format_table(results, aggregate)
        assert "AUC@5" in table and "pair_0000" in table

    def test_single_stage_reduction_bit_for_bit(self, scene_manifest):
        rows = read_manifest(scene_manifest)
        cfg = config_from_dict(_scene_config(stage2=False))
        r1, a1 = run_benchmark(rows, cfg)
        r2, a2 = run_benchmark(rows, cfg)
        d1 = report_to_dict(r1, a1, cfg)
        d2 = report_to_dict(r2, a2, cfg)
        d1.pop("timings_ms")
        d2.pop("timings_ms")
        assert json.dumps(d1) == json.dumps(d2)

    def test_unreadable_image_isolated(self, tmp_path, scene_manifest):
        rows = read_manifest(scene_manifest)
        rows[2].image1 = str(tmp_path / "missing.scene.json")
        cfg = config_from_dict(_scene_config(stage2=False))
        results, aggregate = run_benchmark(rows, cfg)
        assert results[2].error.failed
        assert sum(1 for r in results if not r.error.failed) >= 4
        assert aggregate["n_pairs"] == 6


class TestCommands:
    @pytest.fixture
    def planar_pair(self, tmp_path):
        h = np.array([[1.0, 0.0, 8.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        img1, img2 = render_planar_pair(4, h, 256)
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        save_grayscale(img1, p1)
        save_grayscale(img2, p2)
        return p1, p2, h

    def _match_config(self, tmp_path, model_kind="homography"):
        cfg = {
            "model_kind": model_kind,
            "stage1": [{"kind": "builtin", "name": "harris", "resolution": 256}],
            "stage2": [{"kind": "builtin", "name": "harris", "resolution": 256}],
            "crop": {"min_box_side": 64},
            "estimator": {"threshold": 2.0, "max_iters": 500, "seed": 0},
        }
        p = tmp_path / "config.json"
        p.write_text(json.dumps(cfg))
        return str(p)

    def test_match_known_homography(self, tmp_path, planar_pair):
        p1, p2, h = planar_pair
        out = tmp_path / "out"
        code = main(
            ["match", str(p1), str(p2), "--config", self._match_config(tmp_path), "--out", str(out)]
        )
        assert code == EXIT_OK
        model = json.loads((out / "model.json").read_text())["model"]
        assert model is not None and model["kind"] == "homography"
        h_est = np.array(model["matrix"]).reshape(3, 3)
        corners = np.array([[0.0, 0.0], [255.0, 0.0], [255.0, 255.0], [0.0, 255.0]])
        hom = np.hstack([corners, np.ones((4, 1))])
        gt = hom @ h.T
        gt = gt[:, :2] / gt[:, 2:]
        est = hom @ h_est.T
        est = est[:, :2] / est[:, 2:]
        assert np.linalg.norm(gt - est, axis=1).max() < 1.0
        for artifact in ("matches.json", "proposal.json", "overlay1.png", "overlay2.png"):
            assert (out / artifact).exists()

    def test_match_identical_pair_gives_identity_h(self, tmp_path):
        from covis.synthetic import procedural_texture

        img = procedural_texture(9, 256, 256)
        p = tmp_path / "same.png"
        save_grayscale(img, p)
        out = tmp_path / "same-out"
        code = main(
            ["match", str(p), str(p), "--config", self._match_config(tmp_path), "--out", str(out)]
        )
        assert code == EXIT_OK
        model = json.loads((out / "model.json").read_text())["model"]
        h_est = np.array(model["matrix"]).reshape(3, 3)
        h_est = h_est / h_est[2, 2]
        np.testing.assert_allclose(h_est, np.eye(3), atol=1e-3)
        # Self-matches span the texture, so the proposal covers most of it.
        prop = json.loads((out / "proposal.json").read_text())
        box_area = (prop["box1"][2] - prop["box1"][0]) * (prop["box1"][3] - prop["box1"][1])
        assert box_area > 0.8 * 256 * 256

    def test_match_missing_image_is_io_error(self, tmp_path, planar_pair):
        p1, _, _ = planar_pair
        out = tmp_path / "out2"
        code = main(["match", str(p1), str(tmp_path / "nope.png"), "--out", str(out)])
        assert code == EXIT_IO
        assert not out.exists()  # no partial artifacts

    def test_match_bad_config_exit_code(self, tmp_path, planar_pair):
        p1, p2, _ = planar_pair
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert main(["match", str(p1), str(p2), "--config", str(bad)]) == EXIT_CONFIG

    def test_overlay_determinism(self, tmp_path, planar_pair):
        p1, p2, _ = planar_pair
        cfg = self._match_config(tmp_path)
        out_a, out_b = tmp_path / "oa", tmp_path / "ob"
        assert main(["match", str(p1), str(p2), "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["match", str(p1), str(p2), "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        assert (out_a / "overlay1.png").read_bytes() == (out_b / "overlay1.png").read_bytes()

    def test_crop_command(self, tmp_path, planar_pair):
        p1, p2, _ = planar_pair
        out = tmp_path / "crop-out"
        code = main(
            ["crop", str(p1), str(p2), "--config", self._match_config(tmp_path), "--out", str(out)]
        )
        assert code == EXIT_OK
        prop = json.loads((out / "proposal.json").read_text())
        assert prop["box1"][2] <= 256.0 and not prop["degenerate"]

    def test_benchmark_cli_end_to_end(self, tmp_path, scene_manifest):
        cfg_path = tmp_path / "bench.json"
        cfg_path.write_text(json.dumps(_scene_config(stage2=False)))
        out = tmp_path / "report.json"
        code = main(
            ["benchmark", str(scene_manifest), "--config", str(cfg_path), "--out", str(out)]
        )
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["aggregate"]["n_pairs"] == 6
        assert out.with_suffix(".txt").exists()

    def test_benchmark_missing_manifest_is_io_error(self, tmp_path):
        assert main(["benchmark", str(tmp_path / "nope.csv")]) == EXIT_IO

    def test_synth_planar(self, tmp_path):
        out = tmp_path / "planar"
        code = main(["synth", "planar", "--size", "128", "--seed", "2", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "img1.png").exists() and (out / "gt_h.json").exists()

    def test_synth_manifest_is_relocatable(self, tmp_path, monkeypatch):
        # Scene paths are manifest-relative: the benchmark must work from
        # any working directory and after moving the output directory.
        monkeypatch.chdir(tmp_path)
        assert main(["synth", "epipolar", "--pairs", "2", "--seed", "1", "--out", "rel-scenes"]) == EXIT_OK
        rows = read_manifest(tmp_path / "rel-scenes" / "manifest.csv")
        moved = tmp_path / "elsewhere"
        (tmp_path / "rel-scenes").rename(moved)
        monkeypatch.chdir("/")
        rows = read_manifest(moved / "manifest.csv")
        cfg = config_from_dict(_scene_config(n=80, stage2=False, max_iters=128))
        results, aggregate = run_benchmark(rows, cfg)
        assert all(not r.error.failed for r in results)


class TestOverlay:
    def test_zero_matches_box_only(self, tmp_path):
        from covis.cli import render_overlay
        from covis.core import CropBox, ImageMeta, MatchSet

        meta = ImageMeta("o", 64, 64)
        img = np.zeros((64, 64))
        out = tmp_path / "overlay.png"
        render_overlay(img, MatchSet.empty(meta, meta), 1, out, box=CropBox(8, 8, 48, 40))
        from PIL import Image

        arr = np.asarray(Image.open(out).convert("RGB"))
        assert arr.shape == (64, 64, 3)
        # Box pixels drawn in the box color, rest untouched black.
        assert (arr[8, 8] != (0, 0, 0)).any()
        assert (arr[0, 0] == (0, 0, 0)).all()

    def test_stage_colors_and_inlier_rings(self, tmp_path):
        from covis.cli import render_overlay
        from covis.core import ImageMeta, Stage, build_match_set

        meta = ImageMeta("o", 64, 64)
        ms = build_match_set([[10, 10]], [[12, 12]], [1.0], meta, meta, "m", Stage.ONE).concat(
            build_match_set([[40, 40]], [[42, 42]], [1.0], meta, meta, "m", Stage.TWO)
        )
        out = tmp_path / "overlay.png"
        render_overlay(np.zeros((64, 64)), ms, 1, out, inliers=np.array([True, False]))
        from PIL import Image

        arr = np.asarray(Image.open(out).convert("RGB"))
        assert not (arr[10, 10] == arr[40, 40]).all()  # stage colors differ
