import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from nerfstream import image_codec, param_codec, pipeline
from nerfstream.config import load_config
from nerfstream.eval import import_csv, rate_bpp
from nerfstream.field import camera_rays, read_checkpoint
from nerfstream.pipeline import (
    ExperimentConfig,
    add_noise,
    prepare,
    run_anchor,
    run_experiment,
    run_param_strategy,
    run_pixel_strategy,
)

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.cfg"


@pytest.fixture(scope="module")
def cfg():
    return load_config(SMOKE, ["train.iterations=80", "trajectory.train.view_count=4", "trajectory.test.view_count=2"])


@pytest.fixture(scope="module")
def prep(cfg):
    return prepare(cfg)


@pytest.fixture(scope="module")
def anchor(cfg, prep):
    return run_anchor(cfg, prep)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(strategies=("magic",))
    with pytest.raises(ValueError):
        ExperimentConfig(param_qp_ladder=(-20, -24, -16))
    with pytest.raises(ValueError):
        ExperimentConfig(pixel_qp_ladder=(30, 60))
    with pytest.raises(ValueError):
        ExperimentConfig(noise_amplitude=-0.1)
    assert ExperimentConfig().to_dict()["width"] == 64


def test_prepare_is_deterministic(cfg, prep):
    again = prepare(cfg)
    for a, b in zip(prep.train_set.images, again.train_set.images):
        np.testing.assert_array_equal(a, b)
    assert prep.test_poses == again.test_poses
    assert prep.encoding == again.encoding


def test_encoding_box_covers_every_sample(cfg, prep):
    enc = prep.encoding
    c = np.array(enc.center)
    for p in list(prep.train_set.poses) + prep.test_poses:
        o, d = camera_rays(p, cfg.width, cfg.height)
        for t in np.linspace(cfg.render.t_near, cfg.render.t_far, 5):
            assert np.abs((o + t * d - c) / enc.scale).max() <= 1.0


def test_add_noise_bounded_and_seeded(rng):
    images = [rng.random((8, 8, 3)) for _ in range(3)]
    a = add_noise(images, 8 / 255, 3)
    b = add_noise(images, 8 / 255, 3)
    for im, x, y in zip(images, a, b):
        np.testing.assert_array_equal(x, y)
        assert np.abs(x - im).max() <= 8 / 255
        assert x.min() >= 0 and x.max() <= 1
    assert not np.array_equal(a[0], add_noise(images, 8 / 255, 4)[0])


def test_anchor_reports_checkpoint_size(cfg, prep, anchor):
    res, model = anchor
    assert res.strategy == "anchor" and not res.streamable
    assert res.total_bits == 8 * len(res.bitstream)
    assert read_checkpoint(res.bitstream, model).num_params() == model.num_params()
    assert len(res.psnr) == len(prep.test_poses)
    assert res.mean_psnr > 10.0  # 80 iterations: far from converged, but learning


def test_param_strategy_counts_only_the_parameter_stream(cfg, prep, anchor):
    _, model = anchor
    res = run_param_strategy(cfg, -20, prep, model)
    assert res.total_bits == param_codec.encode_model(model, -20, cfg.quantizer).bit_length
    assert res.total_bits == 8 * len(res.bitstream)
    assert res.streamable


def test_param_strategy_reuse_matches_fresh_training(cfg, prep, anchor):
    _, model = anchor
    reused = run_param_strategy(cfg, -16, prep, model)
    fresh = run_param_strategy(cfg, -16, prep)
    assert reused.bitstream == fresh.bitstream
    assert reused.psnr == fresh.psnr


@pytest.mark.parametrize("mode", ["inter", "intra"])
def test_pixel_strategy_counts_whole_image_stream(cfg, prep, mode):
    res = run_pixel_strategy(cfg, 39, mode, prep)
    bs = image_codec.encode_sequence(prep.train_set.images, prep.train_set.poses, mode, 39)
    assert res.bitstream == bs.data
    assert res.total_bits == bs.bit_length
    assert res.strategy == f"pixel_based/{mode}"


def test_experiment_layout(cfg, tmp_path):
    small = replace(cfg, codec_modes=("inter",))
    exp = run_experiment(small, tmp_path)
    assert not exp.failures
    assert len(exp.results) == len(small.param_qp_ladder) + len(small.pixel_qp_ladder)
    names = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert names == ["anchor", "param_based_qp-16", "param_based_qp-24", "pixel_based_inter_qp30", "pixel_based_inter_qp45"]
    m = json.loads((tmp_path / "param_based_qp-24" / "metrics.json").read_text())
    assert m["total_bits"] == 8 * (tmp_path / "param_based_qp-24" / "bitstream.nncb").stat().st_size
    assert len(list((tmp_path / "anchor").glob("test_*.nsb"))) == len(m["psnr_db"])
    curves = import_csv(tmp_path / "rd.csv")
    assert {c.strategy for c in curves} == {"param_based", "pixel_based/inter"}
    n = small.test_trajectory.view_count
    for c in curves:
        for p in c.points:
            assert p.rate == rate_bpp(p.bits, n, small.width, small.height)
            assert c.anchor_psnr == exp.anchor.mean_psnr


def test_failing_point_is_isolated(cfg, prep, monkeypatch, tmp_path):
    real = pipeline.run_pixel_strategy

    def flaky(c, qp, mode="inter", p=None):
        if qp == 45:
            raise RuntimeError("boom")
        return real(c, qp, mode, p)

    monkeypatch.setattr(pipeline, "run_pixel_strategy", flaky)
    small = replace(cfg, strategies=("pixel_based",), codec_modes=("inter",), pixel_qp_ladder=(30, 45, 51))
    exp = run_experiment(small, tmp_path)
    assert [r.qp for r in exp.results] == [30, 51]
    assert exp.failures == [("pixel_based/inter", 45, "RuntimeError: boom")]
    assert json.loads((tmp_path / "failures.json").read_text()) == [["pixel_based/inter", 45, "RuntimeError: boom"]]


@pytest.mark.slow
def test_parallel_workers_give_identical_results(cfg):
    small = replace(cfg, strategies=("param_based",))
    a = run_experiment(small, workers=1)
    b = run_experiment(small, workers=2)
    assert [r.bitstream for r in a.results] == [r.bitstream for r in b.results]
    assert [r.psnr for r in a.results] == [r.psnr for r in b.results]
