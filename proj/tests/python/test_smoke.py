import math
import os
from pathlib import Path

import numpy as np
import pytest

import dinsr


def smooth(h, w):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    img = np.stack(
        [128 + 90 * np.sin(0.3 * x) * np.cos(0.2 * y), 128 + 80 * np.cos(0.15 * (x + y)), 40 + 150 * x * y / (h * w)],
        axis=-1,
    )
    return np.round(img)


def test_profiles_and_counts():
    paper = dinsr.ModelConfig.profile("paper")
    assert (paper.branches, paper.wrdbs_per_branch, paper.rdbs_per_wrdb) == (4, 5, 3)
    counts = dinsr.count_parameters(dinsr.ModelConfig.profile("desk"))
    assert counts["total"] == 29736
    assert sum(v for k, v in counts.items() if k != "total") == counts["total"]


def test_config_errors_are_typed():
    with pytest.raises(dinsr.ConfigError, match="field 'growth'"):
        dinsr.ModelConfig.parse("growth = lots\n")
    cfg = dinsr.ModelConfig.profile("desk")
    cfg.set("scale=3")
    assert cfg.scale == 3
    with pytest.raises(dinsr.ConfigError):
        cfg.set("nope=1")


def test_resize_and_metrics():
    img = smooth(24, 20)
    down = dinsr.bicubic_resize(img, 1, 2)
    assert down.shape == (12, 10, 3)
    assert dinsr.bicubic_resize(np.full((6, 6, 3), 77.0), 1, 3).shape == (2, 2, 3)
    assert np.allclose(dinsr.bicubic_resize(np.full((6, 6, 3), 77.0), 1, 3), 77.0)
    assert math.isinf(dinsr.psnr_y(img, img, 2))
    assert dinsr.ssim_y(img, img, 2) == pytest.approx(1.0)
    y = dinsr.rgb_to_y(np.zeros((2, 2, 3)))
    assert np.allclose(y, 16.0)


def test_frozen_resize_fixture_first_case():
    lines = [l for l in (Path(os.environ["DIN_TEST_DATA_DIR"]) / "imresize_fixtures.txt").read_text().splitlines()
             if not l.startswith("#")]
    h, w, c, num, den, oh, ow = map(int, lines[0].split())
    src = np.array(lines[1].split(), dtype=float).reshape(c, h, w).transpose(1, 2, 0)
    want = np.array(lines[2].split(), dtype=float).reshape(c, oh, ow).transpose(1, 2, 0)
    got = dinsr.bicubic_resize(src, num, den)
    assert np.max(np.abs(got - want)) < 2e-6


def test_model_inference_shape_and_determinism(tmp_path):
    cfg = dinsr.ModelConfig.profile("desk")
    model = dinsr.Model(cfg, 7)
    assert model.parameter_count == 29736
    lr = smooth(8, 10)
    a = model.super_resolve(lr)
    assert a.shape == (16, 20, 3)
    assert np.array_equal(a, model.super_resolve(lr))
    weights = tmp_path / "w.dinw"
    model.save(weights)
    other = dinsr.Model(cfg, 99)
    other.load(weights)
    assert np.array_equal(other.super_resolve(lr, ensemble=True), model.super_resolve(lr, ensemble=True))
    cfg.growth = 4
    with pytest.raises(dinsr.ConfigError):
        dinsr.Model(cfg, 0).load(weights)


def test_short_training_run(tmp_path):
    hr = tmp_path / "hr"
    hr.mkdir()
    dinsr.write_png(hr / "a.png", smooth(24, 24))
    tc = dinsr.TrainConfig.profile("desk")
    tc.max_epochs, tc.steps_per_epoch, tc.lr_patch = 1, 3, 8
    records = dinsr.train(dinsr.ModelConfig.profile("desk"), tc, hr, tmp_path / "run")
    assert [r["step"] for r in records] == [0, 1, 2]
    assert all(math.isfinite(r["loss"]) for r in records)
    assert (tmp_path / "run" / "weights.dinw").exists()
