import os
import subprocess

import numpy as np
import pytest

import lca_augment as la


def rand_image(seed, h=24, w=32):
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_tables():
    assert len(la.sub_policies()) == 12
    assert la.probability_ladder() == pytest.approx([0.1, 0.3, 0.5, 0.7, 0.9])
    assert "Rotate" in la.operation_names()


def test_color_zero_is_gray():
    img = np.zeros((1, 1, 3), dtype=np.uint8)
    img[0, 0] = (200, 0, 0)
    assert la.apply_op("Color", img, 0.0)[0, 0].tolist() == [60, 60, 60]


def test_probability_zero_is_identity():
    img = rand_image(1)
    out, record = la.apply_policy(img, 0.0, 7)
    assert np.array_equal(out, img)
    assert record["fired"] is False


def test_replay_matches():
    img = rand_image(2)
    partner = rand_image(3)
    for seed in range(20):
        out, record = la.apply_policy(img, 1.0, seed, partners=[partner])
        assert out.shape == img.shape
        assert np.array_equal(la.replay(img, record, partners=[partner]), out)


def test_bad_input():
    with pytest.raises(ValueError):
        la.apply_op("Invert", rand_image(4))
    with pytest.raises(ValueError):
        la.apply_policy(rand_image(4), 1.5, 0)


def test_metrics():
    rep = la.metrics_report([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]], [0, 1, 1], ["A", "B"])
    assert rep["bacc"] == pytest.approx(0.75)


def test_cli_help():
    cli = os.environ.get("LCA_CLI")
    if not cli:
        pytest.skip("LCA_CLI not set")
    assert subprocess.run([cli, "--help"], capture_output=True).returncode == 0
