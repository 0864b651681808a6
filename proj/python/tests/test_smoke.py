import math

import numpy as np
import pytest

import altinc

SMALL = {
    "num_sources": "2",
    "images_per_source": "4",
    "target_images": "4",
    "image_height": "12",
    "image_width": "12",
    "pretrain_epochs": "1",
    "epochs_per_round": "1",
    "max_rounds": "1",
}


def test_config_round_trip_and_errors():
    text = altinc.config_text("seed = 3\n", {"lr": "0.05"})
    assert "lr = 0.05" in text
    assert altinc.config_text(text) == text
    with pytest.raises(altinc.ConfigError, match="foo"):
        altinc.config_text("foo = 1\n")


def test_generate_shapes():
    sources, (images, labels) = altinc.generate(overrides=SMALL)
    assert len(sources) == 2
    assert len(images) == 4
    assert images[0].shape == (3, 12, 12)
    assert labels[0].dtype == np.uint8
    assert labels[0].max() < 5


def test_softmax_and_pseudo_labels():
    p = altinc.softmax(np.zeros((4, 2, 3)))
    assert np.allclose(p, 0.25)
    labels, conf = altinc.pseudo_labels(p)
    assert (labels == 0).all()
    assert np.allclose(conf, 0.25)


def test_boundless_relabel_thresholds():
    # class 1 pixels at confidences 0.6 and 0.9; tau = 0.85 * 0.9
    probs = np.array([[[0.4, 0.1]], [[0.6, 0.9]]])
    out, tau, relabeled = altinc.boundless_relabel(probs, 2, {2: [1]}, 0.85)
    assert tau[1] == pytest.approx(0.765)
    assert tau[0] is None
    assert out.tolist() == [[2, 1]]
    assert relabeled == 1


def test_selection_and_weights():
    assert altinc.select_best_source([0.4, 0.1, 0.3]) == 1
    w = altinc.distillation_weights([0.0, 0.2, 0.4], 0, 5.0)
    assert w[0] == pytest.approx(math.exp(-1) / (math.exp(-1) + math.exp(-2)))
    with pytest.raises(altinc.ValueError):
        altinc.select_best_source([0.3])


def test_evaluate_identity():
    gt = np.array([[0, 1], [1, 1]], dtype=np.uint8)
    r = altinc.evaluate([gt], [gt], 3, [0, 1, 2])
    assert r["accuracy"] == 1.0
    assert r["miou_shared"] == 1.0
    assert r["iou"][2] is None


def test_probmap_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    p = rng.random((3, 4, 5))
    p /= p.sum(axis=0, keepdims=True)
    path = tmp_path / "p.altpm"
    altinc.save_probmap(path, p)
    assert np.array_equal(altinc.load_probmap(path), p)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(altinc.FormatError):
        altinc.load_probmap(path)


def test_tiny_pipeline(tmp_path):
    altinc.set_log_level("error")
    altinc.run(tmp_path / "run", overrides=SMALL)
    assert (tmp_path / "run" / "eval" / "summary.jsonl").exists()
    labels = altinc.read_labels(tmp_path / "run" / "altinc" / "final" / "label_0000.pgm")
    assert labels.shape == (12, 12)
