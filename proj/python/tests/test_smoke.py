import numpy as np
import pytest

import catnet

SMALL = {"classes": 4, "pairs": 2, "samples_per_class": 6, "clutter": 3, "seed": 5}


def test_metrics_match_definitions():
    preds, labels = [0, 0, 1, 2, 2, 2], [0, 1, 1, 2, 2, 0]
    assert catnet.overall_accuracy(preds, labels) == pytest.approx(4 / 6)
    assert catnet.balanced_accuracy(preds, labels, [0, 1, 2]) == pytest.approx((1 / 2 + 1 / 2 + 1) / 3)
    report = catnet.metric_report(preds, labels, 3, {0: 1500, 1: 1501, 2: 20000})
    assert report["ba"] == pytest.approx(2 / 3)
    assert catnet.bucket_categories({0: 1500, 1: 1501, 2: 10001}) == {0: "few", 1: "med", 2: "many"}


def test_parameter_budget():
    total, backbone = catnet.parameter_count(catnet.profile_config("toy")["model"])
    assert total == 16644 and backbone == 12788


def test_bayes_and_render():
    assert catnet.bayes_center_accuracy({"classes": 8, "pairs": 4}) == pytest.approx(0.5)
    center, surr, glob = catnet.render_sample(3, {"classes": 8, "pairs": 4}, noise_seed=1)
    assert center.dtype == np.uint8 and center.shape[2] == 3
    assert center.shape[0] < surr.shape[0] < glob.shape[0]


def test_gradient_check_tiny():
    err, coords, passed = catnet.gradient_check(catnet.profile_config("tiny"), max_coordinates=200)
    assert passed and coords >= 200 and err < 1e-5


def test_train_evaluate_predict(tmp_path):
    catnet.generate_dataset(tmp_path / "data", SMALL)
    cfg = catnet.profile_config("toy")
    cfg["model"]["num_classes"] = 4
    cfg["steps"], cfg["epochs"], cfg["eval_every"] = 3, 0, 3
    out = catnet.train(tmp_path / "data", tmp_path / "model.ckpt", cfg)
    assert out["params_total"] > out["params_trainable"] > 0
    report = catnet.evaluate(tmp_path / "model.ckpt", tmp_path / "data", "test")
    assert 0.0 <= report["ba"] <= 1.0
    label, probs = catnet.predict(tmp_path / "model.ckpt", *catnet.render_sample(1, SMALL, 9))
    assert 0 <= label < 4 and sum(probs) == pytest.approx(1.0)

    raster = np.zeros((96, 160, 3), dtype=np.uint8)
    block_map = catnet.map_region(tmp_path / "model.ckpt", raster, 32)
    assert (block_map["rows"], block_map["cols"]) == (3, 5)
    scored = catnet.score_map(block_map, [{"row": 0, "col": 0, "category": "class_0"}])
    assert "oa" in scored


def test_errors_raise():
    with pytest.raises(catnet.CatnetError):
        catnet.bayes_center_accuracy({"prior": "bogus"})
