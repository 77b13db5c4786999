import json
import math

import numpy as np
import pytest

tfwt = pytest.importorskip("tfwt")


def small_config(out):
    return {
        "synthetic": "gated",
        "synthetic_rows": 400,
        "seeds": [0],
        "encoder": {"layers": 1, "heads": 2, "d_model": 8},
        "train": {"epochs": 2},
        "ppo": {"rounds": 2, "steps": 4},
        "models": ["lr", "nb"],
        "output_dir": str(out),
    }


def test_mutual_information_and_rdd():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4000)
    assert tfwt.mutual_information(x, x) > 2.0
    assert abs(tfwt.mutual_information(rng.uniform(size=10000), rng.uniform(size=10000))) < 0.02
    value, pairs = tfwt.rdd(np.column_stack([x, x]))
    assert pairs.shape == (2, 2)
    assert math.isclose(value, pairs.sum() / 4)


def test_clipped_surrogate():
    assert tfwt.clipped_surrogate(1.0, 2.5, 0.2) == 2.5
    assert math.isclose(tfwt.clipped_surrogate(1.4, 2.0, 0.2), 2.4)


def test_synthetic_shapes():
    x, y = tfwt.synthetic("gated", 100, 1)
    assert x.shape == (100, 20)
    assert len(y) == 100


def test_config_errors():
    with pytest.raises(tfwt.ConfigError, match="epochz"):
        tfwt.normalize_config({"synthetic": "gated", "train": {"epochz": 1}})
    cfg = tfwt.normalize_config({"synthetic": "gated"})
    assert cfg["train"]["epochs"] == tfwt.default_config()["train"]["epochs"]


def test_missing_schema_is_data_error(tmp_path):
    cfg = {"dataset": "data/magic04.csv", "schema": str(tmp_path / "none.json")}
    with pytest.raises(tfwt.DataError, match="none.json"):
        tfwt.score(cfg)


def test_pipeline(tmp_path):
    cfg = small_config(tmp_path)
    tfwt.train(cfg)
    assert (tmp_path / "ckpt_seed0.tfwt").exists()
    log, warnings = tfwt.finetune(cfg)
    assert (tmp_path / "ckpt_seed0_ft.tfwt").exists()
    metrics = tfwt.evaluate(cfg)
    assert json.loads((tmp_path / "metrics.json").read_text()) == metrics
    report = tfwt.score(cfg, tmp_path / "weights.csv")
    assert report["rdd"] > 0
