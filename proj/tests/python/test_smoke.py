import json

import numpy as np
import pytest

import painforge as pf


def test_pspi_score():
    assert pf.pspi_score([2, 3, 1, 0, 2, 1]) == 8
    assert pf.pspi_score([0] * 6) == 0
    assert pf.pspi_score([5, 5, 5, 5, 5, 1]) == 16
    assert pf.pspi_score(pf.sample_au_config(7, 3)) == 7
    with pytest.raises(pf.ParameterError):
        pf.sample_au_config(17, 0)


def test_metrics():
    assert pf.binary_auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(pf.UndefinedMetricError):
        pf.binary_auroc([0.1, 0.2], [1, 1])
    labels = np.array([0, 1, 2, 0, 1, 2])
    assert pf.macro_auroc(np.eye(17)[labels], labels) == 1.0
    assert pf.tolerance_accuracy([3, 0, 10], [4, 0, 16], 1) == pytest.approx(2 / 3)
    assert pf.binarize_pspi([2, 3], 3) == [0, 1]
    assert pf.f1_binary([1, 1, 1, 0], [1, 1, 0, 1]) == pytest.approx(2 / 3)
    folds = pf.subject_kfold(list(range(25)), 5, 0)
    assert sorted(len(f) for f in folds) == [5] * 5
    assert sorted(s for f in folds for s in f) == list(range(25))


def test_au_cross_attention():
    patches = np.zeros((1, 2, 2))
    patches[0, 0] = [1.0, 0.0]
    patches[0, 1] = [0.0, 3.0]
    queries = np.zeros((6, 2))
    queries[:, 1] = np.sqrt(2.0)
    feats, alpha = pf.au_cross_attention(patches, queries)
    assert feats.shape == (1, 6, 2)
    assert alpha.shape == (1, 6, 2)
    assert np.allclose(alpha.sum(axis=-1), 1.0)
    e = np.exp([0.0, 3.0])
    assert np.allclose(alpha[0, 0], e / e.sum())


TOY = """seed = 1
output_root = {root}
dataset.identities = 6
dataset.expressions = 2
dataset.views = 1
dataset.resolution = 32
model.hidden_dim = 16
model.num_layers = 1
model.num_heads = 2
train.epochs = 1
train.freeze_epochs = 0
train.batch_size = 8
"""


def test_generate_train_evaluate(tmp_path):
    cfg = tmp_path / "toy.conf"
    cfg.write_text(TOY.format(root=tmp_path / "runs"))
    result, log = pf.generate(str(cfg), out=str(tmp_path / "data"))
    assert result.frames == 18
    assert result.heatmaps == 12
    assert "frames: 18" in log

    ckpt, _ = pf.train(str(cfg), "student", str(tmp_path / "data"), out=str(tmp_path / "ck"))
    config, meta = pf.load_checkpoint_config(ckpt)
    assert json.loads(config)["in_channels"] == 3
    assert json.loads(meta)["role"] == "student"

    report, _ = pf.evaluate([ckpt], str(tmp_path / "data"), thresholds=[2, 3])
    report = json.loads(report)
    assert len(report["folds"]) == 1
    assert [b["threshold"] for b in report["aggregate"]["binary"]] == [2, 3]

    with pytest.raises(pf.ConfigError):
        pf.train(str(cfg), "baseline", str(tmp_path / "data"), teacher=ckpt)


def test_config_hash_ignores_layout():
    a = pf.config_hash("seed = 3\ndataset.identities = 10\n")
    b = pf.config_hash("# comment\ndataset.identities=10\n\nseed=3\n")
    assert a == b
    assert a != pf.config_hash("seed = 4\ndataset.identities = 10\n")
    with pytest.raises(pf.ConfigError):
        pf.config_hash("nonsense = 1\n")
