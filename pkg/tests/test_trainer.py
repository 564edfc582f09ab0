import json

import numpy as np
import pytest
import torch

from gridprompt import checkpoint as ckpt
from gridprompt.errors import ConfigurationError
from gridprompt.figures import build_dataset
from gridprompt.training import (TrainConfig, batched_indices, lr_at,
                                 parse_config_file, train_mae, train_vq)

TINY_VQ = dict(stage="vq", epochs=2, batch_size=4, vocab_size=8, codebook_dim=4,
               vq_channels=(4, 6, 8), seed=1)
TINY_MAE = dict(stage="mae", epochs=2, batch_size=4, vocab_size=8, codebook_dim=4,
                vq_channels=(4, 6, 8), embed_dim=16, depth=1, num_heads=2,
                decoder_embed_dim=16, decoder_depth=1, decoder_num_heads=2, seed=1)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("figs")
    build_dataset(12, root, rng_seed=9)
    return root / "manifest.jsonl"


@pytest.fixture(scope="module")
def tiny_vq_ckpt(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("vqckpt") / "vq.ckpt"
    cfg = TrainConfig(manifest=str(tiny_dataset), checkpoint=str(out), **TINY_VQ)
    result = train_vq(cfg)
    return result.checkpoint


def test_train_vq_smoke_and_checkpoint(tiny_vq_ckpt):
    model = ckpt.load_vq_model(tiny_vq_ckpt)
    assert model.config.vocab_size == 8
    log = json.loads(open(str(tiny_vq_ckpt) + ".log.jsonl").readlines()[-1])
    assert log["split"] == "val" and np.isfinite(log["loss"])


def test_train_vq_seed_determinism(tiny_dataset, tmp_path):
    results = []
    for name in ("r1", "r2"):
        cfg = TrainConfig(manifest=str(tiny_dataset),
                          checkpoint=str(tmp_path / f"{name}.ckpt"), **TINY_VQ)
        results.append(train_vq(cfg))
    h1 = results[0].history["train"][-1]["loss"]
    h2 = results[1].history["train"][-1]["loss"]
    assert h1 == h2
    s1 = {k: v.detach().numpy() for k, v in results[0].model.state_dict().items()}
    s2 = {k: v.detach().numpy() for k, v in results[1].model.state_dict().items()}
    for k in s1:
        assert np.array_equal(s1[k], s2[k]), k


def test_checkpoint_roundtrip_bit_exact(tiny_vq_ckpt, tmp_path):
    tensors, cfg = ckpt.load_checkpoint(tiny_vq_ckpt)
    again = tmp_path / "again.ckpt"
    ckpt.save_checkpoint(again, tensors, cfg)
    assert open(tiny_vq_ckpt, "rb").read() == open(again, "rb").read()


def test_train_mae_smoke_frozen_codebook(tiny_dataset, tiny_vq_ckpt, tmp_path):
    before = ckpt.load_checkpoint(tiny_vq_ckpt)[0]["codebook.weight"].copy()
    cfg = TrainConfig(manifest=str(tiny_dataset),
                      checkpoint=str(tmp_path / "mae.ckpt"), **TINY_MAE)
    result = train_mae(cfg, tiny_vq_ckpt)
    after = ckpt.load_checkpoint(tiny_vq_ckpt)[0]["codebook.weight"]
    assert before.tobytes() == after.tobytes()
    assert (tmp_path / "mae.ckpt").exists()
    assert len(result.history["val"]) == 2
    model = ckpt.load_mae_model(result.checkpoint)
    assert model.config.vocab_size == 8


def test_train_mae_geometry_mismatch(tiny_dataset, tiny_vq_ckpt, tmp_path):
    cfg = TrainConfig(manifest=str(tiny_dataset), checkpoint=str(tmp_path / "x.ckpt"),
                      **{**TINY_MAE, "vocab_size": 99})
    with pytest.raises(ConfigurationError):
        train_mae(cfg, tiny_vq_ckpt)


def test_train_resume_skips_retraining(tiny_dataset, tmp_path):
    cfg = TrainConfig(manifest=str(tiny_dataset), checkpoint=str(tmp_path / "r.ckpt"),
                      **TINY_VQ)
    first = train_vq(cfg)
    stamp = (tmp_path / "r.ckpt").stat().st_mtime_ns
    cfg2 = TrainConfig(manifest=str(tiny_dataset), checkpoint=str(tmp_path / "r.ckpt"),
                       **TINY_VQ)
    second = train_vq(cfg2, resume=True)
    assert (tmp_path / "r.ckpt").stat().st_mtime_ns == stamp
    assert second.history["val"][-1]["loss"] == first.history["val"][-1]["loss"]


def test_divergence_aborts(tiny_dataset, tmp_path):
    cfg = TrainConfig(manifest=str(tiny_dataset), checkpoint=str(tmp_path / "d.ckpt"),
                      **{**TINY_VQ, "base_lr": 1e18, "grad_clip": 1e18, "epochs": 3})
    with pytest.raises(RuntimeError, match="diverged"):
        train_vq(cfg)


def test_lr_schedule():
    cfg = TrainConfig(stage="mae", epochs=10, batch_size=64, base_lr=1e-3,
                      warmup_epochs=1.0)
    spe = 50
    base = cfg.effective_lr
    assert lr_at(0, cfg, spe) == 0.0
    assert lr_at(50, cfg, spe) == base  # end of warmup hits base exactly
    assert lr_at(500, cfg, spe) <= 1e-3 * base
    mid = lr_at(275, cfg, spe)  # halfway through cosine
    assert abs(mid - 0.5 * base) < 1e-12
    assert base == 1e-3 * 64 / 256


def test_config_defaults_and_validation():
    cfg = TrainConfig(stage="vq")
    assert cfg.epochs == 20
    cfg = TrainConfig(stage="mae")
    assert cfg.epochs == 100 and abs(cfg.warmup_epochs - 5.0) < 1e-12
    with pytest.raises(ConfigurationError):
        TrainConfig(stage="gan")
    with pytest.raises(ConfigurationError):
        TrainConfig(stage="mae", mask_ratio=1.2)


def test_parse_config_file(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("""
# comment line
stage = mae
manifest = data/manifest.jsonl
epochs = 7
batch_size = 16
base_lr = 0.002
vq_channels = 4,6,8
ce_all_positions = true
""")
    cfg = parse_config_file(path)
    assert cfg.stage == "mae" and cfg.epochs == 7 and cfg.batch_size == 16
    assert cfg.vq_channels == (4, 6, 8) and cfg.ce_all_positions is True
    over = parse_config_file(path, epochs=3, checkpoint="x.ckpt")
    assert over.epochs == 3 and over.checkpoint == "x.ckpt"  # flags win
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    with pytest.raises(ConfigurationError):
        parse_config_file(bad)


def test_batched_indices_groups_by_shape():
    imgs = [np.zeros((128, 128, 3), np.uint8)] * 5 + [np.zeros((160, 160, 3), np.uint8)] * 3
    batches = batched_indices(imgs, 4, np.random.default_rng(0))
    assert sum(len(b) for b in batches) == 8
    for b in batches:
        shapes = {imgs[i].shape for i in b}
        assert len(shapes) == 1
    # deterministic under the same rng seed
    again = batched_indices(imgs, 4, np.random.default_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(batches, again))
