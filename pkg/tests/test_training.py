import csv

import pytest
import torch

from helpers import synthetic_dataset
from rgi.losses import LossConfig
from rgi.model import ModelConfig, RGIModel, load_checkpoint
from rgi.segmap import validate_labelmap
from rgi.training import (TrainConfig, Trainer, TrainingDiverged, ablation_config, hflip_batch, train,
                          trainable_parameters)


def tiny_config(**kw):
    return ModelConfig.create(resolution=16, style_dim=8, channel_base=4, channel_max=16, **kw)


@pytest.fixture(scope="module")
def data():
    return synthetic_dataset(16, seed=3, resolution=16)


def snapshot(module):
    return {k: v.clone() for k, v in module.state_dict().items()}


def same_state(a, b):
    return all(torch.equal(a[k], b[k]) for k in a)


def test_config_defaults():
    cfg = TrainConfig()
    assert cfg.lr == 1e-4 and cfg.betas == (0.9, 0.999) and cfg.flip_prob == 0.5
    assert cfg.resolved_milestones() == [2500, 3750]
    with pytest.raises(ValueError):
        TrainConfig(milestones=[10, 5])
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"nope": 1})


def test_ablation_configs():
    loss_a, train_a = ablation_config("A")
    assert loss_a.identity == 0.0
    assert loss_a.to_dict() == {**LossConfig().to_dict(), "identity": 0.0}
    assert train_a.to_dict() == TrainConfig().to_dict()
    loss_b, train_b = ablation_config("B")
    assert train_b.finetune_layers == [] and loss_b == LossConfig()
    with pytest.raises(ValueError):
        ablation_config("C")


def test_zero_steps_checkpoint_equals_init(data, tmp_path):
    init = RGIModel(tiny_config(), seed=5)
    res = train(data, TrainConfig(steps=0), seed=5, model_cfg=tiny_config(), out_dir=tmp_path)
    loaded, payload = load_checkpoint(res.checkpoint)
    assert payload["step"] == 0
    assert same_state(snapshot(init), snapshot(loaded))


def test_frozen_parameters_are_bit_identical(data):
    model = RGIModel(tiny_config(num_mask_layers=3), seed=0)
    before = snapshot(model.generator)
    trainable = {id(p) for p in trainable_parameters(model, [0, 1])}
    names = {n for n, p in model.generator.named_parameters() if id(p) not in trainable}
    trainer = Trainer(model, TrainConfig(steps=3, batch_size=4, finetune_layers=[0, 1]), LossConfig())
    for _ in range(3):
        trainer.step(*trainer.sample_batch(data, []))
    after = snapshot(model.generator)
    assert names and all(torch.equal(before[n], after[n]) for n in names)
    assert any(not torch.equal(before[n], after[n]) for n in before if n not in names)


def test_ablation_b_freezes_whole_generator(data):
    model = RGIModel(tiny_config(), seed=0)
    before_g, before_e = snapshot(model.generator), snapshot(model.encoder)
    _, train_cfg = ablation_config("B", train_cfg=TrainConfig(steps=3, batch_size=4))
    train(data, train_cfg, seed=0, model=model)
    assert same_state(before_g, snapshot(model.generator))
    assert not same_state(before_e, snapshot(model.encoder))


def test_all_zero_weights_leave_parameters_unchanged(data):
    model = RGIModel(tiny_config(), seed=0)
    before = snapshot(model)
    zero = LossConfig(l1=0, l2=0, perceptual=0, identity=0)
    trainer = Trainer(model, TrainConfig(steps=1, batch_size=4), zero)
    trainer.step(*trainer.sample_batch(data, []))
    assert same_state(before, snapshot(model))


def test_flip_keeps_correspondence(data):
    images, masks = data.images[:8], data.masks[:8]
    gen = torch.Generator().manual_seed(0)
    fi, fm = hflip_batch(images, masks, 0.5, gen)
    flipped = 0
    for i in range(8):
        was_flipped = torch.equal(fi[i], images[i].flip(-1)) and not torch.equal(fi[i], images[i])
        assert torch.equal(fm[i], masks[i].flip(-1) if was_flipped else masks[i])
        validate_labelmap(fm[i])
        flipped += was_flipped
    assert 0 < flipped < 8
    none = hflip_batch(images, masks, 0.0, gen)
    assert torch.equal(none[0], images) and torch.equal(none[1], masks)


def test_training_is_deterministic(data):
    cfg = TrainConfig(steps=4, batch_size=4)
    a = train(data, cfg, seed=9, model_cfg=tiny_config())
    b = train(data, cfg, seed=9, model_cfg=tiny_config())
    assert [h["total"] for h in a.history] == [h["total"] for h in b.history]
    assert same_state(snapshot(a.model), snapshot(b.model))


def test_divergence_aborts_with_diagnostics(data):
    with pytest.raises(TrainingDiverged, match="terms: l1="):
        train(data, TrainConfig(steps=5, batch_size=4, divergence_factor=0.5), model_cfg=tiny_config())


def test_requires_reconstruction_term(data):
    with pytest.raises(ValueError):
        train(data, TrainConfig(steps=1), LossConfig(l1=0, l2=0, perceptual=0), model_cfg=tiny_config())


def test_smoke_run_reduces_loss_and_writes_outputs(data, tmp_path):
    res = train(data, TrainConfig(steps=200, batch_size=4, checkpoint_every=100), seed=0,
                model_cfg=tiny_config(), out_dir=tmp_path)
    assert res.smoothed_final_loss(20) < res.initial_loss
    with open(res.metrics_path) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 200 and float(rows[0]["total"]) == pytest.approx(res.initial_loss, rel=1e-6)
    assert (tmp_path / "checkpoint_100.pt").exists() and res.checkpoint.exists()
    lrs = [float(rows[i]["lr"]) for i in (0, 99, 100, 149, 150, 199)]
    assert lrs == pytest.approx([1e-4, 1e-4, 1e-5, 1e-5, 1e-6, 1e-6])
