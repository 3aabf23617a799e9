import numpy as np
import pytest
import torch
import torch.nn.functional as F

from helpers import synthetic_dataset
from rgi.generator import locality_radius
from rgi.latent import SwapPlan
from rgi.model import ModelConfig, RGIModel
from rgi.pipeline import SwapRequest, blend, edit_mask_and_render, feathered_alpha, reconstruct, swap_faces
from rgi.segmap import BACKGROUND, EYEGLASS, HAIR, SKIN


@pytest.fixture(scope="module")
def model():
    cfg = ModelConfig.create(resolution=16, style_dim=8, channel_base=4, channel_max=16)
    return RGIModel(cfg, seed=0).eval()


@pytest.fixture(scope="module")
def data():
    return synthetic_dataset(6, seed=11, resolution=16, eyeglass_prob=0.5)


def test_reconstruct_contract(model, data):
    a = reconstruct(data.images[:2], data.masks[:2], model)
    b = reconstruct(data.images[:2], data.masks[:2], model)
    assert a.shape == (2, 3, 16, 16) and torch.equal(a, b)
    single = reconstruct(data.images[0], data.masks[0], model)
    assert single.shape == (3, 16, 16)
    with pytest.raises(ValueError):
        reconstruct(data.images[:2], data.masks[:1], model)


def test_self_swap_equals_reconstruct_in_face_region(model, data):
    for i in range(len(data)):
        img, m = data[i]
        out = swap_faces(SwapRequest(img, m, img, m, feather=0.0), model, seed=3)
        rec = reconstruct(img, m, model, seed=3)
        face = m != BACKGROUND
        assert torch.equal(out[:, face], rec[:, face])
        assert torch.equal(out[:, ~face], img[:, ~face])


def test_target_eyeglasses_survive(model):
    ds = synthetic_dataset(2, seed=5, resolution=16, eyeglass_prob=1.0)
    ds_d = synthetic_dataset(2, seed=6, resolution=16, eyeglass_prob=0.0)
    req = SwapRequest(ds.images[0], ds.masks[0], ds_d.images[1], ds_d.masks[1])
    _, parts = swap_faces(req, model, return_parts=True)
    glasses = ds.masks[0] == EYEGLASS
    assert glasses.any()
    assert (parts["mask"][glasses] == EYEGLASS).all()


def test_partial_swap_differs_from_endpoints(model, data):
    img_t, m_t = data[0]
    img_d, m_d = data[1]
    outs = [swap_faces(SwapRequest(img_t, m_t, img_d, m_d, SwapPlan(alpha=a)), model) for a in (0.0, 0.5, 1.0)]
    assert not torch.equal(outs[1], outs[0]) and not torch.equal(outs[1], outs[2])
    for o in outs:
        assert o.abs().max() <= 1


def test_blend_partition_and_range():
    g = torch.Generator().manual_seed(0)
    synth = torch.rand(1, 3, 16, 16, generator=g) * 4 - 2
    target = torch.rand(1, 3, 16, 16, generator=g) * 2 - 1
    region = torch.zeros(1, 16, 16, dtype=torch.bool)
    region[0, 5:9, 6:10] = True
    out = blend(synth, target, region, 1.5)
    support = feathered_alpha(region, 1.5)[:, 0] > 0
    assert torch.equal(out[:, :, ~support[0]], target[:, :, ~support[0]])
    assert out.abs().max() <= 1
    hard = blend(synth, target, region, 0.0)
    assert torch.equal(hard[:, :, region[0]], synth[:, :, region[0]].clamp(-1, 1))


def test_feathered_alpha_is_smooth_and_bounded():
    region = torch.zeros(1, 16, 16, dtype=torch.bool)
    region[0, 4:12, 4:12] = True
    a = feathered_alpha(region, 2.0)
    assert a.min() >= 0 and a.max() <= 1
    assert 0 < a[0, 0, 4, 8] < 1


def test_edit_identity_equals_reconstruct(model, data):
    img, m = data[2]
    assert torch.equal(edit_mask_and_render(img, m, m, model), reconstruct(img, m, model))
    with pytest.raises(ValueError):
        edit_mask_and_render(img, m, torch.zeros(8, 8, dtype=torch.long), model)


def test_removed_eyeglass_code_has_no_effect(model):
    ds = synthetic_dataset(1, seed=5, resolution=16, eyeglass_prob=1.0)
    img, m = ds[0]
    edited = m.clone()
    edited[edited == EYEGLASS] = SKIN
    with torch.no_grad():
        codes = model.encode(img[None], m[None])
        bumped = codes.clone()
        bumped[:, EYEGLASS] += 1.0
        a = model.synthesize(edited[None], codes)
        b = model.synthesize(edited[None], bumped)
    assert torch.equal(a, b)


def test_enlarged_hair_is_rendered_with_hair_code(model, data):
    img, m = data[3]
    edited = m.clone()
    edited[:4] = torch.where(edited[:4] == BACKGROUND, torch.full_like(edited[:4], HAIR), edited[:4])
    with torch.no_grad():
        codes = model.encode(img[None], m[None])
        bumped = codes.clone()
        bumped[:, HAIR] += torch.randn_like(bumped[:, HAIR])
        diff = (model.synthesize(edited[None], bumped) - model.synthesize(edited[None], codes))[0]
    rho = locality_radius(model.config.generator, edited, HAIR)
    hair = (edited == HAIR).double()[None, None]
    near = F.max_pool2d(hair, 2 * rho + 1, stride=1, padding=rho)[0, 0] > 0
    assert (diff[:, ~near] == 0).all()
    newly = (edited == HAIR) & (m != HAIR)
    assert diff[:, newly].abs().max() > 0


def test_shape_mismatch_between_pairs(model, data):
    with pytest.raises(ValueError):
        swap_faces(SwapRequest(data.images[0], data.masks[0], data.images[:2], data.masks[:2]), model)


def test_swap_is_batched_consistently(model, data):
    req_b = SwapRequest(data.images[:2], data.masks[:2], data.images[2:4], data.masks[2:4])
    out = swap_faces(req_b, model)
    for i in range(2):
        single = swap_faces(SwapRequest(data.images[i], data.masks[i], data.images[2 + i], data.masks[2 + i]), model)
        np.testing.assert_allclose(out[i].numpy(), single.numpy(), atol=1e-5)
