"""End-to-end swapping and editing on top of a trained :class:`RGIModel`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from rgi.latent import SwapPlan
from rgi.model import RGIModel
from rgi.recompose import StitchRule, recompose_pair
from rgi.segmap import BACKGROUND, validate_labelmap

DEFAULT_FEATHER = 2.0


@dataclass
class SwapRequest:
    target_image: torch.Tensor
    target_mask: torch.Tensor
    driven_image: torch.Tensor
    driven_mask: torch.Tensor
    plan: SwapPlan = field(default_factory=SwapPlan)
    feather: float = DEFAULT_FEATHER
    rule: StitchRule | None = None


def _batched(images: torch.Tensor, labels) -> tuple[torch.Tensor, torch.Tensor, bool]:
    labels = validate_labelmap(labels)
    single = images.dim() == 3
    if single:
        images = images[None]
    if labels.dim() == 2:
        labels = labels[None]
    if images.shape[0] != labels.shape[0] or images.shape[-2:] != labels.shape[-2:]:
        raise ValueError(f"image shape {tuple(images.shape)} does not match mask {tuple(labels.shape)}")
    return images, labels, single


def gaussian_kernel(sigma: float) -> torch.Tensor:
    radius = max(1, math.ceil(3 * sigma))
    x = torch.arange(-radius, radius + 1, dtype=torch.float32)
    k = torch.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def feathered_alpha(region: torch.Tensor, feather: float) -> torch.Tensor:
    """(B, H, W) binary region -> (B, 1, H, W) alpha in [0, 1]. Separable Gaussian
    with a 3-sigma support; ``feather == 0`` returns the hard region."""
    a = region.to(torch.float32)[:, None]
    if feather <= 0:
        return a
    k = gaussian_kernel(feather)
    r = k.numel() // 2
    a = F.conv2d(F.pad(a, (r, r, 0, 0)), k.view(1, 1, 1, -1))
    a = F.conv2d(F.pad(a, (0, 0, r, r)), k.view(1, 1, -1, 1))
    return a.clamp(0.0, 1.0)


def blend(synth: torch.Tensor, target: torch.Tensor, region: torch.Tensor, feather: float) -> torch.Tensor:
    alpha = feathered_alpha(region, feather)
    out = alpha * synth + (1.0 - alpha) * target
    return out.clamp(-1.0, 1.0)


@torch.no_grad()
def reconstruct(images: torch.Tensor, labels, model: RGIModel, seed: int = 0) -> torch.Tensor:
    images, labels, single = _batched(images, labels)
    out = model.synthesize(labels, model.encode(images, labels), seed)
    return out[0] if single else out


@torch.no_grad()
def swap_faces(req: SwapRequest, model: RGIModel, seed: int = 0, return_parts: bool = False):
    """Encode both pairs, recompose shape and texture, synthesize, then blend the
    synthesized face into the target over the non-background recomposed region."""
    it, mt, single = _batched(req.target_image, req.target_mask)
    idr, md, _ = _batched(req.driven_image, req.driven_mask)
    if it.shape != idr.shape:
        raise ValueError(f"target {tuple(it.shape)} and driven {tuple(idr.shape)} differ in shape")
    s_t = model.encode(it, mt)
    s_d = model.encode(idr, md)
    m_swap, s_swap = recompose_pair(mt, md, s_t, s_d, req.plan, req.rule)
    synth = model.synthesize(m_swap, s_swap, seed)
    out = blend(synth, it, m_swap != BACKGROUND, req.feather)
    if single:
        out, synth, m_swap = out[0], synth[0], m_swap[0]
    if return_parts:
        return out, {"mask": m_swap, "styles": s_swap, "synthesized": synth}
    return out


@torch.no_grad()
def edit_mask_and_render(images: torch.Tensor, labels, edited_labels, model: RGIModel,
                         seed: int = 0) -> torch.Tensor:
    images, labels, single = _batched(images, labels)
    edited = validate_labelmap(edited_labels)
    if edited.dim() == 2:
        edited = edited[None]
    if edited.shape != labels.shape:
        raise ValueError(f"edited mask {tuple(edited.shape)} does not match original {tuple(labels.shape)}")
    out = model.synthesize(edited, model.encode(images, labels), seed)
    return out[0] if single else out
