"""Label-map recomposition for swapping: stitch target and driven layouts, then
fill unclaimed pixels with face skin."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from rgi.latent import SwapPlan, swap_styles
from rgi.segmap import (BACKGROUND, EAR_RINGS, EARS, EYEBROWS, EYEGLASS, EYES, HAIR, LIPS, MOUTH,
                        NECK, NOSE, NUM_CATEGORIES, SKIN, LabelMapError, validate_labelmap)

TARGET, DRIVEN = "target", "driven"


@dataclass(frozen=True)
class StitchLayer:
    source: str
    categories: frozenset[int]

    def __post_init__(self):
        if self.source not in (TARGET, DRIVEN):
            raise ValueError(f"layer source must be {TARGET!r} or {DRIVEN!r}, got {self.source!r}")
        object.__setattr__(self, "categories", frozenset(int(c) for c in self.categories))
        bad = [c for c in self.categories if not 0 <= c < NUM_CATEGORIES]
        if bad:
            raise ValueError(f"stitch layer categories out of range: {sorted(bad)}")


def _default_layers() -> tuple[StitchLayer, ...]:
    return (
        StitchLayer(TARGET, frozenset({NECK, BACKGROUND})),
        StitchLayer(DRIVEN, frozenset({SKIN, EYEBROWS, EYES, NOSE, LIPS, MOUTH})),
        StitchLayer(TARGET, frozenset({HAIR, EYEGLASS, EARS, EAR_RINGS})),
    )


@dataclass(frozen=True)
class StitchRule:
    """Layers are applied in order; later layers overwrite earlier ones."""

    layers: tuple[StitchLayer, ...] = field(default_factory=_default_layers)
    hole_fill: int = SKIN

    @classmethod
    def from_dict(cls, cfg: dict) -> "StitchRule":
        layers = tuple(StitchLayer(layer["source"], frozenset(layer["categories"]))
                       for layer in cfg.get("layers", []))
        return cls(layers or _default_layers(), int(cfg.get("hole_fill", SKIN)))


def recompose_mask(m_t, m_d, rule: StitchRule | None = None):
    """Returns ``(m_swap, hole_count)``. For batched (B, H, W) input the hole
    count is a per-sample tensor."""
    rule = rule or StitchRule()
    m_t = validate_labelmap(m_t)
    m_d = validate_labelmap(m_d)
    if m_t.shape != m_d.shape:
        raise LabelMapError(f"resolution mismatch: target {tuple(m_t.shape)} vs driven {tuple(m_d.shape)}")
    out = torch.full_like(m_t, -1)
    for layer in rule.layers:
        src = m_t if layer.source == TARGET else m_d
        cats = torch.tensor(sorted(layer.categories), dtype=src.dtype)
        claim = torch.isin(src, cats)
        out = torch.where(claim, src, out)
    holes = out < 0
    out = torch.where(holes, torch.full_like(out, rule.hole_fill), out)
    count = holes.sum(dim=(-2, -1))
    return out, (int(count) if m_t.dim() == 2 else count)


def recompose_pair(m_t, m_d, s_t: torch.Tensor, s_d: torch.Tensor, plan: SwapPlan = SwapPlan(),
                   rule: StitchRule | None = None):
    """Shape from the stitch rule, texture from the swap plan."""
    m_swap, _ = recompose_mask(m_t, m_d, rule)
    return m_swap, swap_styles(s_t, s_d, plan)
