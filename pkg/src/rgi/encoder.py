"""Mask-guided multi-scale encoder: image + label map -> regional style codes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from rgi.segmap import NUM_CATEGORIES, downsample_mask, masked_avg_pool_all, validate_labelmap

LRELU_SLOPE = 0.2


@dataclass
class EncoderConfig:
    resolution: int = 64
    style_dim: int = 64
    num_layers: int = 10
    num_scales: int | None = None
    channel_base: int = 16
    channel_max: int = 128
    hidden_mult: int = 2
    num_regions: int = NUM_CATEGORIES

    def __post_init__(self):
        r = self.resolution
        if r < 4 or r & (r - 1):
            raise ValueError(f"resolution must be a power of two >= 4, got {r}")
        if self.num_scales is None:
            self.num_scales = int(math.log2(r)) - 1
        if not 1 <= self.num_scales <= int(math.log2(r)) - 1:
            raise ValueError(f"num_scales={self.num_scales} must leave the coarsest grid at >= 4x4")

    def scale_resolutions(self) -> list[int]:
        return [self.resolution >> i for i in range(self.num_scales)]

    def channels(self) -> list[int]:
        return [min(self.channel_max, self.channel_base * 2 ** i) for i in range(self.num_scales)]

    @property
    def pooled_dim(self) -> int:
        return sum(self.channels())

    def to_dict(self) -> dict:
        return asdict(self)


class Backbone(nn.Module):
    """Plain conv pyramid. Scale 0 is a stride-1 stem at full resolution; every
    later scale halves the grid with a stride-2 conv followed by a 3x3 conv."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        chans = config.channels()
        self.stem = nn.Conv2d(3, chans[0], 3, padding=1)
        self.down = nn.ModuleList()
        self.refine = nn.ModuleList()
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            self.down.append(nn.Conv2d(c_in, c_out, 3, stride=2, padding=1))
            self.refine.append(nn.Conv2d(c_out, c_out, 3, padding=1))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = F.leaky_relu(self.stem(x), LRELU_SLOPE)
        feats = [x]
        for down, refine in zip(self.down, self.refine):
            x = F.leaky_relu(down(x), LRELU_SLOPE)
            x = F.leaky_relu(refine(x), LRELU_SLOPE)
            feats.append(x)
        return feats


class StyleHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.LeakyReLU(LRELU_SLOPE),
            nn.Linear(hidden, hidden), nn.LeakyReLU(LRELU_SLOPE),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return self.net(v)


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config = config or EncoderConfig()
        self.backbone = Backbone(config)
        hidden = config.hidden_mult * config.style_dim
        self.heads = nn.ModuleList(
            StyleHead(config.pooled_dim, hidden, config.style_dim) for _ in range(config.num_layers))

    def extract_features(self, images: torch.Tensor) -> list[torch.Tensor]:
        r = self.config.resolution
        if images.dim() != 4 or images.shape[1] != 3 or images.shape[-2:] != (r, r):
            raise ValueError(f"expected images of shape (B, 3, {r}, {r}), got {tuple(images.shape)}")
        return self.backbone(images)

    def pool(self, feats: list[torch.Tensor], labels: torch.Tensor) -> torch.Tensor:
        """Concatenated per-region multi-scale vectors, (B, C, sum of channels)."""
        c = self.config.num_regions
        pooled = [masked_avg_pool_all(f, downsample_mask(labels, f.shape[-1]), c) for f in feats]
        return torch.cat(pooled, dim=-1)

    def encode(self, images: torch.Tensor, labels) -> torch.Tensor:
        """(B, 3, R, R) images and (B, R, R) labels -> (B, C, L, D) codes."""
        labels = validate_labelmap(labels, self.config.num_regions)
        if labels.dim() == 2:
            labels = labels[None]
        if labels.shape[0] != images.shape[0] or labels.shape[-2:] != images.shape[-2:]:
            raise ValueError(f"mask shape {tuple(labels.shape)} does not match images {tuple(images.shape)}")
        v = self.pool(self.extract_features(images), labels.to(images.device))
        return torch.stack([head(v) for head in self.heads], dim=2)

    forward = encode
