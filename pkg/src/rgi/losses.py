"""Reconstruction objective with pluggable perceptual and identity embedders."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import torch
import torch.nn as nn
import torch.nn.functional as F

TERMS = ("l1", "l2", "perceptual", "identity", "adversarial")
RECONSTRUCTION_TERMS = ("l1", "l2", "perceptual")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term: str, value: float):
        super().__init__(f"loss term {term!r} is not finite ({value})")
        self.term = term


@dataclass
class LossConfig:
    l1: float = 1.0
    l2: float = 1.0
    perceptual: float = 0.5
    identity: float = 0.1
    adversarial: float = 0.0
    embedder_seed: int = 1234

    def __post_init__(self):
        for name in TERMS:
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {getattr(self, name)}")

    def active(self) -> list[str]:
        return [t for t in TERMS if getattr(self, t) > 0]

    def check_trainable(self) -> None:
        if not any(getattr(self, t) > 0 for t in RECONSTRUCTION_TERMS):
            raise ValueError(f"at least one of {RECONSTRUCTION_TERMS} must have a positive weight")

    @classmethod
    def from_dict(cls, cfg: dict | None) -> "LossConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(cfg or {}) - known
        if unknown:
            raise ValueError(f"unknown loss config keys: {sorted(unknown)}")
        return cls(**(cfg or {}))

    def to_dict(self) -> dict:
        return asdict(self)


class RandomConvEmbedder(nn.Module):
    """Frozen, seeded, randomly initialized conv stack. Returns a list of
    intermediate feature maps; ``embed`` pools the last one into a vector."""

    def __init__(self, seed: int = 1234, widths=(16, 32, 64), embed_dim: int = 64):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers = []
        c_in = 3
        for c_out in widths:
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) / (c_in * 9) ** 0.5)
                conv.bias.zero_()
            layers.append(conv)
            c_in = c_out
        self.convs = nn.ModuleList(layers)
        self.proj = nn.Linear(c_in, embed_dim, bias=False)
        with torch.no_grad():
            self.proj.weight.copy_(torch.randn(self.proj.weight.shape, generator=g) / c_in ** 0.5)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(self.forward(x)[-1].mean(dim=(-2, -1)))


class Discriminator(nn.Module):
    def __init__(self, resolution: int = 64, width: int = 16, max_width: int = 128):
        super().__init__()
        layers = []
        c_in, r = 3, resolution
        while r > 4:
            c_out = min(max_width, width)
            layers += [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            c_in, width, r = c_out, width * 2, r // 2
        self.features = nn.Sequential(*layers)
        self.out = nn.Linear(c_in * 16, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.out(self.features(x).flatten(1)).squeeze(-1)


@dataclass
class LossNetworks:
    perceptual: Callable[[torch.Tensor], list[torch.Tensor]] | None = None
    identity: Callable[[torch.Tensor], torch.Tensor] | None = None
    discriminator: Callable[[torch.Tensor], torch.Tensor] | None = None

    @classmethod
    def default(cls, cfg: LossConfig, discriminator: nn.Module | None = None) -> "LossNetworks":
        net = RandomConvEmbedder(cfg.embedder_seed)
        return cls(perceptual=net, identity=net.embed, discriminator=discriminator)


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, net) -> torch.Tensor:
    fa, fb = net(a), net(b)
    return sum(F.mse_loss(x, y) for x, y in zip(fa, fb)) / len(fa)


def identity_distance(a: torch.Tensor, b: torch.Tensor, embed) -> torch.Tensor:
    return (1.0 - F.cosine_similarity(embed(a), embed(b), dim=-1)).mean()


def reconstruction_loss(real: torch.Tensor, fake: torch.Tensor, cfg: LossConfig,
                        nets: LossNetworks | None = None):
    """Weighted sum of active terms. Returns ``(total, breakdown)`` where the
    breakdown maps term name to its unweighted float value."""
    if real.shape != fake.shape:
        raise ValueError(f"shape mismatch {tuple(real.shape)} vs {tuple(fake.shape)}")
    nets = nets or LossNetworks.default(cfg)
    values: dict[str, torch.Tensor] = {}
    if cfg.l1 > 0:
        values["l1"] = (fake - real).abs().mean()
    if cfg.l2 > 0:
        values["l2"] = (fake - real).pow(2).mean()
    if cfg.perceptual > 0:
        values["perceptual"] = perceptual_distance(fake, real, nets.perceptual)
    if cfg.identity > 0:
        values["identity"] = identity_distance(fake, real, nets.identity)
    if cfg.adversarial > 0:
        if nets.discriminator is None:
            raise ValueError("adversarial weight > 0 requires a discriminator")
        values["adversarial"] = F.softplus(-nets.discriminator(fake)).mean()
    total = real.new_zeros(())
    breakdown = {}
    for name, v in values.items():
        fv = float(v.detach())
        if not torch.isfinite(v.detach()).all():
            raise NonFiniteLossError(name, fv)
        breakdown[name] = fv
        total = total + getattr(cfg, name) * v
    breakdown["total"] = float(total.detach())
    return total, breakdown


def discriminator_loss(disc: nn.Module, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    return F.softplus(disc(fake.detach())).mean() + F.softplus(-disc(real)).mean()
