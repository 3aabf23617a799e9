"""Encoder + generator bundle and the versioned checkpoint container.

Checkpoint layout (``torch.save`` of a dict)::

    format   "rgi-checkpoint"
    version  1
    config   {"generator": GeneratorConfig fields, "encoder": EncoderConfig fields}
    state    {"encoder": state_dict, "generator": state_dict}
    step     training step the weights correspond to
    extra    free-form metadata (train/loss configs, seed)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from rgi.encoder import Encoder, EncoderConfig
from rgi.generator import Generator, GeneratorConfig

CHECKPOINT_FORMAT = "rgi-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    encoder: EncoderConfig | None = None

    def __post_init__(self):
        g = self.generator
        if self.encoder is None:
            self.encoder = EncoderConfig(resolution=g.resolution, style_dim=g.style_dim,
                                         num_layers=g.num_layers, num_regions=g.num_regions)
        e = self.encoder
        if (e.resolution, e.style_dim, e.num_layers, e.num_regions) != \
                (g.resolution, g.style_dim, g.num_layers, g.num_regions):
            raise ValueError("encoder and generator configs disagree on resolution/style shape")

    @classmethod
    def create(cls, resolution: int = 64, style_dim: int = 64, num_mask_layers: int | None = None,
               **generator_kwargs) -> "ModelConfig":
        return cls(GeneratorConfig(resolution=resolution, style_dim=style_dim,
                                   num_mask_layers=num_mask_layers, **generator_kwargs))

    @classmethod
    def from_dict(cls, cfg: dict) -> "ModelConfig":
        enc = cfg.get("encoder")
        return cls(GeneratorConfig(**cfg.get("generator", {})),
                   EncoderConfig(**enc) if enc else None)

    def to_dict(self) -> dict:
        return {"generator": self.generator.to_dict(), "encoder": self.encoder.to_dict()}

    @property
    def style_shape(self) -> tuple[int, int, int]:
        g = self.generator
        return g.num_regions, g.num_layers, g.style_dim


class RGIModel(nn.Module):
    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config = config or ModelConfig()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.encoder = Encoder(config.encoder)
            self.generator = Generator(config.generator)

    def encode(self, images: torch.Tensor, labels) -> torch.Tensor:
        return self.encoder.encode(images, labels)

    def synthesize(self, labels, codes: torch.Tensor, seed: int = 0) -> torch.Tensor:
        return self.generator.synthesize(labels, codes, seed)

    def reconstruct(self, images: torch.Tensor, labels, seed: int = 0) -> torch.Tensor:
        return self.synthesize(labels, self.encode(images, labels), seed)

    forward = reconstruct


def save_checkpoint(path: str | Path, model: RGIModel, step: int = 0, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "state": {"encoder": model.encoder.state_dict(), "generator": model.generator.state_dict()},
        "step": int(step),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[RGIModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an rgi checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    model = RGIModel(ModelConfig.from_dict(payload["config"]))
    model.encoder.load_state_dict(payload["state"]["encoder"])
    model.generator.load_state_dict(payload["state"]["generator"])
    model.eval()
    return model, payload
