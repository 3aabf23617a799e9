"""Reconstruction-proxy training of encoder + generator."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import torch

from rgi.losses import (TERMS, Discriminator, LossConfig, LossNetworks, discriminator_loss,
                        reconstruction_loss)
from rgi.model import ModelConfig, RGIModel, save_checkpoint

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 8
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    milestones: list[int] | None = None  # None -> 50% and 75% of ``steps``
    lr_decay: float = 0.1
    flip_prob: float = 0.5
    finetune_layers: list[int] | None = None  # None -> the first K (mask-guided) layers; [] freezes G
    checkpoint_every: int = 0
    log_every: int = 1
    smoothing: int = 100
    divergence_factor: float = 1e3

    def __post_init__(self):
        self.betas = tuple(self.betas)
        ms = self.resolved_milestones()
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {ms}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    def resolved_milestones(self) -> list[int]:
        if self.milestones is None:
            return [m for m in (self.steps // 2, (3 * self.steps) // 4) if m > 0]
        return list(self.milestones)

    @classmethod
    def from_dict(cls, cfg: dict | None) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(cfg or {}) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**(cfg or {}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def ablation_config(name: str, loss_cfg: LossConfig | None = None,
                    train_cfg: TrainConfig | None = None) -> tuple[LossConfig, TrainConfig]:
    """``full``; ``A`` drops the identity term; ``B`` freezes the generator."""
    loss_cfg = LossConfig(**(loss_cfg or LossConfig()).to_dict())
    train_cfg = TrainConfig.from_dict((train_cfg or TrainConfig()).to_dict())
    if name == "A":
        loss_cfg.identity = 0.0
    elif name == "B":
        train_cfg.finetune_layers = []
    elif name != "full":
        raise ValueError(f"unknown ablation {name!r}; expected 'full', 'A' or 'B'")
    return loss_cfg, train_cfg


def trainable_parameters(model: RGIModel, finetune_layers) -> list[torch.nn.Parameter]:
    g = model.generator
    layers = range(g.config.num_mask_layers) if finetune_layers is None else finetune_layers
    params = list(model.encoder.parameters())
    seen = set()
    for layer in sorted(set(layers)):
        if not 0 <= layer < g.num_layers:
            raise ValueError(f"finetune layer {layer} outside [0, {g.num_layers})")
        for p in g.layer_params(layer):
            if id(p) not in seen:
                seen.add(id(p))
                params.append(p)
    return params


def hflip_batch(images: torch.Tensor, masks: torch.Tensor, prob: float, gen: torch.Generator):
    flip = torch.rand(images.shape[0], generator=gen) < prob
    if flip.any():
        images = torch.where(flip[:, None, None, None], images.flip(-1), images)
        masks = torch.where(flip[:, None, None], masks.flip(-1), masks)
    return images, masks


@dataclass
class TrainResult:
    model: RGIModel
    history: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None
    metrics_path: Path | None = None

    @property
    def initial_loss(self) -> float:
        return self.history[0]["total"]

    def smoothed_final_loss(self, window: int = 100) -> float:
        tail = [h["total"] for h in self.history[-window:]]
        return sum(tail) / len(tail)


class Trainer:
    def __init__(self, model: RGIModel, train_cfg: TrainConfig, loss_cfg: LossConfig, seed: int = 0):
        self.model = model
        self.cfg = train_cfg
        self.loss_cfg = loss_cfg
        self.gen = torch.Generator().manual_seed(seed)
        self.disc = None
        self.disc_opt = None
        if loss_cfg.adversarial > 0:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(seed + 1)
                self.disc = Discriminator(model.config.generator.resolution)
            self.disc_opt = torch.optim.Adam(self.disc.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
        self.nets = LossNetworks.default(loss_cfg, self.disc)
        self.params = trainable_parameters(model, train_cfg.finetune_layers)
        trainable = {id(p) for p in self.params}
        for p in model.parameters():
            p.requires_grad_(id(p) in trainable)
        self.opt = torch.optim.Adam(self.params, lr=train_cfg.lr, betas=train_cfg.betas)
        self.sched = torch.optim.lr_scheduler.MultiStepLR(
            self.opt, milestones=train_cfg.resolved_milestones(), gamma=train_cfg.lr_decay)

    def step(self, images: torch.Tensor, masks: torch.Tensor) -> dict:
        images, masks = hflip_batch(images, masks, self.cfg.flip_prob, self.gen)
        self.model.train()
        fake = self.model.reconstruct(images, masks)
        loss, breakdown = reconstruction_loss(images, fake, self.loss_cfg, self.nets)
        if not self.loss_cfg.active():
            return breakdown
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.sched.step()
        if self.disc is not None:
            self.disc_opt.zero_grad(set_to_none=True)
            d_loss = discriminator_loss(self.disc, images, fake)
            d_loss.backward()
            self.disc_opt.step()
            breakdown["discriminator"] = float(d_loss.detach())
        return breakdown

    def sample_batch(self, dataset, order: list[int]) -> tuple[torch.Tensor, torch.Tensor]:
        n = len(dataset)
        idx = []
        while len(idx) < self.cfg.batch_size:
            if not order:
                order.extend(torch.randperm(n, generator=self.gen).tolist())
            idx.append(order.pop())
        items = [dataset[i] for i in idx]
        return torch.stack([it[0] for it in items]), torch.stack([it[1] for it in items])


def train(dataset, train_cfg: TrainConfig | None = None, loss_cfg: LossConfig | None = None,
          seed: int = 0, model: RGIModel | None = None, model_cfg: ModelConfig | None = None,
          out_dir: str | Path | None = None) -> TrainResult:
    """Single-writer training loop. Deterministic for a fixed seed and in-process data.

    Writes ``metrics.csv``, periodic ``checkpoint_<step>.pt`` and a final
    ``checkpoint.pt`` under ``out_dir`` when given.
    """
    train_cfg = train_cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    loss_cfg.check_trainable()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    torch.manual_seed(seed)
    model = model or RGIModel(model_cfg, seed=seed)
    trainer = Trainer(model, train_cfg, loss_cfg, seed)
    out = Path(out_dir) if out_dir else None
    result = TrainResult(model)
    writer = csv_file = None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        result.metrics_path = out / "metrics.csv"
        csv_file = open(result.metrics_path, "w", newline="")
        writer = csv.DictWriter(csv_file, fieldnames=["step", "lr", *TERMS, "discriminator", "total", "seconds"],
                                extrasaction="ignore")
        writer.writeheader()
    extra = {"train": train_cfg.to_dict(), "loss": loss_cfg.to_dict(), "seed": seed}
    order: list[int] = []
    t0 = time.time()
    try:
        for step in range(train_cfg.steps):
            lr = trainer.opt.param_groups[0]["lr"]
            images, masks = trainer.sample_batch(dataset, order)
            row = trainer.step(images, masks)
            row.update(step=step, lr=lr, seconds=round(time.time() - t0, 3))
            result.history.append(row)
            if row["total"] > train_cfg.divergence_factor * max(result.initial_loss, 1e-12):
                raise TrainingDiverged(
                    f"loss {row['total']:.4g} at step {step} exceeds {train_cfg.divergence_factor:g}x "
                    f"initial {result.initial_loss:.4g}; terms: "
                    + ", ".join(f"{k}={v:.4g}" for k, v in row.items() if k in TERMS))
            if writer and step % train_cfg.log_every == 0:
                writer.writerow(row)
            if step % 100 == 0:
                log.info("step %d loss %.4f", step, row["total"])
            if out and train_cfg.checkpoint_every and step and step % train_cfg.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{step}.pt", model, step, extra)
    finally:
        if csv_file:
            csv_file.close()
    for p in model.parameters():
        p.requires_grad_(True)
    model.eval()
    if out:
        result.checkpoint = out / "checkpoint.pt"
        save_checkpoint(result.checkpoint, model, train_cfg.steps, extra)
    return result
