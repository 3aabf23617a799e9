"""Optimization-based refinement of regional style codes against a frozen generator."""

from __future__ import annotations

import torch

from rgi.generator import Generator
from rgi.losses import LossConfig, LossNetworks, NonFiniteLossError, reconstruction_loss

DEFAULT_STEPS = 200
DEFAULT_LR = 0.01


def per_sample_loss(images: torch.Tensor, fake: torch.Tensor, loss_cfg: LossConfig,
                    nets: LossNetworks) -> torch.Tensor:
    """Reconstruction loss evaluated independently for every batch element, (B,)."""
    return torch.stack([reconstruction_loss(images[i:i + 1], fake[i:i + 1], loss_cfg, nets)[0]
                        for i in range(images.shape[0])])


def optimize_codes(images: torch.Tensor, labels, s_init: torch.Tensor, generator: Generator,
                   steps: int = DEFAULT_STEPS, lr: float = DEFAULT_LR,
                   loss_cfg: LossConfig | None = None, seed: int = 0,
                   nets: LossNetworks | None = None, return_history: bool = False):
    """Adam on the codes only; returns the best iterate seen for each sample.

    images (B, 3, R, R), labels (B, R, R), s_init (B, C, L, D). Samples are
    optimized jointly but independently: the objective is the sum of per-sample
    losses and Adam is element-wise, so each sample follows its own trajectory.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    loss_cfg = loss_cfg or LossConfig()
    nets = nets or LossNetworks.default(loss_cfg)
    labels = generator.check_inputs(labels, s_init)
    if steps == 0:
        return (s_init.clone(), []) if return_history else s_init.clone()

    flags = [p.requires_grad for p in generator.parameters()]
    was_training = generator.training
    generator.requires_grad_(False)
    generator.eval()
    codes = s_init.detach().clone().requires_grad_(True)
    opt = torch.optim.Adam([codes], lr=lr)
    best = s_init.detach().clone()
    best_loss = torch.full((s_init.shape[0],), float("inf"))
    history = []
    try:
        for step in range(steps + 1):
            fake = generator.synthesize(labels, codes, seed)
            try:
                losses = per_sample_loss(images, fake, loss_cfg, nets)
            except NonFiniteLossError as err:
                raise NonFiniteLossError(f"{err.term} at inversion step {step}", float("nan")) from err
            cur = losses.detach()
            improved = cur < best_loss
            best_loss = torch.where(improved, cur, best_loss)
            best = torch.where(improved[:, None, None, None], codes.detach(), best)
            history.append(cur.clone())
            if step == steps:
                break
            opt.zero_grad(set_to_none=True)
            losses.sum().backward()
            opt.step()
    finally:
        for p, f in zip(generator.parameters(), flags):
            p.requires_grad_(f)
        generator.train(was_training)
    return (best, history) if return_history else best
