"""Reconstruction quality metrics on images rescaled to [0, 1]."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import torch
from skimage.metrics import structural_similarity

PSNR_CAP = 99.0


def _to_unit(t) -> np.ndarray:
    """(3, H, W) tensor in [-1, 1] -> (H, W, 3) float64 in [0, 1]; arrays pass through."""
    if isinstance(t, torch.Tensor):
        return ((t.detach().cpu().double() + 1.0) / 2.0).permute(1, 2, 0).numpy()
    return np.asarray(t, dtype=np.float64)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, averaged over channels."""
    return float(structural_similarity(a, b, data_range=1.0, channel_axis=-1, gaussian_weights=True,
                                       sigma=1.5, use_sample_covariance=False, K1=0.01, K2=0.03))


def image_metrics(real, fake) -> dict[str, float]:
    a, b = _to_unit(real), _to_unit(fake)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return {"psnr": psnr(a, b), "ssim": ssim(a, b), "rmse": rmse(a, b)}


def mean_color_baseline(image) -> np.ndarray:
    """Best constant-colour predictor of an image under squared error."""
    a = _to_unit(image)
    return np.broadcast_to(a.mean(axis=(0, 1)), a.shape).copy()


def evaluate(dataset, model, seed: int = 0, batch_size: int = 16, out_csv: str | Path | None = None):
    """Per-image PSNR/SSIM/RMSE of ``reconstruct`` plus their means."""
    from rgi.pipeline import reconstruct

    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    rows = []
    names = getattr(dataset, "names", None)
    for start in range(0, len(dataset), batch_size):
        items = [dataset[i] for i in range(start, min(start + batch_size, len(dataset)))]
        images = torch.stack([it[0] for it in items])
        masks = torch.stack([it[1] for it in items])
        fakes = reconstruct(images, masks, model, seed)
        for k, (img, fake) in enumerate(zip(images, fakes)):
            i = start + k
            row = {"name": names[i] if names else str(i), **image_metrics(img, fake)}
            row["baseline_psnr"] = psnr(_to_unit(img), mean_color_baseline(img))
            rows.append(row)
    means = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "rmse", "baseline_psnr")}
    if out_csv:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
            w.writerow({"name": "mean", **means})
    return rows, means
