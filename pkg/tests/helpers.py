from __future__ import annotations

import numpy as np
import torch

from rgi.data import ImageMaskDataset, image_to_tensor
from rgi.synth import SynthSpec, generate_sample


def central_difference(fn, tensors, eps: float = 1e-6) -> list[torch.Tensor]:
    """Numerical gradient of scalar ``fn()`` w.r.t. each tensor, perturbing in place."""
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = float(fn())
                flat[i] = orig - eps
                lo = float(fn())
                flat[i] = orig
                gflat[i] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads


def analytic(fn, tensors) -> list[torch.Tensor]:
    out = fn()
    return list(torch.autograd.grad(out, tensors))


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def synthetic_dataset(n: int, seed: int = 0, resolution: int = 64, start: int = 0, **kw) -> ImageMaskDataset:
    spec = SynthSpec(resolution=resolution, num_samples=start + n, seed=seed, **kw)
    samples = [generate_sample(spec, i) for i in range(start, start + n)]
    images = torch.stack([image_to_tensor(img) for img, _ in samples])
    masks = torch.stack([torch.from_numpy(m.astype(np.int64)) for _, m in samples])
    return ImageMaskDataset(images, masks)


def random_blob_mask(rng: np.random.Generator, size: int, num_categories: int = 12) -> torch.Tensor:
    """Piecewise-constant random label map built from overlapping rectangles."""
    m = np.full((size, size), rng.integers(num_categories), dtype=np.int64)
    for _ in range(rng.integers(2, 8)):
        y0, x0 = rng.integers(0, size, 2)
        h, w = rng.integers(1, max(2, size // 2), 2)
        m[y0:y0 + h, x0:x0 + w] = rng.integers(num_categories)
    return torch.from_numpy(m)
