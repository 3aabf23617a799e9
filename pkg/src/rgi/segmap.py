"""Label-map algebra: category aggregation, region masks, mask pyramids and
masked average pooling.

Label maps are integer tensors of shape ``(H, W)`` or ``(B, H, W)`` holding
canonical category IDs in ``[0, NUM_CATEGORIES)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch
import yaml
from PIL import Image

NUM_CATEGORIES = 12

CATEGORY_NAMES = (
    "background",
    "eyebrows",
    "eyes",
    "nose",
    "mouth",
    "lips",
    "face_skin",
    "neck",
    "hair",
    "ears",
    "eyeglass",
    "ear_rings",
)

BACKGROUND, EYEBROWS, EYES, NOSE, MOUTH, LIPS, SKIN, NECK, HAIR, EARS, EYEGLASS, EAR_RINGS = range(12)


class LabelMapError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryTable:
    """Lookup from raw face-parser IDs to canonical IDs."""

    raw_names: tuple[str, ...]
    mapping: tuple[int, ...]

    def __post_init__(self):
        if len(self.raw_names) != len(self.mapping):
            raise LabelMapError("raw_names and mapping differ in length")
        for name, cid in zip(self.raw_names, self.mapping):
            if not 0 <= cid < NUM_CATEGORIES:
                raise LabelMapError(f"raw category {name!r} maps to invalid ID {cid}")

    def __len__(self) -> int:
        return len(self.mapping)

    def raw_id(self, name: str) -> int:
        return self.raw_names.index(name)

    def lookup(self) -> torch.Tensor:
        return torch.tensor(self.mapping, dtype=torch.long)

    @classmethod
    def from_dict(cls, cfg: dict) -> "CategoryTable":
        names = tuple(cfg["raw_names"])
        mapping = cfg["mapping"]
        missing = [n for n in names if n not in mapping]
        if missing:
            raise LabelMapError(f"category table has no entry for {missing}")
        return cls(names, tuple(int(mapping[n]) for n in names))

    @classmethod
    def from_file(cls, path: str | Path) -> "CategoryTable":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f))

    @classmethod
    def default(cls) -> "CategoryTable":
        text = resources.files("rgi.resources").joinpath("category_table.yaml").read_text()
        return cls.from_dict(yaml.safe_load(text))


def as_labelmap(m) -> torch.Tensor:
    if isinstance(m, np.ndarray):
        m = torch.from_numpy(m.astype(np.int64))
    if not isinstance(m, torch.Tensor):
        m = torch.as_tensor(m)
    if m.dtype.is_floating_point or m.dtype == torch.bool:
        raise LabelMapError(f"label map must hold integers, got {m.dtype}")
    return m.long()


def validate_labelmap(m, num_categories: int = NUM_CATEGORIES) -> torch.Tensor:
    m = as_labelmap(m)
    if m.dim() not in (2, 3):
        raise LabelMapError(f"label map must be (H, W) or (B, H, W), got shape {tuple(m.shape)}")
    bad = (m < 0) | (m >= num_categories)
    if bad.any():
        loc = tuple(int(i) for i in bad.nonzero()[0])
        raise LabelMapError(f"label {int(m[loc])} at {loc} outside [0, {num_categories})")
    return m


def aggregate_labels(raw, table: CategoryTable | None = None) -> torch.Tensor:
    table = table or CategoryTable.default()
    raw = as_labelmap(raw)
    bad = (raw < 0) | (raw >= len(table))
    if bad.any():
        loc = tuple(int(i) for i in bad.nonzero()[0])
        raise LabelMapError(f"unknown raw category ID {int(raw[loc])} at pixel {loc}")
    return table.lookup()[raw]


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def downsample_mask(m, target: int) -> torch.Tensor:
    """Nearest-neighbour downsampling that samples the top-left pixel of each cell."""
    m = as_labelmap(m)
    h, w = m.shape[-2:]
    if h != w:
        raise LabelMapError(f"label maps must be square, got {h}x{w}")
    if target <= 0 or not _is_pow2(target) or not _is_pow2(h) or h % target:
        raise LabelMapError(f"cannot downsample {h}x{w} to {target}x{target}")
    step = h // target
    return m[..., ::step, ::step]


def mask_pyramid(m, resolutions) -> dict[int, torch.Tensor]:
    return {r: downsample_mask(m, r) for r in resolutions}


def region_mask(m, j: int, num_categories: int = NUM_CATEGORIES) -> torch.Tensor:
    if not 0 <= j < num_categories:
        raise LabelMapError(f"category {j} outside [0, {num_categories})")
    return (as_labelmap(m) == j).to(torch.float32)


def one_hot(m, num_categories: int = NUM_CATEGORIES, dtype=torch.float32) -> torch.Tensor:
    """(..., H, W) labels -> (..., C, H, W) indicators."""
    m = as_labelmap(m)
    oh = torch.nn.functional.one_hot(m, num_categories).to(dtype)
    return oh.movedim(-1, -3)


def masked_avg_pool_all(features: torch.Tensor, m, num_categories: int = NUM_CATEGORIES) -> torch.Tensor:
    """Per-region channel means for every category at once.

    features: (B, D, h, w), m: (B, h, w) -> (B, C, D). Empty regions pool to zero.
    """
    m = as_labelmap(m)
    if features.dim() != 4 or m.dim() != 3 or features.shape[0] != m.shape[0] \
            or features.shape[-2:] != m.shape[-2:]:
        raise LabelMapError(
            f"feature shape {tuple(features.shape)} incompatible with mask {tuple(m.shape)}")
    oh = one_hot(m, num_categories, dtype=features.dtype)
    sums = torch.einsum("bchw,bdhw->bcd", oh, features)
    counts = oh.sum(dim=(-2, -1)).clamp(min=1.0)
    return sums / counts[..., None]


def masked_avg_pool(features: torch.Tensor, m, j: int) -> torch.Tensor:
    """Channel-wise mean of ``features`` (d, h, w) over pixels where ``m == j``."""
    m = as_labelmap(m)
    if features.dim() != 3 or features.shape[-2:] != m.shape:
        raise LabelMapError(
            f"feature shape {tuple(features.shape)} incompatible with mask {tuple(m.shape)}")
    ind = region_mask(m, j).to(features.dtype)
    n = ind.sum()
    if n == 0:
        return features.new_zeros(features.shape[0])
    return (features * ind).sum(dim=(-2, -1)) / n


def hflip(m: torch.Tensor) -> torch.Tensor:
    return torch.flip(m, dims=(-1,))


def load_mask_png(path: str | Path) -> torch.Tensor:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise LabelMapError(f"{path}: expected a single-channel mask, got shape {arr.shape}")
    return validate_labelmap(arr)


def save_mask_png(path: str | Path, m) -> None:
    m = validate_labelmap(m)
    if m.dim() != 2:
        raise LabelMapError("save_mask_png expects a single (H, W) label map")
    Image.fromarray(m.numpy().astype(np.uint8), mode="L").save(path)
