"""Image/mask I/O, in-memory datasets and CelebAMask-HQ-style ingestion."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from rgi.segmap import (CategoryTable, aggregate_labels, downsample_mask, load_mask_png,
                        validate_labelmap)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def image_to_tensor(img: np.ndarray) -> torch.Tensor:
    """uint8 (H, W, 3) -> float (3, H, W) in [-1, 1]."""
    return torch.from_numpy(img.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1).contiguous()


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """float (3, H, W) in [-1, 1] -> uint8 (H, W, 3)."""
    arr = ((t.detach().cpu().float().clamp(-1, 1) + 1.0) * 127.5).round()
    return arr.permute(1, 2, 0).numpy().astype(np.uint8)


def quantize(t: torch.Tensor) -> torch.Tensor:
    """Round-trip through 8-bit storage."""
    return ((t.clamp(-1, 1) + 1.0) * 127.5).round() / 127.5 - 1.0


def load_image(path: str | Path, resolution: int | None = None) -> torch.Tensor:
    img = Image.open(path).convert("RGB")
    if resolution is not None and img.size != (resolution, resolution):
        img = img.resize((resolution, resolution), Image.BICUBIC)
    return image_to_tensor(np.asarray(img))


def save_image(path: str | Path, t: torch.Tensor) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(tensor_to_image(t), mode="RGB").save(path)


def load_mask(path: str | Path, resolution: int | None = None) -> torch.Tensor:
    m = load_mask_png(path)
    if resolution is not None and m.shape[-1] != resolution:
        m = downsample_mask(m, resolution)
    return m


class ImageMaskDataset(torch.utils.data.Dataset):
    """Holds (image (3, R, R) in [-1, 1], label map (R, R)) pairs in memory."""

    def __init__(self, images: torch.Tensor, masks: torch.Tensor, names: list[str] | None = None):
        if images.shape[0] != masks.shape[0]:
            raise ValueError(f"{images.shape[0]} images but {masks.shape[0]} masks")
        self.images = images
        self.masks = validate_labelmap(masks)
        self.names = names or [f"{i:05d}" for i in range(len(images))]

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, i):
        return self.images[i], self.masks[i]

    def subset(self, indices) -> "ImageMaskDataset":
        idx = torch.as_tensor(list(indices), dtype=torch.long)
        return ImageMaskDataset(self.images[idx], self.masks[idx], [self.names[i] for i in idx.tolist()])

    @classmethod
    def from_dir(cls, root: str | Path, resolution: int | None = None) -> "ImageMaskDataset":
        """Reads the ``images/`` + ``masks/`` layout written by the synthetic generator."""
        root = Path(root)
        mask_files = sorted((root / "masks").glob("*.png"))
        if not mask_files:
            raise FileNotFoundError(f"no masks under {root / 'masks'}")
        images, masks = [], []
        for mf in mask_files:
            candidates = [root / "images" / (mf.stem + s) for s in IMAGE_SUFFIXES]
            img_path = next((p for p in candidates if p.exists()), None)
            if img_path is None:
                raise FileNotFoundError(f"no image for mask {mf}")
            images.append(load_image(img_path, resolution))
            masks.append(load_mask(mf, resolution))
        return cls(torch.stack(images), torch.stack(masks), [mf.stem for mf in mask_files])


# Raw part files, in overwrite priority order (later wins on overlap).
CELEBAMASK_PARTS = ("skin", "l_brow", "r_brow", "l_eye", "r_eye", "eye_g", "l_ear", "r_ear", "ear_r",
                    "nose", "mouth", "u_lip", "l_lip", "neck", "neck_l", "cloth", "hair", "hat")


def compose_raw_mask(part_masks: dict[str, np.ndarray], table: CategoryTable, shape) -> tuple[np.ndarray, int]:
    """Paint binary part masks into a raw-ID map; returns (map, overlapping pixel count)."""
    raw = np.zeros(shape, dtype=np.int64)
    painted = np.zeros(shape, dtype=bool)
    conflicts = 0
    for part in CELEBAMASK_PARTS:
        if part not in part_masks:
            continue
        sel = part_masks[part]
        conflicts += int((sel & painted).sum())
        raw[sel] = table.raw_id(part)
        painted |= sel
    return raw, conflicts


def _read_part(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr > 0


def ingest_dataset(root: str | Path, resolution: int = 64, table: CategoryTable | None = None,
                   image_dir: str = "CelebA-HQ-img",
                   anno_dir: str = "CelebAMask-HQ-mask-anno") -> ImageMaskDataset:
    """Loads a CelebAMask-HQ-style tree::

        root/CelebA-HQ-img/<id>.jpg|png
        root/CelebAMask-HQ-mask-anno/<any subdir>/<id:05d>_<part>.png

    Part masks are composed into raw 19-category maps (later parts in
    ``CELEBAMASK_PARTS`` win overlaps), aggregated to 12 categories and
    downsampled to ``resolution``.
    """
    table = table or CategoryTable.default()
    root = Path(root)
    img_root = root / image_dir
    if not img_root.is_dir():
        raise FileNotFoundError(f"missing image directory {img_root}")
    parts_by_id: dict[int, dict[str, Path]] = {}
    for p in (root / anno_dir).rglob("*.png"):
        stem, _, part = p.stem.partition("_")
        if part not in CELEBAMASK_PARTS or not stem.isdigit():
            continue
        parts_by_id.setdefault(int(stem), {})[part] = p

    images, masks, names = [], [], []
    for img_path in sorted(img_root.iterdir(), key=lambda p: (len(p.stem), p.stem)):
        if img_path.suffix.lower() not in IMAGE_SUFFIXES or not img_path.stem.isdigit():
            continue
        idx = int(img_path.stem)
        if idx not in parts_by_id:
            raise FileNotFoundError(f"no part masks for image {img_path.name}")
        parts = {name: _read_part(p) for name, p in parts_by_id[idx].items()}
        shape = next(iter(parts.values())).shape
        raw, conflicts = compose_raw_mask(parts, table, shape)
        if conflicts:
            log.warning("sample %s: %d overlapping part pixels resolved by priority", img_path.stem, conflicts)
        m = aggregate_labels(torch.from_numpy(raw), table)
        if m.shape[-1] != resolution:
            m = downsample_mask(m, resolution)
        images.append(load_image(img_path, resolution))
        masks.append(m)
        names.append(img_path.stem)
    if not images:
        raise FileNotFoundError(f"no images under {img_root}")
    return ImageMaskDataset(torch.stack(images), torch.stack(masks), names)


# Representative raw part for each canonical category when exporting.
_EXPORT_PART = {1: "l_brow", 2: "l_eye", 3: "nose", 4: "mouth", 5: "u_lip", 6: "skin", 7: "neck",
                8: "hair", 9: "l_ear", 10: "eye_g", 11: "ear_r"}


def export_celebamask(dataset: ImageMaskDataset, root: str | Path, image_dir: str = "CelebA-HQ-img",
                      anno_dir: str = "CelebAMask-HQ-mask-anno") -> Path:
    """Writes a dataset in the layout read by :func:`ingest_dataset`."""
    root = Path(root)
    (root / image_dir).mkdir(parents=True, exist_ok=True)
    anno = root / anno_dir / "0"
    anno.mkdir(parents=True, exist_ok=True)
    for i in range(len(dataset)):
        img, m = dataset[i]
        save_image(root / image_dir / f"{i}.png", img)
        m = m.numpy()
        for cat, part in _EXPORT_PART.items():
            sel = m == cat
            if sel.any():
                Image.fromarray((sel * 255).astype(np.uint8), mode="L").save(anno / f"{i:05d}_{part}.png")
    return root
