"""Procedural face-like samples: layered ellipses and bands covering all twelve
categories, each painted with a base colour plus a low-amplitude texture."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from rgi.segmap import (BACKGROUND, EAR_RINGS, EARS, EYEBROWS, EYEGLASS, EYES, HAIR, LIPS, MOUTH,
                        NECK, NOSE, NUM_CATEGORIES, SKIN)

# Base RGB palettes in [0, 1]; each sample draws one entry and jitters it.
_PALETTES = {
    BACKGROUND: [(0.2, 0.3, 0.5), (0.6, 0.6, 0.55), (0.3, 0.5, 0.35), (0.75, 0.7, 0.8)],
    EYEBROWS: [(0.15, 0.1, 0.05), (0.35, 0.25, 0.15), (0.55, 0.45, 0.3)],
    EYES: [(0.95, 0.95, 0.95), (0.85, 0.9, 0.95)],
    NOSE: [(0.8, 0.6, 0.5), (0.6, 0.45, 0.35), (0.9, 0.75, 0.65)],
    MOUTH: [(0.25, 0.05, 0.05), (0.4, 0.1, 0.1)],
    LIPS: [(0.75, 0.35, 0.35), (0.6, 0.25, 0.3), (0.85, 0.5, 0.5)],
    SKIN: [(0.95, 0.8, 0.7), (0.75, 0.55, 0.4), (0.45, 0.3, 0.2), (0.9, 0.7, 0.55)],
    NECK: [(0.85, 0.7, 0.6), (0.65, 0.48, 0.35), (0.4, 0.27, 0.18)],
    HAIR: [(0.1, 0.07, 0.05), (0.45, 0.3, 0.15), (0.85, 0.75, 0.45), (0.6, 0.2, 0.1)],
    EARS: [(0.9, 0.72, 0.62), (0.7, 0.5, 0.38), (0.42, 0.28, 0.19)],
    EYEGLASS: [(0.05, 0.05, 0.05), (0.6, 0.6, 0.65), (0.5, 0.2, 0.1)],
    EAR_RINGS: [(0.95, 0.85, 0.2), (0.8, 0.8, 0.85)],
}


@dataclass
class SynthSpec:
    resolution: int = 64
    num_samples: int = 100
    seed: int = 0
    eyeglass_prob: float = 0.3
    earring_prob: float = 0.3
    face_rx: tuple[float, float] = (0.2, 0.26)
    face_ry: tuple[float, float] = (0.26, 0.32)
    center_jitter: float = 0.04
    color_jitter: float = 0.08
    texture_amplitude: float = 0.06
    texture_freq: tuple[float, float] = (2.0, 8.0)
    palettes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eyeglass_prob", "earring_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.num_samples < 0:
            raise ValueError("num_samples must be non-negative")
        self.face_rx = tuple(self.face_rx)
        self.face_ry = tuple(self.face_ry)
        self.texture_freq = tuple(self.texture_freq)

    def to_dict(self) -> dict:
        return asdict(self)


def _ellipse(xx, yy, cx, cy, rx, ry, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    dx, dy = xx - cx, yy - cy
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    return u * u + v * v <= 1.0


def _texture(rng, xx, yy, spec: SynthSpec):
    out = np.zeros_like(xx)
    for _ in range(2):
        f = rng.uniform(*spec.texture_freq)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        out += np.sin(2 * np.pi * f * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    return 0.5 * spec.texture_amplitude * out


def _draw_layout(rng, xx, yy, spec: SynthSpec) -> np.ndarray:
    m = np.full(xx.shape, BACKGROUND, dtype=np.uint8)
    j = spec.center_jitter
    cx, cy = 0.5 + rng.uniform(-j, j), 0.48 + rng.uniform(-j, j)
    rx, ry = rng.uniform(*spec.face_rx), rng.uniform(*spec.face_ry)
    tilt = rng.uniform(-0.15, 0.15)

    hair_rx = rx * rng.uniform(1.15, 1.45)
    hair_ry = ry * rng.uniform(1.05, 1.3)
    m[_ellipse(xx, yy, cx, cy - ry * rng.uniform(0.1, 0.3), hair_rx, hair_ry)] = HAIR

    neck_w = rx * rng.uniform(0.45, 0.65)
    m[(np.abs(xx - cx) <= neck_w) & (yy >= cy + 0.4 * ry)] = NECK

    ear_y = cy + rng.uniform(-0.05, 0.05) * ry
    ear_r = (rx * rng.uniform(0.2, 0.3), ry * rng.uniform(0.22, 0.32))
    for side in (-1, 1):
        m[_ellipse(xx, yy, cx + side * rx * 0.98, ear_y, *ear_r)] = EARS
    if rng.random() < spec.earring_prob:
        ring_r = rx * rng.uniform(0.08, 0.12)
        for side in (-1, 1):
            m[_ellipse(xx, yy, cx + side * rx * 1.02, ear_y + ear_r[1] * 1.1, ring_r, ring_r)] = EAR_RINGS

    m[_ellipse(xx, yy, cx, cy, rx, ry, tilt)] = SKIN

    eye_dx = rx * rng.uniform(0.38, 0.48)
    eye_y = cy - ry * rng.uniform(0.12, 0.25)
    eye_r = (rx * rng.uniform(0.16, 0.22), ry * rng.uniform(0.06, 0.1))
    brow_gap = ry * rng.uniform(0.14, 0.2)
    brow_r = (rx * rng.uniform(0.2, 0.26), ry * rng.uniform(0.035, 0.06))
    for side in (-1, 1):
        ex = cx + side * eye_dx
        m[_ellipse(xx, yy, ex, eye_y - brow_gap, *brow_r, side * 0.15)] = EYEBROWS
        m[_ellipse(xx, yy, ex, eye_y, *eye_r)] = EYES

    m[_ellipse(xx, yy, cx, cy + ry * 0.12, rx * rng.uniform(0.09, 0.14), ry * rng.uniform(0.16, 0.24))] = NOSE

    lip_y = cy + ry * rng.uniform(0.5, 0.6)
    lip_r = (rx * rng.uniform(0.3, 0.42), ry * rng.uniform(0.08, 0.13))
    m[_ellipse(xx, yy, cx, lip_y, *lip_r)] = LIPS
    m[_ellipse(xx, yy, cx, lip_y, lip_r[0] * 0.8, lip_r[1] * rng.uniform(0.25, 0.45))] = MOUTH

    if rng.random() < spec.eyeglass_prob:
        lens_r = (eye_r[0] * 1.6, eye_r[1] * 2.6)
        thick = rng.uniform(0.25, 0.4)
        for side in (-1, 1):
            ex = cx + side * eye_dx
            outer = _ellipse(xx, yy, ex, eye_y, *lens_r)
            inner = _ellipse(xx, yy, ex, eye_y, lens_r[0] * (1 - thick), lens_r[1] * (1 - thick))
            m[outer & ~inner] = EYEGLASS
        bridge = (np.abs(yy - eye_y) <= max(lens_r[1] * thick, 0.6 / xx.shape[0])) & \
                 (np.abs(xx - cx) <= eye_dx - lens_r[0] * 0.9)
        m[bridge] = EYEGLASS
    return m


def generate_sample(spec: SynthSpec, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(image uint8 (R, R, 3), mask uint8 (R, R))``; depends only on (seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    r = spec.resolution
    coords = (np.arange(r) + 0.5) / r
    xx, yy = np.meshgrid(coords, coords)
    mask = _draw_layout(rng, xx, yy, spec)

    img = np.zeros((r, r, 3))
    palettes = {**_PALETTES, **{int(k): v for k, v in spec.palettes.items()}}
    for cat in range(NUM_CATEGORIES):
        sel = mask == cat
        pal = palettes[cat]
        base = np.asarray(pal[rng.integers(len(pal))]) + rng.uniform(-spec.color_jitter, spec.color_jitter, 3)
        tex = _texture(rng, xx, yy, spec)
        if cat == BACKGROUND:
            tex = tex + rng.uniform(-0.15, 0.15) * (yy - 0.5)
        img[sel] = base + tex[sel, None]
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255).astype(np.uint8), mask


def generate_synthetic_dataset(spec: SynthSpec, root: str | Path) -> Path:
    """Writes ``images/NNNNN.png``, ``masks/NNNNN.png`` and ``spec.json`` under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for i in range(spec.num_samples):
        img, mask = generate_sample(spec, i)
        Image.fromarray(img, mode="RGB").save(root / "images" / f"{i:05d}.png")
        Image.fromarray(mask, mode="L").save(root / "masks" / f"{i:05d}.png")
    (root / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
    return root
