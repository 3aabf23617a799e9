"""Regional style codes: swapping, interpolation, region edits and (de)serialization.

Codes are float tensors of shape ``(C, L, D)`` or batched ``(B, C, L, D)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from rgi.segmap import NUM_CATEGORIES

DEFAULT_TEXTURE_SET = frozenset({1, 2, 3, 4, 5, 6, 7, 9})

_MAGIC = b"RGIS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class StyleShapeError(ValueError):
    pass


@dataclass(frozen=True)
class SwapPlan:
    texture_from_driven: frozenset[int] = field(default=DEFAULT_TEXTURE_SET)
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "texture_from_driven", frozenset(int(j) for j in self.texture_from_driven))
        bad = [j for j in self.texture_from_driven if not 0 <= j < NUM_CATEGORIES]
        if bad:
            raise ValueError(f"swap plan categories out of range: {sorted(bad)}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def _check_codes(s: torch.Tensor, name: str = "codes") -> None:
    if s.dim() not in (3, 4):
        raise StyleShapeError(f"{name} must be (C, L, D) or (B, C, L, D), got {tuple(s.shape)}")
    if not torch.isfinite(s).all():
        raise StyleShapeError(f"{name} contain non-finite values")


def _row_index(s: torch.Tensor, rows) -> torch.Tensor:
    sel = torch.zeros(s.shape[-3], dtype=torch.bool, device=s.device)
    sel[list(rows)] = True
    return sel.view(-1, 1, 1)


def swap_styles(s_t: torch.Tensor, s_d: torch.Tensor, plan: SwapPlan = SwapPlan()) -> torch.Tensor:
    """Rows in ``plan.texture_from_driven`` move toward ``s_d`` by ``plan.alpha``."""
    _check_codes(s_t, "target codes")
    _check_codes(s_d, "driven codes")
    if s_t.shape != s_d.shape:
        raise StyleShapeError(f"shape mismatch {tuple(s_t.shape)} vs {tuple(s_d.shape)}")
    if not plan.texture_from_driven or plan.alpha == 0.0:
        return s_t.clone()
    if plan.alpha == 1.0:
        mixed = s_d
    else:
        # s_t + a * (s_d - s_t) is exact when s_d == s_t
        mixed = s_t + plan.alpha * (s_d - s_t)
    return torch.where(_row_index(s_t, plan.texture_from_driven), mixed, s_t)


def edit_region_style(s: torch.Tensor, j: int, ref: torch.Tensor) -> torch.Tensor:
    _check_codes(s)
    if s.shape != ref.shape:
        raise StyleShapeError(f"shape mismatch {tuple(s.shape)} vs {tuple(ref.shape)}")
    if not 0 <= j < s.shape[-3]:
        raise ValueError(f"category {j} outside [0, {s.shape[-3]})")
    out = s.clone()
    out[..., j, :, :] = ref[..., j, :, :]
    return out


def styles_to_bytes(s: torch.Tensor) -> bytes:
    """Header ``RGIS`` | version | C | L | D (little-endian uint32) then float32 data."""
    if s.dim() != 3:
        raise StyleShapeError(f"expected (C, L, D), got {tuple(s.shape)}")
    c, l, d = s.shape
    data = s.detach().cpu().to(torch.float32).numpy().astype("<f4", copy=False)
    return _HEADER.pack(_MAGIC, _VERSION, c, l, d) + data.tobytes(order="C")


def styles_from_bytes(buf: bytes) -> torch.Tensor:
    if len(buf) < _HEADER.size:
        raise StyleShapeError("truncated style file")
    magic, version, c, l, d = _HEADER.unpack_from(buf)
    if magic != _MAGIC:
        raise StyleShapeError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise StyleShapeError(f"unsupported style file version {version}")
    n = c * l * d
    if len(buf) - _HEADER.size != 4 * n:
        raise StyleShapeError(f"payload holds {(len(buf) - _HEADER.size) // 4} values, header says {n}")
    arr = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(c, l, d)
    return torch.from_numpy(arr.astype(np.float32))


def save_styles(path: str | Path, s: torch.Tensor) -> None:
    Path(path).write_bytes(styles_to_bytes(s))


def load_styles(path: str | Path) -> torch.Tensor:
    return styles_from_bytes(Path(path).read_bytes())
