"""StyleGAN2-style synthesis network with mask-guided style blocks.

The first ``K`` layers apply one modulated convolution per semantic region and
composite the results under the region masks. Remaining layers consume the
area-weighted mean of the regional codes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from rgi.segmap import NUM_CATEGORIES, downsample_mask, one_hot, validate_labelmap

PIXEL_ROUTE_MIN_AREA = 32 * 32
DEMOD_EPS = 1e-8
LRELU_SLOPE = 0.2
LRELU_GAIN = math.sqrt(2.0)


class ConfigMismatchError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    resolution: int = 64
    style_dim: int = 64
    num_mask_layers: int | None = None
    channel_base: int = 8
    channel_max: int = 128
    noise_enabled: bool = False
    num_regions: int = NUM_CATEGORIES

    def __post_init__(self):
        r = self.resolution
        if r < 8 or r & (r - 1):
            raise ValueError(f"resolution must be a power of two >= 8, got {r}")
        if self.num_mask_layers is None:
            self.num_mask_layers = self.num_layers
        if not 1 <= self.num_mask_layers <= self.num_layers:
            raise ValueError(f"K={self.num_mask_layers} outside [1, {self.num_layers}]")

    @property
    def log2_res(self) -> int:
        return int(math.log2(self.resolution))

    @property
    def num_layers(self) -> int:
        return 2 * (self.log2_res - 1)

    def channels(self, res: int) -> int:
        return min(self.channel_max, self.channel_base * 2 ** (self.log2_res - int(math.log2(res))))

    def layer_resolutions(self) -> list[int]:
        return [2 ** (2 + i // 2) for i in range(self.num_layers)]

    def to_dict(self) -> dict:
        return asdict(self)


def mod_demod(weight: torch.Tensor, scales: torch.Tensor, demodulate: bool = True,
              eps: float = DEMOD_EPS) -> torch.Tensor:
    """Scale input channels of ``weight`` (O, I, k, k) by ``scales`` (I,) or (B, I),
    then renormalize each output channel to unit norm."""
    if scales.shape[-1] != weight.shape[1]:
        raise ValueError(f"style has {scales.shape[-1]} entries for {weight.shape[1]} input channels")
    if not torch.isfinite(scales).all():
        raise ValueError("style scales contain non-finite values")
    w = weight * scales[..., None, :, None, None]
    if demodulate:
        w = w * torch.rsqrt(w.pow(2).sum(dim=(-3, -2, -1), keepdim=True) + eps)
    return w


def modulated_conv(x: torch.Tensor, weight: torch.Tensor, scales: torch.Tensor,
                   demodulate: bool = True) -> torch.Tensor:
    """Plain (global-style) modulated conv via per-sample kernels and grouped convolution."""
    b, i, h, w = x.shape
    kernels = mod_demod(weight, scales, demodulate)  # (B, O, I, k, k)
    o, k = weight.shape[0], weight.shape[-1]
    y = F.conv2d(x.reshape(1, b * i, h, w), kernels.reshape(b * o, i, k, k), padding=k // 2, groups=b)
    return y.view(b, o, h, w)


def regional_modulated_conv(x: torch.Tensor, weight: torch.Tensor, scales: torch.Tensor,
                            masks: torch.Tensor, demodulate: bool = True,
                            eps: float = DEMOD_EPS, route: str = "auto") -> torch.Tensor:
    """Sum over regions of ``conv(x, mod_demod(W, s_j)) * mask_j``.

    x: (B, I, h, w); scales: (B, C, I); masks: (B, C, h, w) one-hot indicators.
    Both routes use ``conv(x, W * s) * d == conv(x * s, W) * d``:

    * ``"region"`` runs one batched conv per region present in the batch;
    * ``"pixel"`` convolves every input channel separately once, then contracts
      with the per-pixel scale map, which is cheaper on fine grids.
    """
    if route == "auto":
        route = "pixel" if x.shape[-1] * x.shape[-2] >= PIXEL_ROUTE_MIN_AREA else "region"
    b, i, h, w = x.shape
    o, k = weight.shape[0], weight.shape[-1]
    if demodulate:
        wsq = weight.pow(2).sum(dim=(2, 3))  # (O, I)
    if route == "pixel":
        per_channel = F.conv2d(x, weight.transpose(0, 1).reshape(i * o, 1, k, k), padding=k // 2, groups=i)
        smap = torch.einsum("bchw,bci->bihw", masks, scales)
        y = (per_channel.view(b, i, o, h, w) * smap[:, :, None]).sum(dim=1)
        if demodulate:
            d = torch.rsqrt(torch.einsum("bci,oi->bco", scales.pow(2), wsq) + eps)
            y = y * torch.einsum("bchw,bco->bohw", masks, d)
        return y
    if route != "region":
        raise ValueError(f"unknown route {route!r}")
    present = (masks.sum(dim=(0, 2, 3)) > 0).nonzero().flatten()
    s = scales[:, present]
    m = masks[:, present]
    p = s.shape[1]
    xs = x[:, None] * s[..., None, None]
    y = F.conv2d(xs.reshape(b * p, i, h, w), weight, padding=k // 2).view(b, p, o, h, w)
    if demodulate:
        d = torch.rsqrt(torch.einsum("bpi,oi->bpo", s.pow(2), wsq) + eps)
        y = y * d[..., None, None]
    return (y * m[:, :, None]).sum(dim=1)


class StyleBlock(nn.Module):
    """Modulated conv + bias + optional noise + leaky ReLU, with a shared affine
    that maps a style code to per-input-channel scales."""

    def __init__(self, in_channels: int, out_channels: int, style_dim: int,
                 kernel_size: int = 3, demodulate: bool = True, activate: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.affine = nn.Linear(style_dim, in_channels)
        nn.init.constant_(self.affine.bias, 1.0)
        self.noise_strength = nn.Parameter(torch.zeros(()))
        self.demodulate = demodulate
        self.activate = activate
        if not demodulate:
            with torch.no_grad():
                self.weight.mul_(1.0 / math.sqrt(in_channels * kernel_size ** 2))

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[-1]

    def _finish(self, y: torch.Tensor, noise: torch.Tensor | None) -> torch.Tensor:
        y = y + self.bias.view(1, -1, 1, 1)
        if noise is not None:
            y = y + self.noise_strength * noise
        if self.activate:
            y = F.leaky_relu(y, LRELU_SLOPE) * LRELU_GAIN
        return y

    def forward_regional(self, x: torch.Tensor, masks: torch.Tensor, codes: torch.Tensor,
                         noise: torch.Tensor | None = None) -> torch.Tensor:
        """masks: (B, C, h, w) indicators; codes: (B, C, D)."""
        if masks.shape[-2:] != x.shape[-2:]:
            raise ConfigMismatchError(
                f"mask size {tuple(masks.shape[-2:])} != feature size {tuple(x.shape[-2:])}")
        scales = self.affine(codes)
        y = regional_modulated_conv(x, self.weight, scales, masks, self.demodulate)
        return self._finish(y, noise)

    def forward_plain(self, x: torch.Tensor, code: torch.Tensor,
                      noise: torch.Tensor | None = None) -> torch.Tensor:
        """code: (B, D)."""
        y = modulated_conv(x, self.weight, self.affine(code), self.demodulate)
        return self._finish(y, noise)


def masked_style_conv(x: torch.Tensor, labels, codes: torch.Tensor, block: StyleBlock,
                      noise: torch.Tensor | None = None) -> torch.Tensor:
    """Mask-guided style block on label maps (B, h, w) and per-region codes (B, C, D)."""
    labels = validate_labelmap(labels, codes.shape[-2])
    if labels.dim() == 2:
        labels = labels[None]
    if labels.shape[-2:] != x.shape[-2:]:
        raise ConfigMismatchError(
            f"mask size {tuple(labels.shape[-2:])} != feature size {tuple(x.shape[-2:])}")
    masks = one_hot(labels, codes.shape[-2], dtype=x.dtype)
    return block.forward_regional(x, masks, codes, noise)


def _upsample(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        self.config = config = config or GeneratorConfig()
        res = config.layer_resolutions()
        self.const = nn.Parameter(torch.randn(1, config.channels(4), 4, 4))
        blocks = []
        in_ch = config.channels(4)
        for r in res:
            out_ch = config.channels(r)
            blocks.append(StyleBlock(in_ch, out_ch, config.style_dim))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = StyleBlock(in_ch, 3, config.style_dim, kernel_size=1,
                                 demodulate=False, activate=False)

    @property
    def num_layers(self) -> int:
        return self.config.num_layers

    def layer_params(self, layer: int) -> list[nn.Parameter]:
        """Parameters owned by generator layer ``layer``; the constant input belongs
        to layer 0 and the RGB head to the last layer."""
        params = list(self.blocks[layer].parameters())
        if layer == 0:
            params.append(self.const)
        if layer == self.num_layers - 1:
            params.extend(self.to_rgb.parameters())
        return params

    def _noise(self, layer: int, x: torch.Tensor, seed: int) -> torch.Tensor | None:
        if not self.config.noise_enabled:
            return None
        g = torch.Generator().manual_seed(int(seed) * 1009 + layer)
        b, _, h, w = x.shape
        return torch.randn(b, 1, h, w, generator=g).to(device=x.device, dtype=x.dtype)

    def check_inputs(self, labels, codes: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        labels = validate_labelmap(labels, cfg.num_regions)
        if labels.dim() == 2:
            labels = labels[None]
        expected = (cfg.num_regions, cfg.num_layers, cfg.style_dim)
        if codes.dim() != 4 or tuple(codes.shape[1:]) != expected:
            raise ConfigMismatchError(f"codes shape {tuple(codes.shape)} != (B, {expected})")
        if labels.shape[-1] != cfg.resolution or labels.shape[-2] != cfg.resolution:
            raise ConfigMismatchError(
                f"mask resolution {tuple(labels.shape[-2:])} != generator resolution {cfg.resolution}")
        if labels.shape[0] != codes.shape[0]:
            raise ConfigMismatchError(f"batch mismatch: {labels.shape[0]} masks, {codes.shape[0]} codes")
        return labels

    def synthesize(self, labels, codes: torch.Tensor, seed: int = 0) -> torch.Tensor:
        """labels (B, R, R), codes (B, C, L, D) -> images (B, 3, R, R) in [-1, 1]."""
        labels = self.check_inputs(labels, codes).to(codes.device)
        cfg = self.config
        k = cfg.num_mask_layers
        masks = {r: one_hot(downsample_mask(labels, r), cfg.num_regions, dtype=codes.dtype)
                 for r in set(cfg.layer_resolutions())}
        x = self.const.expand(codes.shape[0], -1, -1, -1).to(codes.dtype)
        for layer, (block, r) in enumerate(zip(self.blocks, cfg.layer_resolutions())):
            if x.shape[-1] < r:
                x = _upsample(x)
            noise = self._noise(layer, x, seed)
            if layer < k:
                x = block.forward_regional(x, masks[r], codes[:, :, layer], noise)
            else:
                x = block.forward_plain(x, mean_code(codes[:, :, layer], masks[r]), noise)
        last = cfg.num_layers - 1
        top = masks[cfg.resolution]
        if last < k:
            rgb = self.to_rgb.forward_regional(x, top, codes[:, :, last])
        else:
            rgb = self.to_rgb.forward_plain(x, mean_code(codes[:, :, last], top))
        return torch.tanh(rgb)

    forward = synthesize

    def synthesize_plain(self, w: torch.Tensor, seed: int = 0) -> torch.Tensor:
        """Non-regional generator: one code per layer, w of shape (B, L, D)."""
        cfg = self.config
        x = self.const.expand(w.shape[0], -1, -1, -1).to(w.dtype)
        for layer, (block, r) in enumerate(zip(self.blocks, cfg.layer_resolutions())):
            if x.shape[-1] < r:
                x = _upsample(x)
            x = block.forward_plain(x, w[:, layer], self._noise(layer, x, seed))
        return torch.tanh(self.to_rgb.forward_plain(x, w[:, -1]))


def mean_code(codes: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Area-weighted mean of (B, C, D) codes under (B, C, h, w) indicators."""
    frac = masks.mean(dim=(-2, -1))
    return torch.einsum("bc,bcd->bd", frac, codes)


def locality_radius(config: GeneratorConfig, labels, j: int) -> int | None:
    """Chebyshev radius (output pixels) around region ``j`` outside which changing
    only the codes of region ``j`` cannot alter the output, or ``None`` when ``j``
    never reaches any injected layer. Valid for K = L.

    A changed layer-l pixel at scale factor f covers an f x f block whose top-left
    sample is labelled j (offset f - 1). Each later 3x3 conv at factor f' spreads by
    f', each bilinear x2 upsample from factor f' by f' / 2.
    """
    if config.num_mask_layers != config.num_layers:
        raise ValueError("locality bound only holds when every layer is mask-guided")
    labels = validate_labelmap(labels)
    res = config.layer_resolutions()
    big = config.resolution
    best = None
    for start, r in enumerate(res):
        if not (downsample_mask(labels, r) == j).any():
            continue
        f = big // r
        rho = f - 1
        prev = r
        for later in res[start + 1:]:
            if later > prev:
                rho += (big // prev) // 2
                prev = later
            rho += big // later
        best = rho if best is None else max(best, rho)
    return best
