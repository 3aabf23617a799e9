import numpy as np
import pytest
import torch

from helpers import synthetic_dataset
from rgi.metrics import PSNR_CAP, evaluate, image_metrics, mean_color_baseline, psnr, rmse, ssim
from rgi.model import ModelConfig, RGIModel


def gaussian_filter(x: np.ndarray, sigma: float = 1.5, radius: int = 5) -> np.ndarray:
    t = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    p = np.pad(x, radius, mode="symmetric")
    rows = sum(k[i] * p[:, i:i + x.shape[1]] for i in range(2 * radius + 1))
    return sum(k[i] * rows[i:i + x.shape[0]] for i in range(2 * radius + 1))


def oracle_ssim(a: np.ndarray, b: np.ndarray) -> float:
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for c in range(a.shape[-1]):
        x, y = a[..., c], b[..., c]
        mx, my = gaussian_filter(x), gaussian_filter(y)
        vx = gaussian_filter(x * x) - mx ** 2
        vy = gaussian_filter(y * y) - my ** 2
        cov = gaussian_filter(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        vals.append(s[5:-5, 5:-5].mean())
    return float(np.mean(vals))


def unit_image(seed, size=32):
    return np.random.default_rng(seed).uniform(0, 1, (size, size, 3))


def test_identical_images():
    a = unit_image(0)
    assert psnr(a, a) == PSNR_CAP
    assert ssim(a, a) == pytest.approx(1.0)
    assert rmse(a, a) == 0.0


def test_constant_offset_rmse():
    a = unit_image(1) * 0.8
    assert rmse(a, a + 0.1) == pytest.approx(0.1)
    assert psnr(a, a + 0.1) == pytest.approx(20.0)


def test_negative_less_similar():
    a = unit_image(2)
    assert ssim(a, 1 - a) < ssim(a, a)


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_oracle(seed):
    a = unit_image(seed)
    b = np.clip(a + np.random.default_rng(seed + 10).normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(oracle_ssim(a, b), abs=1e-6)


def test_image_metrics_rescale_tensors():
    t = torch.rand(3, 16, 16) * 2 - 1
    m = image_metrics(t, (t + 0.2).clamp(-1, 1))
    a = ((t.double() + 1) / 2).permute(1, 2, 0).numpy()
    b = (((t + 0.2).clamp(-1, 1).double() + 1) / 2).permute(1, 2, 0).numpy()
    assert m["rmse"] == pytest.approx(np.sqrt(((a - b) ** 2).mean()))
    with pytest.raises(ValueError):
        image_metrics(t, torch.zeros(3, 8, 8))


def test_mean_color_baseline_is_best_constant():
    t = torch.rand(3, 16, 16) * 2 - 1
    base = mean_color_baseline(t)
    a = ((t.double() + 1) / 2).permute(1, 2, 0).numpy()
    best = psnr(a, base)
    for delta in (-0.02, 0.02):
        assert psnr(a, np.clip(base + delta, 0, 1)) < best


def test_evaluate_writes_table(tmp_path):
    model = RGIModel(ModelConfig.create(resolution=16, style_dim=8, channel_base=4, channel_max=16)).eval()
    ds = synthetic_dataset(3, resolution=16)
    rows, means = evaluate(ds, model, out_csv=tmp_path / "m.csv")
    assert len(rows) == 3 and set(means) == {"psnr", "ssim", "rmse", "baseline_psnr"}
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[-1].startswith("mean")
    with pytest.raises(ValueError):
        evaluate(ds.subset([]), model)
