"""Shared toy-training run for the acceptance suite, cached on disk.

Run directly (``python tests/toy_run.py``) to pre-build the cache.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import torch

from rgi.data import ImageMaskDataset
from rgi.losses import LossConfig
from rgi.model import ModelConfig, load_checkpoint
from rgi.synth import SynthSpec, generate_synthetic_dataset
from rgi.training import TrainConfig, train

NUM_TRAIN = 1000
NUM_HELDOUT = 100
STEPS = 5000
SEED = 0

CACHE_ROOT = Path(os.environ.get("RGI_ACCEPTANCE_CACHE", Path(__file__).resolve().parent.parent / ".acceptance_cache"))


def _configs():
    spec = SynthSpec(resolution=64, num_samples=NUM_TRAIN + NUM_HELDOUT, seed=SEED)
    return spec, TrainConfig(steps=STEPS), LossConfig()


def _key(spec, train_cfg, loss_cfg) -> str:
    blob = json.dumps([spec.to_dict(), train_cfg.to_dict(), loss_cfg.to_dict(), ModelConfig().to_dict(), SEED],
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_data(root: Path, spec: SynthSpec):
    if not (root / "spec.json").exists():
        generate_synthetic_dataset(spec, root)
    full = ImageMaskDataset.from_dir(root)
    return full.subset(range(NUM_TRAIN)), full.subset(range(NUM_TRAIN, NUM_TRAIN + NUM_HELDOUT))


def toy_run():
    """Returns (model, history, train set, held-out set); trains only on cache miss."""
    spec, train_cfg, loss_cfg = _configs()
    run_dir = CACHE_ROOT / _key(spec, train_cfg, loss_cfg)
    train_ds, heldout = load_data(CACHE_ROOT / f"data_{SEED}", spec)
    ckpt = run_dir / "checkpoint.pt"
    hist = run_dir / "history.json"
    if not (ckpt.exists() and hist.exists()):
        torch.set_num_threads(1)
        result = train(train_ds, train_cfg, loss_cfg, seed=SEED, out_dir=run_dir)
        hist.write_text(json.dumps(result.history))
    model, _ = load_checkpoint(ckpt)
    return model, json.loads(hist.read_text()), train_ds, heldout


if __name__ == "__main__":
    import logging
    import time

    logging.basicConfig(level=logging.INFO)
    t = time.time()
    _, history, _, _ = toy_run()
    print(f"done in {time.time() - t:.0f}s; initial {history[0]['total']:.4f} final {history[-1]['total']:.4f}")
