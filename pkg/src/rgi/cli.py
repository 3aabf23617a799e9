"""Command-line interface: ``rgi <subcommand> [options]``.

Global options go before the subcommand: ``--config`` (YAML with optional
``model``, ``train``, ``loss``, ``synth``, ``stitch`` and ``category_table``
sections), ``--seed``, ``--checkpoint`` and ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch
import yaml

from rgi.data import ImageMaskDataset, ingest_dataset, load_image, load_mask, save_image
from rgi.inversion import DEFAULT_LR, DEFAULT_STEPS, optimize_codes
from rgi.latent import DEFAULT_TEXTURE_SET, SwapPlan, edit_region_style, load_styles, save_styles
from rgi.losses import LossConfig
from rgi.metrics import evaluate
from rgi.model import ModelConfig, load_checkpoint
from rgi.pipeline import DEFAULT_FEATHER, SwapRequest, edit_mask_and_render, reconstruct, swap_faces
from rgi.recompose import StitchRule
from rgi.segmap import CategoryTable
from rgi.synth import SynthSpec, generate_synthetic_dataset
from rgi.training import TrainConfig, ablation_config, train

log = logging.getLogger("rgi")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return yaml.safe_load(f) or {}


def _require(args, name: str):
    value = getattr(args, name)
    if value is None:
        raise SystemExit(f"--{name.replace('_', '-')} is required for '{args.command}'")
    return value


def _model(args):
    model, _ = load_checkpoint(_require(args, "checkpoint"))
    return model


def _pair(args, image: str, mask: str, resolution: int):
    return load_image(image, resolution), load_mask(mask, resolution)


def _dataset(path: str, cfg: dict, resolution: int, layout: str) -> ImageMaskDataset:
    if layout == "celebamask":
        table = CategoryTable.from_file(cfg["category_table"]) if cfg.get("category_table") else None
        return ingest_dataset(path, resolution, table)
    return ImageMaskDataset.from_dir(path, resolution)


def cmd_synth_data(args, cfg):
    spec_cfg = {**cfg.get("synth", {}), "seed": args.seed}
    for key in ("num_samples", "resolution", "eyeglass_prob", "earring_prob"):
        if getattr(args, key) is not None:
            spec_cfg[key] = getattr(args, key)
    spec = SynthSpec(**spec_cfg)
    root = generate_synthetic_dataset(spec, _require(args, "out"))
    print(f"wrote {spec.num_samples} samples to {root}")


def cmd_train(args, cfg):
    model_cfg = ModelConfig.create(**cfg.get("model", {}))
    train_cfg = TrainConfig.from_dict(cfg.get("train"))
    loss_cfg = LossConfig.from_dict(cfg.get("loss"))
    for key in ("steps", "batch_size", "lr"):
        if getattr(args, key) is not None:
            setattr(train_cfg, key, getattr(args, key))
    train_cfg = TrainConfig.from_dict(train_cfg.to_dict())
    loss_cfg, train_cfg = ablation_config(args.ablation, loss_cfg, train_cfg)
    ds = _dataset(args.data, cfg, model_cfg.generator.resolution, args.layout)
    result = train(ds, train_cfg, loss_cfg, seed=args.seed, model_cfg=model_cfg, out_dir=_require(args, "out"))
    print(f"checkpoint: {result.checkpoint}\nmetrics: {result.metrics_path}")


def cmd_reconstruct(args, cfg):
    model = _model(args)
    img, m = _pair(args, args.image, args.mask, model.config.generator.resolution)
    save_image(_require(args, "out"), reconstruct(img, m, model, seed=args.seed))


def cmd_invert(args, cfg):
    model = _model(args)
    img, m = _pair(args, args.image, args.mask, model.config.generator.resolution)
    if args.init:
        s_init = load_styles(args.init)[None]
    else:
        with torch.no_grad():
            s_init = model.encode(img[None], m[None])
    loss_cfg = LossConfig.from_dict(cfg.get("loss"))
    codes = optimize_codes(img[None], m[None], s_init, model.generator, steps=args.steps, lr=args.lr,
                           loss_cfg=loss_cfg, seed=args.seed)
    save_styles(_require(args, "out"), codes[0])
    if args.render:
        with torch.no_grad():
            save_image(args.render, model.synthesize(m[None], codes, args.seed)[0])


def cmd_swap(args, cfg):
    model = _model(args)
    r = model.config.generator.resolution
    ti, tm = _pair(args, args.target_image, args.target_mask, r)
    di, dm = _pair(args, args.driven_image, args.driven_mask, r)
    regions = DEFAULT_TEXTURE_SET if args.regions is None else frozenset(args.regions)
    rule = StitchRule.from_dict(cfg["stitch"]) if cfg.get("stitch") else None
    req = SwapRequest(ti, tm, di, dm, SwapPlan(regions, args.alpha), args.feather, rule)
    save_image(_require(args, "out"), swap_faces(req, model, seed=args.seed))


def cmd_edit(args, cfg):
    model = _model(args)
    r = model.config.generator.resolution
    img, m = _pair(args, args.image, args.mask, r)
    edited = load_mask(args.edited_mask, r) if args.edited_mask else m
    with torch.no_grad():
        codes = model.encode(img[None], m[None])
        if args.region is not None:
            ref_img, ref_m = _pair(args, _require(args, "reference_image"), _require(args, "reference_mask"), r)
            codes = edit_region_style(codes, args.region, model.encode(ref_img[None], ref_m[None]))
            out = model.synthesize(edited[None], codes, args.seed)[0]
        else:
            out = edit_mask_and_render(img, m, edited, model, seed=args.seed)
    save_image(_require(args, "out"), out)


def cmd_eval(args, cfg):
    model = _model(args)
    ds = _dataset(args.data, cfg, model.config.generator.resolution, args.layout)
    _, means = evaluate(ds, model, seed=args.seed, out_csv=_require(args, "out"))
    print(json.dumps(means, indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgi", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="model checkpoint (.pt)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="generate a synthetic layered-face dataset")
    s.add_argument("--num-samples", type=int)
    s.add_argument("--resolution", type=int)
    s.add_argument("--eyeglass-prob", type=float)
    s.add_argument("--earring-prob", type=float)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", help="reconstruction training")
    s.add_argument("--data", required=True)
    s.add_argument("--layout", choices=("synthetic", "celebamask"), default="synthetic")
    s.add_argument("--steps", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--ablation", choices=("full", "A", "B"), default="full")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", help="encode and re-synthesize one image")
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("invert", help="optimize regional codes for one image")
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--init", help="initial codes (style file); default: encoder output")
    s.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    s.add_argument("--lr", type=float, default=DEFAULT_LR)
    s.add_argument("--render", help="also write the rendered reconstruction here")
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("swap", help="swap driven face onto target")
    s.add_argument("--target-image", required=True)
    s.add_argument("--target-mask", required=True)
    s.add_argument("--driven-image", required=True)
    s.add_argument("--driven-mask", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--regions", type=int, nargs="*", help="categories taking driven texture")
    s.add_argument("--feather", type=float, default=DEFAULT_FEATHER)
    s.set_defaults(func=cmd_swap)

    s = sub.add_parser("edit", help="render with an edited mask and/or a region style from a reference")
    s.add_argument("--image", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--edited-mask")
    s.add_argument("--region", type=int)
    s.add_argument("--reference-image")
    s.add_argument("--reference-mask")
    s.set_defaults(func=cmd_edit)

    s = sub.add_parser("eval", help="PSNR/SSIM/RMSE of reconstructions")
    s.add_argument("--data", required=True)
    s.add_argument("--layout", choices=("synthetic", "celebamask"), default="synthetic")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    torch.manual_seed(args.seed)
    args.func(args, _load_config(args.config))
    return 0


if __name__ == "__main__":
    sys.exit(main())
