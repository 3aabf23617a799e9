import pytest
import torch
import yaml

from rgi.cli import main
from rgi.latent import load_styles
from rgi.model import load_checkpoint

CONFIG = {
    "model": {"resolution": 16, "style_dim": 8, "channel_base": 4, "channel_max": 16},
    "train": {"steps": 3, "batch_size": 2},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.yaml"
    cfg.write_text(yaml.safe_dump(CONFIG))
    main(["--seed", "1", "--out", str(root / "data"), "synth-data", "--num-samples", "4", "--resolution", "16"])
    main(["--config", str(cfg), "--seed", "1", "--out", str(root / "run"), "train", "--data", str(root / "data")])
    return root, cfg


def sample(root, i, kind):
    return str(root / "data" / ("images" if kind == "image" else "masks") / f"{i:05d}.png")


def run_twice(root, tmp_name, argv_fn):
    outs = []
    for k in range(2):
        stem, _, ext = tmp_name.partition(".")
        out = root / f"{stem}_{k}.{ext}"
        main(argv_fn(out))
        outs.append(out.read_bytes() if out.is_file() else None)
    return outs


def test_train_writes_checkpoint_and_metrics(workspace):
    root, _ = workspace
    model, payload = load_checkpoint(root / "run" / "checkpoint.pt")
    assert payload["step"] == 3 and model.config.generator.resolution == 16
    assert (root / "run" / "metrics.csv").read_text().count("\n") == 4


def test_train_is_seed_deterministic(workspace):
    root, cfg = workspace
    main(["--config", str(cfg), "--seed", "1", "--out", str(root / "run2"), "train", "--data", str(root / "data")])
    a, _ = load_checkpoint(root / "run" / "checkpoint.pt")
    b, _ = load_checkpoint(root / "run2" / "checkpoint.pt")
    sa, sb = a.state_dict(), b.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_reconstruct_swap_edit_invert_eval(workspace):
    root, _ = workspace
    ckpt = str(root / "run" / "checkpoint.pt")
    base = ["--seed", "2", "--checkpoint", ckpt]

    a, b = run_twice(root, "rec.png", lambda o: base + ["--out", str(o), "reconstruct", "--image",
                                                        sample(root, 0, "image"), "--mask", sample(root, 0, "mask")])
    assert a == b and a

    a, b = run_twice(root, "swap.png", lambda o: base + [
        "--out", str(o), "swap", "--target-image", sample(root, 0, "image"), "--target-mask", sample(root, 0, "mask"),
        "--driven-image", sample(root, 1, "image"), "--driven-mask", sample(root, 1, "mask"), "--alpha", "0.5"])
    assert a == b and a

    a, b = run_twice(root, "edit.png", lambda o: base + [
        "--out", str(o), "edit", "--image", sample(root, 0, "image"), "--mask", sample(root, 0, "mask"),
        "--edited-mask", sample(root, 1, "mask"), "--region", "8",
        "--reference-image", sample(root, 2, "image"), "--reference-mask", sample(root, 2, "mask")])
    assert a == b and a

    a, b = run_twice(root, "codes.bin", lambda o: base + [
        "--out", str(o), "invert", "--image", sample(root, 0, "image"), "--mask", sample(root, 0, "mask"),
        "--steps", "3", "--render", str(root / "inv.png")])
    assert a == b
    assert load_styles(root / "codes_0.bin").shape == (12, 6, 8)
    assert (root / "inv.png").exists()

    main(base + ["--out", str(root / "eval.csv"), "eval", "--data", str(root / "data")])
    assert (root / "eval.csv").read_text().splitlines()[-1].startswith("mean")


def test_missing_checkpoint_is_reported(workspace):
    root, _ = workspace
    with pytest.raises(SystemExit, match="--checkpoint"):
        main(["--out", str(root / "x.png"), "reconstruct", "--image", sample(root, 0, "image"),
              "--mask", sample(root, 0, "mask")])
