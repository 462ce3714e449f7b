"""Command-line entry point.

Subcommands: train-negan, train-iegan, degrade, edit, eval, serve.
Exit codes: 0 success, 2 configuration error, 3 data error. Config
precedence is CLI flag > config file > built-in default; the resolved
config is echoed into every output artifact. See docs/config.md.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import torch

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def resolve_config(config_path, overrides: dict):
    """flag > file > default."""
    from .trainer import TrainConfig

    values = {}
    if config_path:
        try:
            file_values = json.loads(Path(config_path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        profile = file_values.pop("profile", None)
        values.update(file_values)
    else:
        profile = None
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        if profile == "desk":
            return TrainConfig.desk(**values)
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_gray_folder(folder, crop):
    from . import datapipe

    images = datapipe.load_folder(Path(folder), crop, grayscale=True)
    if not images:
        raise DataError(f"no usable images in {folder}")
    return images


def _load_negan_generator(path):
    from . import trainer
    from .models import NoiseGenerator

    state = trainer.load_checkpoint(path)
    cfg = trainer.TrainConfig(**state["config"])
    g = NoiseGenerator(width=cfg.negan_width, blocks=cfg.negan_blocks)
    trainer.restore_networks(state["tensors"], {"G": g})
    g.eval()
    return g


def cmd_train_negan(args) -> int:
    from . import trainer

    cfg = resolve_config(args.config, {"seed": args.seed})
    clean = _load_gray_folder(args.clean, cfg.crop)
    noisy = _load_gray_folder(args.noisy, cfg.crop)
    result = trainer.train_negan(cfg, clean, noisy)
    trainer.save_checkpoint(result.checkpoint, args.out)
    logger.info("saved noise-prior checkpoint to %s", args.out)
    return EXIT_OK


def cmd_train_iegan(args) -> int:
    from . import datapipe, trainer

    cfg = resolve_config(args.config, {"seed": args.seed})
    clean = datapipe.load_folder(Path(args.clean), cfg.crop, grayscale=False)
    if not clean:
        raise DataError(f"no usable images in {args.clean}")
    templates = datapipe.load_mask_templates(Path(args.masks), cfg.crop) if args.masks else []
    frozen_g = _load_negan_generator(args.negan) if args.negan else None
    result = trainer.train_iegan(cfg, clean, frozen_g, mask_templates=templates)
    trainer.save_checkpoint(result.checkpoint, args.out)
    logger.info("saved editing checkpoint to %s", args.out)
    return EXIT_OK


def cmd_degrade(args) -> int:
    import numpy as np
    from PIL import Image

    from . import datapipe

    g = _load_negan_generator(args.negan)
    in_dir, out_dir = Path(args.input), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in datapipe.IMAGE_SUFFIXES)
    if not paths:
        raise DataError(f"no images found in {in_dir}")
    for path in paths:
        x = datapipe.load_image(path, grayscale=True)
        with torch.no_grad():
            degraded = g(x.unsqueeze(0)).squeeze(0).clamp(0, 1)
        arr = (degraded.squeeze(0).numpy() * 255.0).round().astype(np.uint8)
        Image.fromarray(arr, mode="L").save(out_dir / f"{path.stem}.png")
    logger.info("degraded %d images into %s", len(paths), out_dir)
    return EXIT_OK


def cmd_edit(args) -> int:
    import numpy as np
    from PIL import Image

    from . import datapipe, editor, service

    bundle = service.ModelBundle.from_checkpoints(args.checkpoint_c, args.checkpoint_r)
    try:
        gray = datapipe.load_image(Path(args.image), grayscale=True)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    h, w = gray.shape[-2:]
    if args.mask:
        mask = (datapipe.load_image(Path(args.mask), grayscale=True) >= 0.5).float()
    else:
        mask = torch.ones(1, h, w)
    strokes = []
    if args.scribbles:
        raw = json.loads(Path(args.scribbles).read_text())
        strokes = [service.ScribbleStroke(**item) for item in raw]
        for i, s in enumerate(strokes):
            s.validate(w, h, i)
    hints = service.rasterize_strokes(strokes, h, w)
    result = editor.edit(editor.EditRequest(gray=gray, mask=mask, scribbles=hints), bundle.c, bundle.r)
    arr = (result.clamp(0, 1).numpy() * 255.0).round().astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr).save(args.out)
    logger.info("wrote %s", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import editor, service

    bundle = service.ModelBundle.from_checkpoints(args.checkpoint_c, args.checkpoint_r)
    try:
        report = editor.evaluate(
            args.dataset,
            bundle.c,
            bundle.r,
            size=args.size,
            sigma=args.sigma,
            scribbles=args.scribbles,
            seed=args.seed,
            report_path=args.report,
            max_images=args.max_images,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(editor.format_report(report))
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import service

    service.serve(
        args.checkpoint_c,
        args.checkpoint_r,
        port=args.port,
        max_side=args.max_side,
        workers=args.workers,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpedit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-negan", help="learn the noise prior from unpaired folders")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_negan)

    p = sub.add_parser("train-iegan", help="train the editing networks")
    p.add_argument("--clean", required=True)
    p.add_argument("--masks")
    p.add_argument("--negan")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_iegan)

    p = sub.add_parser("degrade", help="batch-apply the learned noise prior")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--negan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("edit", help="edit one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--scribbles")
    p.add_argument("--checkpoint-c", required=True)
    p.add_argument("--checkpoint-r", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="run the quantitative protocol")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint-c", required=True)
    p.add_argument("--checkpoint-r", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--scribbles", type=int, default=30)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-images", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the inference service")
    p.add_argument("--checkpoint-c", required=True)
    p.add_argument("--checkpoint-r", required=True)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--max-side", type=int, default=2048)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
