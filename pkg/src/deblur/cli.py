"""``deblur`` command line: train, eval, deblur, synth.

Exit status is 0 on success, 1 for usage errors (bad arguments, unreadable or
invalid config) and 2 for failures while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, dataset, imaging, tensor
from .models import ConfigError
from .train import TrainingError, evaluate, load_generator, load_run_config, parse_config, train

log = logging.getLogger("deblur")

USAGE, FAILURE = 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_train(args) -> int:
    try:
        cfg = load_run_config(args.config, _overrides(args.set))
    except (OSError, ValueError, ConfigError) as e:
        raise UsageError(f"{args.config}: {e}") from None
    for key in ("train_dir", "val_dir", "resume"):
        val = getattr(cfg, key)
        if (val or key == "train_dir") and not Path(val).exists():
            raise UsageError(f"{key} {val!r} does not exist")

    def progress(step, total, g, d):
        if step % max(1, total // 20) == 0 or step == total:
            log.info("step %d/%d  g_loss %.4f  d_loss %.4f", step, total, g, d)

    final = train(cfg, progress)
    print(final)
    return 0


def cmd_eval(args) -> int:
    names, blurred, sharp = dataset.load_pairs(args.data_dir)
    model, gcfg = _load_for(args.checkpoint, blurred.shape[1:3])
    rep, base = evaluate(model, gcfg, names, blurred, sharp)
    out = Path(args.out) if args.out else Path(args.data_dir) / "eval_report.tsv"
    rep.write(out)
    print(rep.to_text())
    print(f"blurred baseline: psnr {base.mean_psnr:.4f} ssim {base.mean_ssim:.4f}")
    print(out)
    return 0


def _load_for(path, size):
    try:
        return load_generator(path, size)
    except ConfigError as e:
        raise checkpoint.CheckpointError(str(e)) from None


def cmd_deblur(args) -> int:
    img = imaging.load_image(args.input)
    if img.shape[2] != 3:
        img = np.repeat(img, 3, axis=2)
    h, w = img.shape[:2]
    try:
        model, gcfg = load_generator(args.checkpoint, (h, w))
    except ConfigError as e:
        raise ConfigError(f"{args.input} is {w}x{h}: {e}; pad or crop the image to fit") from None
    x = imaging.edge_input(img) if gcfg.use_edge_channel else imaging.normalize(img)
    model.eval()
    with tensor.no_grad():
        y = model(x)
    imaging.save_image(imaging.denormalize(y), args.output)
    print(args.output)
    return 0


SYNTH_KEYS = {"seed", "source", "out", "count"}


def cmd_synth(args) -> int:
    try:
        raw = parse_config(Path(args.config).read_text())
        raw.update(_overrides(args.set))
        spec_fields = {f.name: f for f in dataclasses.fields(dataset.DatasetSpec)}
        unknown = sorted(set(raw) - SYNTH_KEYS - set(spec_fields))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "seed" not in raw or "out" not in raw:
            raise ValueError("config must set 'seed' and 'out'")
        kw = {k: type(spec_fields[k].default)(v) for k, v in raw.items() if k in spec_fields}
        spec = dataset.DatasetSpec(**kw)
        seed, count = int(raw["seed"]), int(raw.get("count", "16"))
    except (OSError, ValueError) as e:
        raise UsageError(f"{args.config}: {e}") from None
    base = Path(args.config).parent
    source = raw.get("source", dataset.PROCEDURAL)
    if source != dataset.PROCEDURAL:
        source = base / source
    out = base / raw["out"]
    manifest = dataset.make_dataset(source, out, spec, count, np.random.default_rng(seed))
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deblur", description="GAN image deblurring on a numpy autodiff core.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a generator/discriminator pair from a config file")
    t.add_argument("config")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a paired dataset")
    e.add_argument("checkpoint")
    e.add_argument("data_dir")
    e.add_argument("--out", help="report path (default: <data_dir>/eval_report.tsv)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("deblur", help="restore one image")
    d.add_argument("checkpoint")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_deblur)

    s = sub.add_parser("synth", help="synthesize a blurred/sharp dataset")
    s.add_argument("config")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="# %(message)s")
    prec = os.environ.get("DEBLUR_PRECISION")
    try:
        if prec:
            try:
                tensor.set_precision(prec)
            except ValueError as e:
                raise UsageError(f"DEBLUR_PRECISION: {e}") from None
        return args.func(args)
    except UsageError as e:
        print(f"deblur {args.command}: {e}", file=sys.stderr)
        return USAGE
    except (OSError, ValueError, TrainingError, checkpoint.CheckpointError, imaging.ImageFormatError) as e:
        print(f"deblur {args.command}: {e}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
