"""List the ten ablation configurations and write a desk-scale run config for each.

    python scripts/table_configs.py --write runs/configs
"""

import argparse
from dataclasses import fields
from pathlib import Path

from deblur import models
from deblur.nn import make_rng
from deblur.train import RunConfig

SHARED = {"train_dir": "../data/train", "val_dir": "../data/val", "steps": 500, "patch_size": 64}


def run_config_text(row, seed=0):
    g = row.generator
    gen_keys = {f.name for f in fields(RunConfig)} & {f.name for f in fields(type(g))} - {"input_size"}
    lines = [f"# {row.name}", f"seed = {seed}", f"out_dir = ../{row.name}", f"classical_loss = {row.classical}"]
    lines += [f"{k} = {v}" for k, v in SHARED.items()]
    lines += [f"{k} = {str(getattr(g, k)).lower()}" for k in sorted(gen_keys)]
    if g.arch == "pix2pix":
        lines.append("# pix2pix depth follows the patch size (64 -> 6 stages)")
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--write", metavar="DIR", help="directory for <name>.cfg files")
    ap.add_argument("--count", action="store_true", help="build each model to count parameters (slow)")
    args = ap.parse_args()
    for row in models.table_rows():
        g = row.generator
        extra = ""
        if args.count:
            extra = f"  {models.build_generator(g, make_rng(0)).num_parameters():>11,d} params"
        print(f"{row.name:34s} {g.arch:10s} {g.input_size[0]}x{g.input_size[1]}  {row.classical:10s}{extra}")
        if args.write:
            out = Path(args.write)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{row.name}.cfg").write_text(run_config_text(row))


if __name__ == "__main__":
    main()
