"""Command line entry point: ``tempattn <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 numeric abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig
from .imageio import NetpbmError, read_image, read_mask, write_image, write_mask
from .optim import NumericAbort

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "TEMPATTN_THREADS"

logger = logging.getLogger("tempattn")


def thread_limit():
    """Cap BLAS/OpenMP pools at ``$TEMPATTN_THREADS`` when set."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# -- subcommands ------------------------------------------------------------

def cmd_train(args) -> int:
    from .train import Trainer

    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume)
        if args.set:
            raise ConfigError("--set cannot be combined with --resume; the checkpoint fixes the config")
    else:
        base = TrainConfig.from_file(args.config, args.set) if args.config else TrainConfig.from_text("", args.set)
        trainer = Trainer(base)
    result = trainer.train_loop(args.out, max_steps=args.max_steps)
    Path(args.out, "config.txt").write_text(trainer.cfg.to_text())
    print(f"steps={result.steps} best_val={result.best_val:.6f} early_stop={result.stopped_early}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .train import Trainer, infer

    model = Trainer.from_checkpoint(args.checkpoint)
    image = read_image(args.image)
    if image.ndim != 3:
        raise ConfigError(f"{args.image}: expected an RGB (P6) image")
    mask = read_mask(args.mask)
    sketch = read_mask(args.sketch) if args.sketch else None
    write_image(args.out, infer(image, mask, model, sketch))
    return EXIT_OK


def cmd_sketch(args) -> int:
    from .sketch import extract_sketch

    img = read_image(getattr(args, "in"))
    sk = extract_sketch(img, args.threshold, args.min_area)
    write_image(args.out, sk.astype(np.float64), "sketch: 255 (white) = stroke")
    return EXIT_OK


def cmd_mask_gen(args) -> int:
    from .masks import generate_freeform_mask

    write_mask(args.out, generate_freeform_mask(args.height, args.width, args.seed))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BenchConfig, bench_attention

    sizes = tuple(int(v) for v in args.batch_sizes.split(","))
    result = bench_attention(BenchConfig(batch_sizes=sizes, repeats=args.repeats, seed=args.seed))
    text = result.to_csv()
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {args.out}: {exc.strerror}") from exc
    sys.stdout.write(text)
    if len(sizes) >= 2:
        print(f"# loop time linear fit R^2 = {result.loop_linear_r2():.4f}")
    return EXIT_OK


def _pairs(a: Path, b: Path, mask: Path | None):
    if a.is_dir() != b.is_dir():
        raise ConfigError("compare two files or two directories, not one of each")
    if not a.is_dir():
        yield a.name, a, b, mask
        return
    names = sorted(p.name for p in a.iterdir() if p.suffix.lower() in (".ppm", ".pgm", ".pnm"))
    if not names:
        raise OSError(f"no Netpbm images in {a}")
    for name in names:
        other = b / name
        if not other.exists():
            raise OSError(f"{other}: no counterpart for {a / name}")
        m = mask / name if mask is not None and mask.is_dir() else mask
        yield name, a / name, other, m


def cmd_metrics(args) -> int:
    from .metrics import report

    hole = Path(args.hole_only) if args.hole_only else None
    rows = []
    for name, pa, pb, pm in _pairs(Path(args.a), Path(args.b), hole):
        m = read_mask(pm) if pm is not None else None
        r = report(read_image(pa), read_image(pb), m)
        rows.append((name, r.mae, r.psnr, r.ssim))
    out = open(args.out, "w", newline="") if args.out else contextlib.nullcontext(sys.stdout)
    with out as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "mae", "psnr", "ssim"])
        for name, *vals in rows:
            writer.writerow([name] + [f"{v:.6f}" for v in vals])
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tempattn", description="Temperature masked attention inpainting toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy inpainting model")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", required=True, help="output directory for log and checkpoints")
    p.add_argument("--resume", help="continue from a checkpoint")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="inpaint one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="P6 input image")
    p.add_argument("--mask", required=True, help="P5 mask, white = missing")
    p.add_argument("--sketch", help="P5 sketch strokes (sketch-guided models)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("sketch", help="extract a thinned edge sketch")
    p.add_argument("--in", required=True, help="input image")
    p.add_argument("--threshold", type=float, default=0.65)
    p.add_argument("--min-area", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sketch)

    p = sub.add_parser("mask-gen", help="write a random free-form mask")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mask_gen)

    p = sub.add_parser("bench-attention", help="time parallel vs loop attention")
    p.add_argument("--batch-sizes", default="1,2,4,8,16")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV destination (also printed)")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("metrics", help="MAE / PSNR / SSIM between images or directories")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--hole-only", metavar="MASK", help="mask file or directory; score hole pixels only")
    p.add_argument("--out", help="CSV destination (default stdout)")
    p.set_defaults(fn=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with thread_limit():
            return args.fn(args)
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, NetpbmError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
