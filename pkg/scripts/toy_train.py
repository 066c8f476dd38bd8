"""Toy-scale training run with temperature curves.

    python3 scripts/toy_train.py --out runs/toy [--config configs/toy.txt] [--plot]

Writes train_log.csv and checkpoints to --out, prints the reconstruction-loss
ratio used by the acceptance suite and, with --plot, saves temperatures.png.
"""
import argparse
import csv
import warnings
from pathlib import Path

import numpy as np

from tempattn.attention import DegenerateMaskWarning
from tempattn.config import TrainConfig
from tempattn.train import Trainer

ROOT = Path(__file__).resolve().parents[1]


def loss_ratio(loss_r: np.ndarray) -> float:
    # steps are 1-based in the log: 10..110 and 900..1000
    return float(loss_r[899:1000].mean() / loss_r[9:110].mean())


def plot_temperatures(log_path: Path, out_png: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(log_path) as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in (k for k in rows[0] if k.startswith("t") and k[1:].isdigit()):
        ax.plot(steps, [float(r[key]) for r in rows], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("temperature")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(ROOT / "configs" / "toy.txt"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    args = p.parse_args()

    warnings.simplefilter("ignore", DegenerateMaskWarning)
    cfg = TrainConfig.from_file(args.config, args.set)
    result = Trainer(cfg).train_loop(args.out)
    loss_r = np.array([r["loss_r"] for r in result.rows])
    print(f"steps={result.steps} best_val={result.best_val:.4f} stopped_early={result.stopped_early}")
    if len(loss_r) >= 1000:
        print(f"loss_r ratio (900-1000 vs 10-110) = {loss_ratio(loss_r):.3f}")
    last = result.rows[-1]
    print("final temperatures:", ", ".join(f"{k}={v:.4g}" for k, v in last.items() if k[0] == "t" and k[1:].isdigit()))
    if args.plot:
        plot_temperatures(Path(args.out) / "train_log.csv", Path(args.out) / "temperatures.png")


if __name__ == "__main__":
    main()
