"""Parallel vs loop attention timings across batch sizes.

    python3 scripts/bench_attention.py [--out bench.csv] [--plot bench.png]
"""
import argparse
import warnings

from tempattn.attention import DegenerateMaskWarning
from tempattn.bench import BenchConfig, bench_attention


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch-sizes", default="1,2,4,8,16")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out")
    p.add_argument("--plot")
    args = p.parse_args()

    warnings.simplefilter("ignore", DegenerateMaskWarning)
    cfg = BenchConfig(batch_sizes=tuple(int(b) for b in args.batch_sizes.split(",")), repeats=args.repeats)
    res = bench_attention(cfg)
    print(res.to_csv(), end="")
    print(f"loop linear fit R^2 = {res.loop_linear_r2():.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(res.to_csv())
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(res.batch_sizes, res.loop_s, "o-", label="loop")
        ax.plot(res.batch_sizes, res.parallel_s, "s-", label="parallel")
        ax.set_xlabel("batch size")
        ax.set_ylabel("median seconds")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
