"""Wall-clock comparison of the parallel attention path against the loop reference."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .attention import MHTMA, attention_loop_reference, mhtma_forward
from .masks import generate_freeform_mask
from .tensor import Tensor, no_grad


@dataclass
class BenchConfig:
    batch_sizes: tuple[int, ...] = (1, 2, 4, 8, 16)
    size: int = 32
    channels: int = 32
    patch_size: int = 3
    n_heads: int = 2
    repeats: int = 5
    seed: int = 0
    tolerance: float = 1e-10


@dataclass
class BenchResult:
    batch_sizes: list[int] = field(default_factory=list)
    parallel_s: list[float] = field(default_factory=list)
    loop_s: list[float] = field(default_factory=list)
    max_abs_diff: list[float] = field(default_factory=list)

    @property
    def speedups(self) -> list[float]:
        return [lo / pa for lo, pa in zip(self.loop_s, self.parallel_s)]

    def loop_linear_r2(self) -> float:
        return linear_r2(np.array(self.batch_sizes, dtype=np.float64), np.array(self.loop_s))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["batch", "parallel_s", "loop_s", "speedup", "max_abs_diff"])
        for row in zip(self.batch_sizes, self.parallel_s, self.loop_s, self.speedups, self.max_abs_diff):
            writer.writerow([row[0]] + [f"{v:.6g}" for v in row[1:]])
        return buf.getvalue()


def linear_r2(x: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of determination of the least-squares line through ``(x, y)``."""
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = ((y - y.mean()) ** 2).sum()
    return float(1.0 - (resid ** 2).sum() / total) if total > 0 else 1.0


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


class EquivalenceError(AssertionError):
    pass


def bench_attention(cfg: BenchConfig = BenchConfig()) -> BenchResult:
    """Median-of-``repeats`` timings per batch size after checking both paths agree."""
    rng = np.random.default_rng(cfg.seed)
    params = MHTMA.uniform(cfg.channels, cfg.n_heads, rng, patch_size=cfg.patch_size, dtype=np.float64)
    result = BenchResult()
    for n in cfg.batch_sizes:
        f = rng.standard_normal((n, cfg.size, cfg.size, cfg.channels))
        mask = np.stack([generate_freeform_mask(cfg.size, cfg.size, [cfg.seed, n, j]) for j in range(n)])
        x = Tensor(f)
        with no_grad():
            fast = mhtma_forward(x, mask, params).data
            slow = attention_loop_reference(f, mask, params)
            diff = float(np.abs(fast - slow).max())
            if diff > cfg.tolerance:
                raise EquivalenceError(f"batch {n}: paths differ by {diff:.3e}")
            par = _median_time(lambda: mhtma_forward(x, mask, params), cfg.repeats)
            loop = _median_time(lambda: attention_loop_reference(f, mask, params), cfg.repeats)
        result.batch_sizes.append(n)
        result.parallel_s.append(par)
        result.loop_s.append(loop)
        result.max_abs_diff.append(diff)
    return result
