"""Wall-clock micro-benchmark comparing the two routing procedures.

Timings run under ``no_grad`` on shared random vote tensors so both methods
see identical inputs and neither pays graph-recording costs. The attention
pass has no iteration count; its single measurement per shape is repeated
across the requested r values to keep the table rectangular.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .capsules import attention_routing, dynamic_routing
from .tensor import Tensor, no_grad

__all__ = ["BenchRow", "bench_routing", "rows_to_csv"]

DEFAULT_SHAPES = ((128, 2, 16), (512, 2, 16), (1152, 2, 16))


@dataclass
class BenchRow:
    method: str
    n_in: int
    n_out: int
    d_out: int
    iterations: int
    median_seconds: float

    def csv(self) -> str:
        return (
            f"{self.method},{self.n_in},{self.n_out},{self.d_out},"
            f"{self.iterations},{self.median_seconds:.9f}"
        )


def _time_call(fn, repeats: int, warmup: int = 3) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_routing(
    shapes=DEFAULT_SHAPES,
    r_values=(1, 2, 3),
    repeats: int = 20,
    batch: int = 8,
    seed: int = 0,
) -> list[BenchRow]:
    """Median per-call seconds of dynamic(r) and attention routing per vote shape."""
    rng = np.random.default_rng(seed)
    rows: list[BenchRow] = []
    with no_grad():
        for n_in, n_out, d_out in shapes:
            votes = Tensor(rng.normal(0.0, 0.5, size=(batch, n_in, n_out, d_out)))
            weight = Tensor(rng.normal(0.0, 0.3, size=(d_out, 1)))
            bias = Tensor(np.zeros(()))
            for r in r_values:
                med = _time_call(lambda: dynamic_routing(votes, r), repeats)
                rows.append(BenchRow("dynamic", n_in, n_out, d_out, r, med))
            att = _time_call(lambda: attention_routing(votes, weight, bias), repeats)
            for r in r_values:  # r is unused by the single-pass method
                rows.append(BenchRow("attention", n_in, n_out, d_out, r, att))
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    return "\n".join(["method,n_in,n_out,d_out,iterations,median_seconds"] + [r.csv() for r in rows]) + "\n"
