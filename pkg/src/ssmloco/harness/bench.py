"""Token-count scaling of the selective scan versus self-attention."""
from __future__ import annotations

import csv
import gc
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from ..attnbase import AttnLayer
from ..diffcore import Tensor
from ..ssm import SelectiveSSMLayer

BENCH_COLUMNS = ("backend", "tokens", "repeats", "mean_ns", "p50_ns", "p95_ns", "peak_bytes", "matrix_bytes")
DEFAULT_GRID = (64, 128, 256, 512, 1024)


@dataclass
class BenchRow:
    backend: str
    tokens: int
    repeats: int
    mean_ns: float
    p50_ns: float
    p95_ns: float
    peak_bytes: int
    matrix_bytes: int = 0


def loglog_slope(n, y) -> float:
    """Least-squares slope of log(y) against log(n)."""
    x = np.log(np.asarray(n, dtype=np.float64))
    y = np.log(np.asarray(y, dtype=np.float64))
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _time(fn, repeats: int, warmup: int = 2) -> np.ndarray:
    for _ in range(warmup):
        fn()
    out = np.empty(repeats)
    for i in range(repeats):
        t = time.perf_counter_ns()
        fn()
        out[i] = time.perf_counter_ns() - t
    return out


def _peak(fn) -> int:
    gc.collect()
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def bench_scan(grid=DEFAULT_GRID, repeats: int = 5, d: int = 32, h: int = 8, heads: int = 2,
               ffn: int | None = None, seed: int = 0, backends=("sequential", "parallel", "attention"),
               batch: int = 16):
    """Time one layer forward per backend on identical (batch, N, d) token grids.

    The batch amortizes the fixed per-op interpreter cost, which otherwise
    dominates at small N and flattens every slope toward zero.
    """
    rng = np.random.default_rng(seed)
    ssm = SelectiveSSMLayer(d, h, rng)
    attn = AttnLayer(d, heads, ffn or 2 * d, rng)
    rows = []
    for n in grid:
        tokens = Tensor(rng.standard_normal((batch, n, d)).astype(np.float32))
        x0 = np.zeros((batch, d, h), dtype=np.float32)
        for backend in backends:
            if backend == "attention":
                fn = lambda: attn(tokens)             # noqa: E731
                matrix = batch * heads * n * n * np.dtype(np.float32).itemsize
            else:
                fn = (lambda b: lambda: ssm(tokens, x0, backend=b))(backend)
                matrix = 0
            t = _time(fn, repeats)
            rows.append(BenchRow(backend if backend == "attention" else f"ssm-{backend}", n, repeats,
                                 float(t.mean()), float(np.percentile(t, 50)), float(np.percentile(t, 95)),
                                 _peak(fn), matrix))
    return rows


def slopes(rows) -> dict:
    """Log-log time and memory slopes per backend (using median times)."""
    out = {}
    for backend in dict.fromkeys(r.backend for r in rows):
        sel = [r for r in rows if r.backend == backend]
        n = [r.tokens for r in sel]
        out[backend] = {"time": loglog_slope(n, [r.p50_ns for r in sel]),
                        "peak_bytes": loglog_slope(n, [r.peak_bytes for r in sel])}
        if all(r.matrix_bytes for r in sel):
            out[backend]["matrix_bytes"] = loglog_slope(n, [r.matrix_bytes for r in sel])
    return out


def write_bench_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow([getattr(r, c) for c in BENCH_COLUMNS])
