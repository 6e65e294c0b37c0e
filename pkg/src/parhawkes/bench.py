"""Backend benchmark harness.

Times one epoch-equivalent (forward pass + gradient pass) per grid cell on
synthetic hub-and-spoke data, averaged over repeats after one warm-up.  The
backend column is timing-only metadata: a cross-check re-verifies that the
scan and sequential NLLs agree at every grid point.  Cells that cannot run
degrade to ``skipped(reason)`` rather than failing the run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import EventSequence, RegConfig
from .simulator import SimConfig, gen_hub_spoke, simulate_thinning
from .trainer import default_init_params, run_epoch

DEFAULT_NAIVE_CAP = 1 << 15
DEFAULT_BENCH_BATCH = 1 << 16
CROSSCHECK_RTOL = 1e-9


@dataclass
class BenchCell:
    backend: str
    n: int
    m: int
    k: int
    epoch_time_seconds: float | None
    peak_state_bytes: int | None
    status: str  # "ok" or "skipped(<reason>)"
    scan_vs_sequential_rel: float | None = None


@dataclass
class BenchConfig:
    ns: list
    ms: list
    k: int = 1
    backends: tuple = ("scan", "sequential")
    repeats: int = 3
    time_limit: float | None = None
    naive_cap: int = DEFAULT_NAIVE_CAP
    batch_size: int | None = DEFAULT_BENCH_BATCH
    workers: int | None = None
    seed: int = 0
    reg: RegConfig = field(default_factory=RegConfig)


def parse_grid(spec: str) -> list[int]:
    """Grid syntax: 'N=2^10..2^20' (powers of two, inclusive) or
    'N=1024,2048,4096'."""
    body = spec.split("=", 1)[1] if "=" in spec else spec
    body = body.strip()
    if ".." in body:
        lo_s, hi_s = body.split("..", 1)
        lo = _parse_size(lo_s)
        hi = _parse_size(hi_s)
        out = []
        n = lo
        while n <= hi:
            out.append(n)
            n *= 2
        if not out:
            raise ValueError(f"empty grid {spec!r}")
        return out
    return [_parse_size(tok) for tok in body.split(",") if tok.strip()]


def _parse_size(tok: str) -> int:
    tok = tok.strip()
    if "^" in tok:
        base, exp = tok.split("^", 1)
        return int(base) ** int(exp)
    return int(tok)


def _bench_gamma(k: int) -> np.ndarray:
    return np.array([1.5]) if k == 1 else np.geomspace(0.5, 4.5, k)


def hub_dataset(m: int, n_max: int, k: int, seed: int) -> tuple[EventSequence, np.ndarray]:
    """Simulate once at the largest requested N; smaller cells reuse
    prefixes of the same sequence (the horizon becomes the last kept time)."""
    params = gen_hub_spoke(m, gamma=_bench_gamma(k))
    seq = simulate_thinning(SimConfig(params=params, target_events=n_max, seed=seed))
    return seq, params.gamma


def prefix_sequence(seq: EventSequence, n: int) -> EventSequence:
    if n >= len(seq):
        return seq
    return EventSequence(
        times=seq.times[:n].copy(),
        marks=seq.marks[:n].copy(),
        horizon=float(seq.times[n - 1]),
        num_nodes=seq.num_nodes,
    )


def run_bench(config: BenchConfig, progress=None) -> list[BenchCell]:
    cells: list[BenchCell] = []
    n_max = max(config.ns)
    for m in config.ms:
        seq_full, _ = hub_dataset(m, n_max, config.k, config.seed)
        for n in config.ns:
            seq = prefix_sequence(seq_full, n)
            params = default_init_params(seq, config.k)
            seq_cells = _bench_point(seq, params, n, m, config)
            cells.extend(seq_cells)
            if progress is not None:
                for cell in seq_cells:
                    progress(cell)
    return cells


def _bench_point(seq, params, n, m, config: BenchConfig) -> list[BenchCell]:
    out = []
    nll_by_backend = {}
    for backend in config.backends:
        if backend == "naive" and n > config.naive_cap:
            out.append(BenchCell(backend, n, m, config.k, None, None, "skipped(quadratic)"))
            continue
        batch = None if backend == "naive" else config.batch_size

        def one_epoch():
            return run_epoch(
                seq, params, config.reg,
                batch_size=batch, backend=backend, workers=config.workers,
            )

        try:
            t0 = time.perf_counter()
            res = one_epoch()  # warm-up (includes JIT on first call)
            warm = time.perf_counter() - t0
        except MemoryError:
            out.append(BenchCell(backend, n, m, config.k, None, None, "skipped(memory)"))
            continue
        if config.time_limit is not None and warm > config.time_limit:
            out.append(BenchCell(backend, n, m, config.k, None, None, "skipped(timeout)"))
            continue
        nll_by_backend[backend] = res.nll
        elapsed = []
        for _ in range(config.repeats):
            t0 = time.perf_counter()
            res = one_epoch()
            elapsed.append(time.perf_counter() - t0)
        out.append(
            BenchCell(
                backend, n, m, config.k,
                float(np.mean(elapsed)), res.memory.peak_bytes, "ok",
            )
        )

    # numerical cross-check: timing metadata must not alter results
    if "scan" in nll_by_backend:
        if "sequential" in nll_by_backend:
            ref = nll_by_backend["sequential"]
        else:
            ref = run_epoch(
                seq, params, config.reg,
                batch_size=config.batch_size, backend="sequential", workers=config.workers,
            ).nll
        rel = abs(nll_by_backend["scan"] - ref) / max(abs(ref), 1e-300)
        for cell in out:
            if cell.backend == "scan":
                cell.scan_vs_sequential_rel = rel
    return out


def write_bench_csv(path, cells: list[BenchCell]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("backend,N,M,K,epoch_time_seconds,peak_state_bytes,status,scan_vs_sequential_rel\n")
        for c in cells:
            t = "" if c.epoch_time_seconds is None else repr(c.epoch_time_seconds)
            b = "" if c.peak_state_bytes is None else str(c.peak_state_bytes)
            x = "" if c.scan_vs_sequential_rel is None else repr(c.scan_vs_sequential_rel)
            f.write(f"{c.backend},{c.n},{c.m},{c.k},{t},{b},{c.status},{x}\n")
