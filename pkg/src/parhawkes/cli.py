"""Command-line interface.

Exit codes: 0 success, 1 check failure, 2 invalid input, 3 resource guard.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .core import (
    ExplosionGuard,
    HawkesParams,
    RegConfig,
    UnstableParams,
    ValidationError,
    branching_matrix,
)
from . import bench as bench_mod
from . import fileio
from .gradients import finite_difference_check
from .simulator import SimConfig, gen_hub_spoke, gen_scale_free, simulate_thinning
from .trainer import TrainConfig, default_init_params, fit

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_GUARD = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parhawkes", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an event sequence by thinning")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--params", metavar="FILE", help="parameter JSON file")
    src.add_argument("--hub", type=int, metavar="M", help="hub-and-spoke network with M nodes")
    src.add_argument("--scale-free", type=int, metavar="M", help="scale-free network with M nodes")
    span = sim.add_mutually_exclusive_group(required=True)
    span.add_argument("--horizon", type=float, metavar="T")
    span.add_argument("--target-events", type=int, metavar="N")
    sim.add_argument("--k", type=int, default=1, help="kernels for --hub (default 1)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--max-events", type=int, default=100_000_000)
    sim.add_argument("--allow-unstable", action="store_true")
    sim.add_argument("--out", required=True, metavar="FILE")

    ft = sub.add_parser("fit", help="fit a Hawkes model by exact MLE")
    ft.add_argument("--events", required=True, metavar="FILE")
    ft.add_argument("--k", type=int, default=1)
    ft.add_argument("--epochs", type=int, default=1000)
    ft.add_argument("--lr", type=float, default=0.05)
    ft.add_argument("--lambda1", type=float, default=0.1)
    ft.add_argument("--hinge", type=float, default=0.05)
    ft.add_argument("--batch-size", type=int, default=None)
    ft.add_argument("--backend", choices=("scan", "sequential", "naive"), default="scan")
    ft.add_argument("--workers", type=int, default=None)
    ft.add_argument("--seed", type=int, default=0)
    ft.add_argument("--horizon", type=float, default=None)
    ft.add_argument("--num-nodes", type=int, default=None)
    ft.add_argument("--cache", action="store_true", help="use the binary event cache")
    ft.add_argument("--out-params", required=True, metavar="FILE")
    ft.add_argument("--out-report", required=True, metavar="FILE")

    gc = sub.add_parser("grad-check", help="finite-difference gradient verification")
    gc.add_argument("--events", required=True, metavar="FILE")
    gc.add_argument("--params", required=True, metavar="FILE")
    gc.add_argument("--step", type=float, default=1e-6)
    gc.add_argument("--lambda1", type=float, default=0.1)
    gc.add_argument("--hinge", type=float, default=0.05)

    bn = sub.add_parser("bench", help="backend timing grid")
    bn.add_argument("--grid", default="N=2^10..2^14", metavar="SPEC",
                    help="e.g. N=2^10..2^20 or N=1024,4096")
    bn.add_argument("--m", default="16", metavar="LIST", help="comma-separated node counts")
    bn.add_argument("--k", type=int, default=1)
    bn.add_argument("--backends", default="scan,sequential", metavar="LIST")
    bn.add_argument("--repeats", type=int, default=3)
    bn.add_argument("--time-limit", type=float, default=None, metavar="SEC")
    bn.add_argument("--naive-cap", type=int, default=bench_mod.DEFAULT_NAIVE_CAP)
    bn.add_argument("--batch-size", type=int, default=bench_mod.DEFAULT_BENCH_BATCH)
    bn.add_argument("--workers", type=int, default=None)
    bn.add_argument("--seed", type=int, default=0)
    bn.add_argument("--out", required=True, metavar="FILE")
    return p


def _cmd_simulate(args) -> int:
    if args.params is not None:
        params = fileio.read_params(args.params)
    elif args.hub is not None:
        gamma = np.array([1.5]) if args.k == 1 else np.geomspace(0.5, 4.5, args.k)
        params = gen_hub_spoke(args.hub, gamma=gamma)
    else:
        alpha = gen_scale_free(args.scale_free, seed=args.seed)
        params = HawkesParams(
            mu=np.full(args.scale_free, 1e-3),
            alpha=alpha[None, :, :],
            gamma=np.array([1.0]),
        )
    _, radius = branching_matrix(params)
    config = SimConfig(
        params=params,
        horizon=args.horizon,
        target_events=args.target_events,
        seed=args.seed,
        max_events=args.max_events,
        allow_unstable=args.allow_unstable,
    )
    try:
        seq = simulate_thinning(config)
    except UnstableParams as err:
        print(f"unstable parameters: branching radius {err.radius:.6f} >= 1", file=sys.stderr)
        return EXIT_INVALID
    except ExplosionGuard as err:
        print(f"explosion guard: {err}", file=sys.stderr)
        return EXIT_GUARD
    fileio.write_events(args.out, seq)
    print(f"events={len(seq)} T={seq.horizon!r} branching_radius={radius:.6f}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    seq = fileio.read_events(
        args.events, horizon=args.horizon, num_nodes=args.num_nodes, use_cache=args.cache
    )
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        reg=RegConfig(lambda1=args.lambda1, hinge=args.hinge),
        backend=args.backend,
        workers=args.workers,
        seed=args.seed,
    )
    report = fit(seq, default_init_params(seq, args.k), config)
    fileio.write_params(args.out_params, report.params)
    fileio.write_fit_report(args.out_report, report)
    print(
        f"epochs={report.epochs_run} nll={report.nll[-1]!r} "
        f"loglik_per_event={report.loglik_per_event[-1]!r} "
        f"peak_state_bytes={report.peak_state_bytes}"
    )
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    seq = fileio.read_events(args.events)
    params = fileio.read_params(args.params)
    if len(seq) > 10_000:
        print(f"warning: N={len(seq)} events; finite differences will be slow", file=sys.stderr)
    report = finite_difference_check(
        seq, params, RegConfig(lambda1=args.lambda1, hinge=args.hinge), step=args.step
    )
    print(
        f"max_abs_err={report.max_abs_err:.3e} max_rel_err={report.max_rel_err:.3e} "
        f"worst={report.worst_coordinate} checked={report.n_checked}"
    )
    for name in report.excluded:
        print(f"kink-adjacent, excluded: {name}")
    return EXIT_OK if report.max_abs_err <= 1e-5 else EXIT_CHECK_FAILED


def _cmd_bench(args) -> int:
    config = bench_mod.BenchConfig(
        ns=bench_mod.parse_grid(args.grid),
        ms=[int(tok) for tok in args.m.split(",") if tok.strip()],
        k=args.k,
        backends=tuple(tok.strip() for tok in args.backends.split(",") if tok.strip()),
        repeats=args.repeats,
        time_limit=args.time_limit,
        naive_cap=args.naive_cap,
        batch_size=args.batch_size,
        workers=args.workers,
        seed=args.seed,
    )

    def progress(cell):
        t = "-" if cell.epoch_time_seconds is None else f"{cell.epoch_time_seconds:.4f}s"
        print(f"bench backend={cell.backend} N={cell.n} M={cell.m} {cell.status} {t}")

    cells = bench_mod.run_bench(config, progress=progress)
    bench_mod.write_bench_csv(args.out, cells)
    print(f"wrote {len(cells)} cells to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "grad-check":
            return _cmd_grad_check(args)
        return _cmd_bench(args)
    except ValidationError as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except ExplosionGuard as err:
        print(f"resource guard: {err}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
