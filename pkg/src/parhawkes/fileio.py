"""File formats: event CSV, parameter JSON, fit-report CSV.

Events: UTF-8 CSV with header ``time,mark``; time in decimal seconds, mark a
0-based integer node index; rows sorted by time.  An optional leading
comment line ``# T=<horizon>`` carries the observation horizon.  Floats are
written with shortest round-trip formatting, so write -> read is lossless at
full double precision.

Parameters: JSON with fields M, K, mu (M floats), gamma (K floats), alpha
(K nested M x M arrays, row-major).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .core import EventSequence, HawkesParams, ValidationError, validate_sequence
from .trainer import FitReport


class FileFormatError(ValidationError):
    """Input file problem, annotated with file path and line when known."""


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_events(path, seq: EventSequence) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# T={seq.horizon!r}\n")
        f.write("time,mark\n")
        pd.DataFrame({"time": seq.times, "mark": seq.marks}).to_csv(
            f, header=False, index=False, lineterminator="\n"
        )


def read_events(path, horizon=None, num_nodes=None, use_cache: bool = False) -> EventSequence:
    """Parse an event CSV.  Horizon resolution order: explicit argument,
    ``# T=`` comment, last event time.  num_nodes defaults to max mark + 1.

    With use_cache, a sidecar ``<path>.cache.npz`` is written on first read
    and reused while the source file hash matches.
    """
    path = Path(path)
    if not path.exists():
        raise FileFormatError(f"{path}: no such file")
    if use_cache:
        cached = _read_cache(path)
        if cached is not None:
            times, marks, file_horizon = cached
            return _finish_events(path, times, marks, horizon, file_horizon, num_nodes)

    file_horizon = None
    skip = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            stripped = line.strip()
            if stripped.startswith("#"):
                skip += 1
                body = stripped[1:].strip()
                if body.startswith("T="):
                    try:
                        file_horizon = float(body[2:])
                    except ValueError:
                        raise FileFormatError(f"{path}:{skip}: bad horizon comment {body!r}") from None
                continue
            if stripped != "time,mark":
                raise FileFormatError(f"{path}:{skip + 1}: expected header 'time,mark', got {stripped!r}")
            skip += 1
            break
        else:
            raise FileFormatError(f"{path}: empty file")

    try:
        df = pd.read_csv(
            path,
            skiprows=skip,
            header=None,
            names=["time", "mark"],
            dtype={"time": np.float64, "mark": np.int64},
            float_precision="round_trip",  # default parser can be 1 ulp off
        )
    except (ValueError, pd.errors.ParserError) as err:
        raise FileFormatError(f"{path}: malformed event rows: {err}") from None
    times = df["time"].to_numpy()
    marks = df["mark"].to_numpy()
    seq = _finish_events(path, times, marks, horizon, file_horizon, num_nodes, data_start=skip)
    if use_cache:
        _write_cache(path, seq, file_horizon)
    return seq


def _finish_events(path, times, marks, horizon, file_horizon, num_nodes, data_start=None):
    if horizon is None:
        horizon = file_horizon
    if horizon is None:
        horizon = float(times[-1]) if times.size else 0.0
    if num_nodes is None:
        num_nodes = int(marks.max()) + 1 if marks.size else 1
    try:
        return validate_sequence(times, marks, horizon, num_nodes)
    except ValidationError as err:
        index = getattr(err, "index", None)
        if index is not None and data_start is not None:
            raise FileFormatError(f"{path}:{data_start + index + 1}: {err}") from None
        raise FileFormatError(f"{path}: {err}") from None


def _cache_path(path: Path) -> Path:
    return path.with_name(path.name + ".cache.npz")


def _write_cache(path: Path, seq: EventSequence, file_horizon) -> None:
    np.savez(
        _cache_path(path),
        times=seq.times,
        marks=seq.marks,
        horizon=np.float64(file_horizon if file_horizon is not None else np.nan),
        sha256=np.bytes_(_file_sha256(path).encode()),
    )


def _read_cache(path: Path):
    cache = _cache_path(path)
    if not cache.exists():
        return None
    with np.load(cache) as z:
        if bytes(z["sha256"]).decode() != _file_sha256(path):
            return None
        horizon = float(z["horizon"])
        return z["times"].copy(), z["marks"].copy(), (None if np.isnan(horizon) else horizon)


def write_params(path, params: HawkesParams) -> None:
    doc = {
        "M": params.num_nodes,
        "K": params.num_kernels,
        "mu": params.mu.tolist(),
        "gamma": params.gamma.tolist(),
        "alpha": [params.alpha[k].tolist() for k in range(params.num_kernels)],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def read_params(path) -> HawkesParams:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise FileFormatError(f"{path}: no such file") from None
    except json.JSONDecodeError as err:
        raise FileFormatError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from None
    try:
        M = int(doc["M"])
        K = int(doc["K"])
        mu = np.asarray(doc["mu"], dtype=np.float64)
        gamma = np.asarray(doc["gamma"], dtype=np.float64)
        alpha = np.asarray(doc["alpha"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as err:
        raise FileFormatError(f"{path}: missing or malformed field: {err}") from None
    if alpha.size == K * M * M:
        alpha = alpha.reshape(K, M, M)
    try:
        return HawkesParams(mu=mu, alpha=alpha, gamma=gamma)
    except ValidationError as err:
        raise FileFormatError(f"{path}: {err}") from None


def write_fit_report(path, report: FitReport) -> None:
    df = pd.DataFrame(
        {
            "epoch": np.arange(report.epochs_run),
            "nll": report.nll,
            "loglik_per_event": report.loglik_per_event,
            "grad_norm": report.grad_max_norm,
            "seconds": report.epoch_seconds,
        }
    )
    df.to_csv(path, index=False, lineterminator="\n")
