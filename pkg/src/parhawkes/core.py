"""Domain types shared by every module: event sequences, model parameters,
penalty configuration, and the stability guard used by the simulator.

Marks are 0-based node indices everywhere, including on disk.  All types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MU_FLOOR = 1e-10


class ValidationError(ValueError):
    """Base class for structured input validation failures."""


class NegativeTime(ValidationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"negative timestamp at index {index}")


class UnsortedTimes(ValidationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"timestamps not non-decreasing at index {index}")


class MarkOutOfRange(ValidationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"mark out of range at index {index}")


class HorizonBeforeLastEvent(ValidationError):
    def __init__(self):
        super().__init__("horizon is earlier than the last event timestamp")


class DimensionMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NonFiniteGradient(RuntimeError):
    pass


class UnstableParams(RuntimeError):
    def __init__(self, radius: float):
        self.radius = radius
        super().__init__(f"branching spectral radius {radius:.6f} >= 1")


class ExplosionGuard(RuntimeError):
    def __init__(self, max_events: int):
        self.max_events = max_events
        super().__init__(f"simulation exceeded max_events={max_events}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Time-ordered marked events (t_i, m_i) on [0, horizon].

    times   -- (N,) float64, seconds, non-decreasing, >= 0; ties allowed
    marks   -- (N,) int64 node indices in {0..num_nodes-1}
    horizon -- observation end T >= times[-1]
    """

    times: np.ndarray
    marks: np.ndarray
    horizon: float
    num_nodes: int

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        marks = np.asarray(self.marks, dtype=np.int64)
        if times.ndim != 1 or marks.ndim != 1 or times.shape != marks.shape:
            raise DimensionMismatch(
                f"times/marks shapes differ: {times.shape} vs {marks.shape}"
            )
        if self.num_nodes < 1:
            raise ValidationError("num_nodes must be positive")
        neg = np.nonzero(times < 0.0)[0]
        if neg.size:
            raise NegativeTime(int(neg[0]))
        inv = np.nonzero(np.diff(times) < 0.0)[0]
        if inv.size:
            raise UnsortedTimes(int(inv[0]) + 1)
        bad = np.nonzero((marks < 0) | (marks >= self.num_nodes))[0]
        if bad.size:
            raise MarkOutOfRange(int(bad[0]))
        if times.size and self.horizon < times[-1]:
            raise HorizonBeforeLastEvent()
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "marks", _readonly(marks))
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_events(self) -> int:
        return self.times.size

    def equals(self, other: "EventSequence") -> bool:
        return (
            self.num_nodes == other.num_nodes
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.marks, other.marks)
        )


def validate_sequence(raw_times, raw_marks, horizon, num_nodes) -> EventSequence:
    """Validate raw arrays into an EventSequence.

    Raises NegativeTime / UnsortedTimes / MarkOutOfRange /
    HorizonBeforeLastEvent naming the first offending index.  Idempotent on
    already-valid input.
    """
    return EventSequence(
        times=np.asarray(raw_times, dtype=np.float64),
        marks=np.asarray(raw_marks, dtype=np.int64),
        horizon=float(horizon),
        num_nodes=int(num_nodes),
    )


@dataclass(frozen=True, eq=False)
class HawkesParams:
    """Parameters of a linear exponential Hawkes process.

    mu    -- (M,) base rates, events/second, strictly positive (values in
             [0, MU_FLOOR) are raised to MU_FLOOR so log-intensities stay
             finite; negative values are rejected)
    alpha -- (K, M, M) interaction strengths, alpha[k, p, q] is the jump in
             node p's excitation state caused by an event on node q
    gamma -- (K,) decay rates, 1/seconds, strictly positive
    """

    mu: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if mu.ndim != 1:
            raise DimensionMismatch("mu must be a vector")
        if gamma.ndim != 1:
            raise DimensionMismatch("gamma must be a vector")
        M = mu.size
        K = gamma.size
        if alpha.shape != (K, M, M):
            raise DimensionMismatch(
                f"alpha shape {alpha.shape} != (K={K}, M={M}, M={M})"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(alpha)) and np.all(np.isfinite(gamma))):
            raise ValidationError("parameters must be finite")
        if np.any(mu < 0.0):
            raise ValidationError("mu must be non-negative (floored to MU_FLOOR)")
        if np.any(alpha < 0.0):
            k, p, q = np.unravel_index(int(np.argmin(alpha)), alpha.shape)
            raise ValidationError(f"alpha[{k},{p},{q}] is negative")
        if np.any(gamma <= 0.0):
            raise ValidationError("gamma must be strictly positive")
        mu = np.maximum(mu, MU_FLOOR)
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "gamma", _readonly(gamma))

    @property
    def num_nodes(self) -> int:
        return self.mu.size

    @property
    def num_kernels(self) -> int:
        return self.gamma.size

    def copy_with(self, mu=None, alpha=None, gamma=None) -> "HawkesParams":
        return HawkesParams(
            mu=self.mu if mu is None else mu,
            alpha=self.alpha if alpha is None else alpha,
            gamma=self.gamma if gamma is None else gamma,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.alpha.ravel(), self.gamma])


@dataclass(frozen=True)
class RegConfig:
    """Hinged l1 penalty: lambda1 * sum of off-diagonal alpha entries that
    are strictly below the hinge threshold."""

    lambda1: float = 0.1
    hinge: float = 0.05

    def __post_init__(self):
        if self.lambda1 < 0.0:
            raise ValidationError("lambda1 must be >= 0")
        if self.hinge <= 0.0:
            raise ValidationError("hinge must be > 0")


def spectral_radius(matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral radius of a non-negative matrix by power iteration.

    Starts from the all-ones vector (Perron-friendly for non-negative
    matrices); returns 0.0 if the iterate collapses to zero (nilpotent case).
    """
    B = np.asarray(matrix, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DimensionMismatch("matrix must be square")
    n = B.shape[0]
    x = np.ones(n)
    radius = 0.0
    for _ in range(max_iter):
        y = B @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        new_radius = norm / float(np.linalg.norm(x))
        x = y / norm
        if abs(new_radius - radius) <= tol * max(1.0, abs(new_radius)):
            return new_radius
        radius = new_radius
    return radius


def branching_matrix(params: HawkesParams) -> tuple[np.ndarray, float]:
    """Expected-offspring matrix B[p, q] = sum_k alpha[k, p, q] and its
    spectral radius (each kernel gamma_k e^{-gamma_k t} integrates to 1)."""
    B = params.alpha.sum(axis=0)
    return B, spectral_radius(B)
