"""Exact simulation by Ogata thinning, plus synthetic parameter generators.

The thinning bound is the total intensity at the current point, which is a
valid dominating rate because exponential-kernel intensities only decay
between events; the bound is refreshed at every candidate, accepted or not,
so the sampler is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .core import (
    EventSequence,
    ExplosionGuard,
    HawkesParams,
    UnstableParams,
    ValidationError,
    branching_matrix,
    spectral_radius,
)


@dataclass(frozen=True)
class SimConfig:
    params: HawkesParams
    horizon: float | None = None
    target_events: int | None = None
    seed: int = 0
    max_events: int = 100_000_000
    allow_unstable: bool = False

    def __post_init__(self):
        if (self.horizon is None) == (self.target_events is None):
            raise ValidationError("set exactly one of horizon / target_events")
        if self.horizon is not None and self.horizon <= 0.0:
            raise ValidationError("horizon must be positive")
        if self.target_events is not None and self.target_events < 1:
            raise ValidationError("target_events must be >= 1")


def simulate_thinning(config: SimConfig) -> EventSequence:
    """Draw one realization on [0, T] (or until target_events, with T set to
    the last event time).  Reproducible from the seed.

    Raises UnstableParams when the branching spectral radius is >= 1 and the
    override flag is off, and ExplosionGuard past max_events.
    """
    params = config.params
    _, radius = branching_matrix(params)
    if radius >= 1.0 and not config.allow_unstable:
        raise UnstableParams(radius)

    mu = params.mu
    gamma = params.gamma
    alpha_src = np.ascontiguousarray(params.alpha.transpose(0, 2, 1))  # [k, source, target]
    K, M = params.num_kernels, params.num_nodes
    rng = np.random.default_rng(config.seed)

    R = np.zeros((K, M))  # excitation state just after the current time
    t = 0.0
    times: list[float] = []
    marks: list[int] = []

    while True:
        lam_bound = mu + gamma @ R
        total_bound = float(lam_bound.sum())
        t_cand = t + rng.exponential() / total_bound
        if config.horizon is not None and t_cand > config.horizon:
            break
        R *= np.exp(-gamma * (t_cand - t))[:, None]
        t = t_cand
        lam = mu + gamma @ R
        total = float(lam.sum())
        u = rng.random() * total_bound
        if u <= total:
            mark = int(np.searchsorted(np.cumsum(lam), u))
            times.append(t)
            marks.append(mark)
            R += alpha_src[:, mark, :]
            if config.target_events is not None and len(times) >= config.target_events:
                break
            if len(times) >= config.max_events:
                raise ExplosionGuard(config.max_events)

    horizon = config.horizon if config.horizon is not None else (times[-1] if times else 0.0)
    return EventSequence(
        times=np.array(times), marks=np.array(marks, dtype=np.int64),
        horizon=horizon, num_nodes=M,
    )


def gen_hub_spoke(
    num_nodes: int,
    hub_row_value: float = 0.1,
    hub_mu: float = 0.1,
    other_mu: float = 1e-3,
    gamma=1.5,
    hub: int = 0,
) -> HawkesParams:
    """Hub-and-spoke network: one row of every interaction matrix is set to
    hub_row_value, everything else is zero; the hub node gets base rate
    hub_mu and all other nodes other_mu (which must be positive for events
    to exist off the hub)."""
    if num_nodes < 2:
        raise ValidationError("hub-and-spoke needs at least 2 nodes")
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    K = gamma.size
    alpha = np.zeros((K, num_nodes, num_nodes))
    alpha[:, hub, :] = hub_row_value
    mu = np.full(num_nodes, other_mu)
    mu[hub] = hub_mu
    return HawkesParams(mu=mu, alpha=alpha, gamma=gamma)


def gen_scale_free(
    num_nodes: int,
    seed: int = 0,
    target_radius: float = 0.8,
) -> np.ndarray:
    """Single-kernel interaction matrix from a directed preferential-
    attachment (scale-free) graph.

    Every distinct edge u->v gets the same unit weight on alpha[v, u]
    (event on u excites v), then the whole matrix is rescaled so the
    branching spectral radius is at most target_radius.
    """
    if num_nodes < 2:
        raise ValidationError("need at least 2 nodes")
    g = nx.scale_free_graph(num_nodes, seed=seed)
    A = np.zeros((num_nodes, num_nodes))
    for u, v in set(g.edges()):
        if u < num_nodes and v < num_nodes:  # generator seeds with a 3-cycle even for n < 3
            A[v, u] = 1.0
    radius = spectral_radius(A)
    if radius > target_radius:
        A *= target_radius / radius
    return A
