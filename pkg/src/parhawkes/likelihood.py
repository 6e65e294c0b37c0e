"""Forward pass: excitation states, per-event intensities, compensator and
the (penalized) log-likelihood.

Three interchangeable state back-ends are provided:

* ``naive``      -- direct double sum over event pairs, O(N^2 M K); oracle
* ``sequential`` -- left fold of the one-step affine recurrence, O(N M K)
* ``scan``       -- parallel prefix scan over compressed operators

All floating-point state is double precision; the oracle tolerances used in
the tests are not reachable in single precision at large N.
"""

from __future__ import annotations

import numpy as np

from ._nb import njit, prange, worker_count
from .core import EventSequence, HawkesParams, RegConfig, ValidationError
from .scan import fold_states_arrays, scan_states_arrays

BACKENDS = ("naive", "sequential", "scan")


# ---------------------------------------------------------------------------
# element construction


def gap_decays(times: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Per-kernel decay factors over inter-event gaps: (K, N) array with
    s[k, i] = exp(-gamma_k * (t_i - t_{i-1})) and s[k, 0] = 1.

    Built from gaps, never from factored absolute times: exp(+gamma*t)
    overflows long before the products here lose precision.
    """
    n = times.size
    s = np.empty((gamma.size, n))
    if n == 0:
        return s
    dt = np.empty(n)
    dt[0] = 0.0
    np.subtract(times[1:], times[:-1], out=dt[1:])
    np.exp(np.multiply.outer(-gamma, dt), out=s)
    return s


def _prev_marks(marks: np.ndarray) -> np.ndarray:
    prev = np.empty_like(marks)
    prev[0] = 0  # unused: the first element is the identity
    prev[1:] = marks[:-1]
    return prev


def _prev_times(times: np.ndarray) -> np.ndarray:
    prev = np.empty_like(times)
    prev[0] = 0.0
    prev[1:] = times[:-1]
    return prev


def alpha_by_source(params: HawkesParams) -> np.ndarray:
    """alpha transposed to (K, M_source, M_target) so the column slice
    alpha[:, :, q] used by every element build is a contiguous row."""
    return np.ascontiguousarray(params.alpha.transpose(0, 2, 1))


def build_element_v(kind, s_dec, prev_marks, prev_times, alpha_t, out=None, first_is_identity=True):
    """Load vectors of the scan elements for one state family.

    kind 'r': v_i = s_i * alpha[:, m_{i-1}, k]          (excitation states)
    kind 'k': v_i = s_i * e_{m_{i-1}}                   (alpha-gradient states)
    kind 'l': v_i = s_i * t_{i-1} * alpha[:, m_{i-1}, k] (gamma-gradient states)

    s_dec is (K, n); returns (K, n, M).  When `first_is_identity`, position 0
    is the first event of the whole sequence and its element is (1, 0).
    """
    K, n = s_dec.shape
    M = alpha_t.shape[1]
    v = np.empty((K, n, M)) if out is None else out
    if kind == "k":
        v[:] = 0.0
        v[:, np.arange(n), prev_marks] = s_dec
    else:
        scale = s_dec if kind == "r" else s_dec * prev_times[None, :]
        for k in range(K):
            np.multiply(scale[k][:, None], alpha_t[k][prev_marks], out=v[k])
    if first_is_identity:
        v[:, 0, :] = 0.0
    return v


# ---------------------------------------------------------------------------
# naive backend (direct definition sums; the quadratic oracle)


@njit(parallel=True, cache=True)
def _naive_r(times, marks, alpha_t, gamma, out):
    n = times.size
    K = gamma.size
    M = alpha_t.shape[1]
    for i in prange(n):
        for k in range(K):
            for m in range(M):
                out[k, i, m] = 0.0
            for j in range(i):
                w = np.exp(-gamma[k] * (times[i] - times[j]))
                src = marks[j]
                for m in range(M):
                    out[k, i, m] += w * alpha_t[k, src, m]


@njit(parallel=True, cache=True)
def _naive_k(times, marks, M, gamma, out):
    n = times.size
    K = gamma.size
    for i in prange(n):
        for k in range(K):
            for m in range(M):
                out[k, i, m] = 0.0
            for j in range(i):
                w = np.exp(-gamma[k] * (times[i] - times[j]))
                out[k, i, marks[j]] += w


@njit(parallel=True, cache=True)
def _naive_l(times, marks, alpha_t, gamma, out):
    n = times.size
    K = gamma.size
    M = alpha_t.shape[1]
    for i in prange(n):
        for k in range(K):
            for m in range(M):
                out[k, i, m] = 0.0
            for j in range(i):
                w = times[j] * np.exp(-gamma[k] * (times[i] - times[j]))
                src = marks[j]
                for m in range(M):
                    out[k, i, m] += w * alpha_t[k, src, m]


def _naive_states(kind, seq: EventSequence, params: HawkesParams, workers) -> np.ndarray:
    out = np.empty((params.num_kernels, len(seq), params.num_nodes))
    alpha_t = alpha_by_source(params)
    with worker_count(workers):
        if kind == "r":
            _naive_r(seq.times, seq.marks, alpha_t, params.gamma, out)
        elif kind == "k":
            _naive_k(seq.times, seq.marks, params.num_nodes, params.gamma, out)
        else:
            _naive_l(seq.times, seq.marks, alpha_t, params.gamma, out)
    return out


# ---------------------------------------------------------------------------
# state computation dispatch


def compute_states(
    kind: str,
    seq: EventSequence,
    params: HawkesParams,
    backend: str = "scan",
    workers: int | None = None,
) -> np.ndarray:
    """States of one family ('r', 'k', 'l') for all events and kernels,
    laid out (K, N, M).  State at the first event is exactly zero."""
    if backend not in BACKENDS:
        raise ValidationError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if len(seq) == 0:
        return np.zeros((params.num_kernels, 0, params.num_nodes))
    if backend == "naive":
        return _naive_states(kind, seq, params, workers)
    s_dec = gap_decays(seq.times, params.gamma)
    v = build_element_v(
        kind,
        s_dec,
        _prev_marks(seq.marks),
        _prev_times(seq.times),
        alpha_by_source(params),
    )
    init = np.zeros((params.num_kernels, params.num_nodes))
    if backend == "sequential":
        return fold_states_arrays(s_dec, v, init, workers=workers)
    return np.ascontiguousarray(scan_states_arrays(s_dec, v, init, workers=workers))


def excitation_states(
    seq: EventSequence,
    params: HawkesParams,
    backend: str = "scan",
    workers: int | None = None,
) -> np.ndarray:
    """Excitation states R_p^k(t_i) as an (N, K, M) array:
    R_p^k(t_i) = sum_{j<i} alpha[k, p, m_j] * exp(-gamma_k (t_i - t_j))."""
    states = compute_states("r", seq, params, backend, workers)
    return np.ascontiguousarray(states.transpose(1, 0, 2))


def intensities(states: np.ndarray, seq: EventSequence, params: HawkesParams) -> np.ndarray:
    """Per-event intensities lambda_{m_i}(t_i) from (N, K, M) excitation
    states: mu[m_i] + sum_k gamma_k * R_{m_i}^k(t_i)."""
    n = len(seq)
    own = states[np.arange(n), :, seq.marks]  # (N, K)
    return params.mu[seq.marks] + own @ params.gamma


def intensity_matrix(states: np.ndarray, params: HawkesParams) -> np.ndarray:
    """Full (N, M) intensity diagnostics; only computed on request."""
    return params.mu[None, :] + np.einsum("ikm,k->im", states, params.gamma)


# ---------------------------------------------------------------------------
# compensator and likelihood


def source_load(params: HawkesParams) -> np.ndarray:
    """(M, K) column sums cs[q, k] = sum_p alpha[k, p, q]: total expected
    first-generation offspring weight triggered by an event on node q."""
    return params.alpha.sum(axis=1).T.copy()


def compensator(seq: EventSequence, params: HawkesParams) -> float:
    """Exact integral of the total intensity over [0, T]:
    T * sum(mu) + sum_i sum_k cs[m_i, k] * (1 - exp(-gamma_k (T - t_i)))."""
    total = float(seq.horizon * params.mu.sum())
    if len(seq) == 0:
        return total
    cs = source_load(params)  # (M, K)
    tail = -np.expm1(np.multiply.outer(-(seq.horizon - seq.times), params.gamma))  # (N, K)
    total += float(np.sum(cs[seq.marks] * tail))
    return total


def compensator_increments(seq: EventSequence, params: HawkesParams) -> np.ndarray:
    """Increments of the aggregate compensator between consecutive events.

    Under the true model these are iid Exp(1) (time-rescaling), which is the
    basis of the simulator goodness-of-fit test.
    """
    n = len(seq)
    if n == 0:
        return np.zeros(0)
    cs = source_load(params)  # (M, K)
    s_dec = gap_decays(seq.times, params.gamma)  # (K, N)
    prev = _prev_marks(seq.marks)
    v = (s_dec * cs[prev].T)[:, :, None]  # (K, N, 1)
    v[:, 0, :] = 0.0
    agg = fold_states_arrays(s_dec, v, np.zeros((params.num_kernels, 1)))[:, :, 0]  # (K, N)
    dt = np.diff(seq.times, prepend=0.0)
    inc = params.mu.sum() * dt
    decayed_from = np.empty_like(agg)  # aggregate state just after the previous event
    decayed_from[:, 0] = 0.0
    decayed_from[:, 1:] = agg[:, :-1] + cs[prev[1:]].T
    inc += np.sum(decayed_from * -np.expm1(-params.gamma[:, None] * dt[None, :]), axis=0)
    return inc


def log_likelihood(
    seq: EventSequence,
    params: HawkesParams,
    backend: str = "scan",
    workers: int | None = None,
) -> float:
    """Exact log-likelihood: sum_i log lambda_{m_i}(t_i) minus the
    compensator.  The backend affects rounding only."""
    states = excitation_states(seq, params, backend, workers)
    lam = intensities(states, seq, params)
    if not np.all(np.isfinite(lam)):
        raise FloatingPointError("non-finite intensity encountered")
    return float(np.sum(np.log(lam)) - compensator(seq, params))


def hinge_penalty(alpha: np.ndarray, reg: RegConfig) -> float:
    """lambda1 * sum of off-diagonal alpha entries strictly below the hinge.
    Entries at exactly the hinge contribute nothing."""
    if reg.lambda1 == 0.0:
        return 0.0
    K, M, _ = alpha.shape
    off = ~np.eye(M, dtype=bool)
    a = alpha[:, off]
    return float(reg.lambda1 * np.sum(a[a < reg.hinge]))


def penalized_nll(
    seq: EventSequence,
    params: HawkesParams,
    reg: RegConfig,
    backend: str = "scan",
    workers: int | None = None,
) -> float:
    """Per-event negative log-likelihood plus the hinged l1 penalty."""
    n = len(seq)
    if n < 1:
        raise ValidationError("penalized NLL needs at least one event")
    return -log_likelihood(seq, params, backend, workers) / n + hinge_penalty(params.alpha, reg)
