"""Inclusive prefix scans over compressed affine transition operators.

An operator is the pair (s, v) representing the (M+1)x(M+1) block matrix
[[s*I, v], [0, 1]]; it acts on a state x as x -> s*x + v.  The product of
two such matrices keeps the structure, so each combine is O(M):

    combine(later, earlier) = (later.s * earlier.s,
                               later.s * earlier.v + later.v)

`later` is the chronologically later operator, i.e. the left factor of the
matrix product.  The identity is (1, 0).

Two engines compute all inclusive prefixes P_i = E_i * E_{i-1} * ... * E_1:
a sequential left fold (the reference oracle) and a work-efficient
Blelloch up/down-sweep over a binary tree.  The parallel engine pads with
identity elements to the next power of two and fixes the combine tree by
the padded length alone, never by worker count, so its output is bitwise
reproducible across worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._nb import njit, prange, worker_count
from .core import DimensionMismatch, EmptyInput


@dataclass(frozen=True)
class ScanElement:
    """One compressed transition operator (scalar decay s, load vector v)."""

    s: float
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatch("v must be a vector")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.v.size


def identity_element(dim: int) -> ScanElement:
    return ScanElement(1.0, np.zeros(dim))


def combine(later: ScanElement, earlier: ScanElement) -> ScanElement:
    """Product of two operators; `later` is the left (more recent) factor.

    Associative but not commutative: argument order is part of the contract.
    """
    if later.dim != earlier.dim:
        raise DimensionMismatch(
            f"operator dims differ: {later.dim} vs {earlier.dim}"
        )
    return ScanElement(later.s * earlier.s, later.s * earlier.v + later.v)


def apply_prefix(prefix: ScanElement, init_state) -> np.ndarray:
    """Affine application: state = prefix.s * init_state + prefix.v."""
    init = np.asarray(init_state, dtype=np.float64)
    if init.shape != prefix.v.shape:
        raise DimensionMismatch(
            f"state dim {init.shape} != operator dim {prefix.v.shape}"
        )
    return prefix.s * init + prefix.v


class ScanElements:
    """Structure-of-arrays sequence of operators: s is (n,), v is (n, M).

    Contiguous storage keeps the scan memory-bound code streaming; the
    class is also the return type of both scan engines (prefix sequences
    have the same representation).
    """

    __slots__ = ("s", "v")

    def __init__(self, s: np.ndarray, v: np.ndarray):
        s = np.ascontiguousarray(s, dtype=np.float64)
        v = np.ascontiguousarray(v, dtype=np.float64)
        if s.ndim != 1 or v.ndim != 2 or v.shape[0] != s.shape[0]:
            raise DimensionMismatch(
                f"need s (n,) and v (n, M); got {s.shape} and {v.shape}"
            )
        self.s = s
        self.v = v

    @classmethod
    def from_elements(cls, elements) -> "ScanElements":
        elements = list(elements)
        if not elements:
            raise EmptyInput("no scan elements")
        dim = elements[0].dim
        for e in elements:
            if e.dim != dim:
                raise DimensionMismatch("inconsistent element dimensions")
        s = np.array([e.s for e in elements])
        v = np.stack([e.v for e in elements])
        return cls(s, v)

    def __len__(self) -> int:
        return self.s.size

    def __getitem__(self, i: int) -> ScanElement:
        return ScanElement(self.s[i], self.v[i].copy())

    @property
    def dim(self) -> int:
        return self.v.shape[1]


def _as_arrays(elements) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(elements, ScanElements):
        seq = elements
    else:
        seq = ScanElements.from_elements(elements)
    if len(seq) == 0:
        raise EmptyInput("no scan elements")
    return seq.s, seq.v


@njit(cache=True)
def _seq_inclusive(s, v, out_s, out_v):
    n, M = v.shape
    out_s[0] = s[0]
    for m in range(M):
        out_v[0, m] = v[0, m]
    for i in range(1, n):
        si = s[i]
        out_s[i] = si * out_s[i - 1]
        for m in range(M):
            out_v[i, m] = si * out_v[i - 1, m] + v[i, m]


@njit(parallel=True, cache=True)
def _blelloch_exclusive(ws, wv):
    """In-place exclusive scan on padded work arrays ws (B, n), wv (B, n, M).

    n must be a power of two.  Every loop iteration writes a slot no other
    iteration of the same level touches, so thread scheduling cannot change
    the result.
    """
    B, n = ws.shape
    M = wv.shape[2]
    d = 1
    while d < n:  # upsweep
        stride = d * 2
        count = n // stride
        for idx in prange(B * count):
            b = idx // count
            c = idx - b * count
            left = c * stride + d - 1
            right = c * stride + stride - 1
            sr = ws[b, right]
            ws[b, right] = sr * ws[b, left]
            for m in range(M):
                wv[b, right, m] = sr * wv[b, left, m] + wv[b, right, m]
        d = stride
    for b in range(B):  # root <- identity
        ws[b, n - 1] = 1.0
        for m in range(M):
            wv[b, n - 1, m] = 0.0
    d = n // 2
    while d >= 1:  # downsweep
        stride = d * 2
        count = n // stride
        for idx in prange(B * count):
            b = idx // count
            c = idx - b * count
            left = c * stride + d - 1
            right = c * stride + stride - 1
            ts = ws[b, left]
            ws[b, left] = ws[b, right]
            ws[b, right] = ts * ws[b, right]
            for m in range(M):
                tv = wv[b, left, m]
                dv = wv[b, right, m]
                wv[b, left, m] = dv
                wv[b, right, m] = ts * dv + tv
        d = d // 2


@njit(parallel=True, cache=True)
def _finish_inclusive(s, v, ws, wv):
    """Shift the exclusive scan to inclusive in place:
    P_i = combine(later=E_i, earlier=exclusive_i)."""
    B, n = s.shape
    M = v.shape[2]
    for idx in prange(B * n):
        b = idx // n
        i = idx - b * n
        so = s[b, i]
        ws[b, i] = so * ws[b, i]
        for m in range(M):
            wv[b, i, m] = so * wv[b, i, m] + v[b, i, m]


@njit(parallel=True, cache=True)
def _finish_states(s, v, ws, wv, init):
    """Fused inclusive shift + affine application with initial state:
    wv[b, i] <- P_i.s * init[b] + P_i.v.  Avoids materializing prefixes."""
    B, n = s.shape
    M = v.shape[2]
    for idx in prange(B * n):
        b = idx // n
        i = idx - b * n
        so = s[b, i]
        s_inc = so * ws[b, i]
        ws[b, i] = s_inc
        for m in range(M):
            v_inc = so * wv[b, i, m] + v[b, i, m]
            wv[b, i, m] = s_inc * init[b, m] + v_inc


@njit(parallel=True, cache=True)
def _fold_states(s, v, init, out):
    """Sequential left fold per batch row: out[b, i] = s_i*out[b, i-1] + v_i
    seeded with init[b].  Reference recurrence engine."""
    B, n = s.shape
    M = v.shape[2]
    for b in prange(B):
        for m in range(M):
            out[b, 0, m] = s[b, 0] * init[b, m] + v[b, 0, m]
        for i in range(1, n):
            si = s[b, i]
            for m in range(M):
                out[b, i, m] = si * out[b, i - 1, m] + v[b, i, m]


def padded_length(n: int) -> int:
    if n < 1:
        raise EmptyInput("cannot scan zero elements")
    return 1 << (int(n - 1).bit_length())


def _pad_work(s: np.ndarray, v: np.ndarray, ws: np.ndarray, wv: np.ndarray) -> None:
    n = s.shape[1]
    ws[:, :n] = s
    ws[:, n:] = 1.0
    wv[:, :n] = v
    wv[:, n:] = 0.0


def scan_parallel_arrays(s, v, workers=None, out=None):
    """Batched Blelloch inclusive scan on raw arrays s (B, n), v (B, n, M).

    Returns (prefix_s, prefix_v) views of length n.  `out`, when given, is a
    preallocated (ws, wv) pair of padded work arrays (for callers doing their
    own memory accounting).
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    B, n = s.shape
    n_pad = padded_length(n)
    if out is None:
        ws = np.empty((B, n_pad))
        wv = np.empty((B, n_pad, v.shape[2]))
    else:
        ws, wv = out
    _pad_work(s, v, ws, wv)
    with worker_count(workers):
        _blelloch_exclusive(ws, wv)
        _finish_inclusive(s, v, ws, wv)
    return ws[:, :n], wv[:, :n]


def scan_states_arrays(s, v, init, workers=None, out=None):
    """Batched scan fused with affine application: returns the per-position
    states S_i = P_i.s * init + P_i.v as a (B, n, M) view."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    init = np.ascontiguousarray(init, dtype=np.float64)
    B, n = s.shape
    n_pad = padded_length(n)
    if out is None:
        ws = np.empty((B, n_pad))
        wv = np.empty((B, n_pad, v.shape[2]))
    else:
        ws, wv = out
    _pad_work(s, v, ws, wv)
    with worker_count(workers):
        _blelloch_exclusive(ws, wv)
        _finish_states(s, v, ws, wv, init)
    return wv[:, :n]


def fold_states_arrays(s, v, init, workers=None, out=None):
    """Sequential-recurrence states with the same calling convention as
    scan_states_arrays (used as the `sequential` backend and as an oracle)."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    init = np.ascontiguousarray(init, dtype=np.float64)
    B, n = s.shape
    if out is None:
        out_arr = np.empty((B, n, v.shape[2]))
    else:
        out_arr = out
    with worker_count(workers):
        _fold_states(s, v, init, out_arr)
    return out_arr


def scan_sequential(elements) -> ScanElements:
    """Inclusive prefixes by left fold: prefix[i] = elements[i] (x) prefix[i-1].

    Reference oracle for scan_parallel.
    """
    s, v = _as_arrays(elements)
    out_s = np.empty_like(s)
    out_v = np.empty_like(v)
    _seq_inclusive(s, v, out_s, out_v)
    return ScanElements(out_s, out_v)


def scan_parallel(elements, workers: int | None = 1) -> ScanElements:
    """Inclusive prefixes via the Blelloch up/down-sweep.

    Output is bitwise identical for any worker count on fixed input, and
    matches scan_sequential up to floating-point reassociation.
    """
    s, v = _as_arrays(elements)
    ps, pv = scan_parallel_arrays(s[None, :], v[None, :, :], workers=workers)
    return ScanElements(ps[0].copy(), pv[0].copy())
