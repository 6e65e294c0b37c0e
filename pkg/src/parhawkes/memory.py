"""Allocation accounting for large state arrays.

Peak memory is reported from our own ledger rather than OS RSS so the
numbers are comparable across platforms and unaffected by allocator
behaviour.  Only the big per-epoch state arrays are routed through the
ledger; scalar temporaries are ignored.
"""

from __future__ import annotations

import numpy as np


class MemoryLedger:
    """Tracks current and peak bytes of explicitly registered arrays."""

    def __init__(self) -> None:
        self.current_bytes = 0
        self.peak_bytes = 0

    def alloc(self, shape, dtype=np.float64) -> np.ndarray:
        arr = np.empty(shape, dtype=dtype)
        self.add(arr.nbytes)
        return arr

    def zeros(self, shape, dtype=np.float64) -> np.ndarray:
        arr = np.zeros(shape, dtype=dtype)
        self.add(arr.nbytes)
        return arr

    def add(self, nbytes: int) -> None:
        self.current_bytes += int(nbytes)
        if self.current_bytes > self.peak_bytes:
            self.peak_bytes = self.current_bytes

    def release(self, arr_or_bytes) -> None:
        if isinstance(arr_or_bytes, np.ndarray):
            nbytes = arr_or_bytes.nbytes
        else:
            nbytes = int(arr_or_bytes)
        self.current_bytes -= nbytes

    def reset(self) -> None:
        self.current_bytes = 0
        self.peak_bytes = 0


class NullLedger(MemoryLedger):
    """Ledger that allocates without accounting; used when tracking is off."""

    def add(self, nbytes: int) -> None:
        pass

    def release(self, arr_or_bytes) -> None:
        pass
