"""Instrumented allocation tracking for engine tensors.

Every :class:`~tinstitch.tensor.Tensor` registers its payload size with the
active tracker on construction and deregisters when garbage collected.
CPython's reference counting frees tensors deterministically, so ``current``
mirrors the live working set and ``peak`` its high-water mark.  Raw pixel
buffers (uint8 arrays used for image input/output) are intentionally not
tensors and stay outside the measurement.
"""

from __future__ import annotations

import threading

_lock = threading.Lock()
_active: "MemoryTracker | None" = None


class MemoryTracker:
    """Context manager recording live tensor bytes and their peak."""

    def __init__(self):
        self.current = 0
        self.peak = 0

    def add(self, nbytes: int) -> None:
        with _lock:
            self.current += nbytes
            if self.current > self.peak:
                self.peak = self.current

    def release(self, nbytes: int) -> None:
        with _lock:
            self.current -= nbytes

    def __enter__(self) -> "MemoryTracker":
        global _active
        if _active is not None:
            raise RuntimeError("a MemoryTracker is already active")
        _active = self
        return self

    def __exit__(self, *exc) -> None:
        global _active
        _active = None


def active_tracker() -> "MemoryTracker | None":
    return _active
