"""
MAC Profiler
Exact multiply-accumulate accounting for matmul and conv2d kernels.
"""

import contextlib
import threading
from collections import Counter
from typing import Iterator

_state = threading.local()


class MACCounter:
    """Accumulates multiply-accumulate counts keyed by scope name."""

    def __init__(self):
        self.by_scope: Counter = Counter()

    @property
    def total(self) -> int:
        return int(sum(self.by_scope.values()))

    def __getitem__(self, scope: str) -> int:
        return int(self.by_scope.get(scope, 0))


def _stack() -> list:
    if not hasattr(_state, "counters"):
        _state.counters = []
        _state.scopes = ["default"]
    return _state.counters


@contextlib.contextmanager
def count_macs() -> Iterator[MACCounter]:
    """Collect MACs of every kernel executed on this thread inside the block."""
    counters = _stack()
    counter = MACCounter()
    counters.append(counter)
    try:
        yield counter
    finally:
        counters.remove(counter)


@contextlib.contextmanager
def mac_scope(name: str) -> Iterator[None]:
    """Tag MACs recorded inside the block with `name`."""
    _stack()
    _state.scopes.append(name)
    try:
        yield
    finally:
        _state.scopes.pop()


def record_macs(count: int) -> None:
    counters = _stack()
    if not counters:
        return
    scope = _state.scopes[-1]
    for counter in counters:
        counter.by_scope[scope] += int(count)
