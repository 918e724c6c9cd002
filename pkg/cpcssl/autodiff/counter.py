"""Multiply-accumulate accounting for matmul and convolution kernels."""
import threading
from collections import Counter
from contextlib import contextmanager
from typing import Iterator, List

_local = threading.local()


def _counters() -> List[Counter]:
    if not hasattr(_local, "counters"):
        _local.counters = []
        _local.categories = ["other"]
    return _local.counters


def _categories() -> List[str]:
    _counters()
    return _local.categories


@contextmanager
def count_macs() -> Iterator[Counter]:
    """Collect MACs per category for every kernel executed inside the block."""
    counter: Counter = Counter()
    _counters().append(counter)
    try:
        yield counter
    finally:
        _counters().remove(counter)


@contextmanager
def mac_category(name: str) -> Iterator[None]:
    """Tag kernels executed inside the block with ``name``."""
    _categories().append(name)
    try:
        yield
    finally:
        _categories().pop()


def add_macs(count: int) -> None:
    counters = _counters()
    if not counters:
        return
    category = _categories()[-1]
    for counter in counters:
        counter[category] += int(count)
