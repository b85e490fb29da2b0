from __future__ import annotations

import threading
import time
from collections.abc import Iterator

import pytest

from units.data import BatchPrefetcher
from units.errors import ConfigError


class TestBatchPrefetcher:
    def test_yields_everything_in_order(self) -> None:
        prefetcher = BatchPrefetcher(lambda: iter(range(25)), depth=3)
        assert list(prefetcher) == list(range(25))
        prefetcher.stop()

    def test_runs_on_worker_thread(self) -> None:
        seen: list[str] = []

        def produce() -> Iterator[int]:
            seen.append(threading.current_thread().name)
            yield 1

        with BatchPrefetcher(produce) as prefetcher:
            assert list(prefetcher) == [1]
        assert seen == ["units-prefetch"]

    def test_producer_error_reaches_consumer(self) -> None:
        def produce() -> Iterator[int]:
            yield 1
            raise RuntimeError("broken source")

        prefetcher = BatchPrefetcher(produce)
        items = iter(prefetcher)
        assert next(items) == 1
        with pytest.raises(RuntimeError, match="broken source"):
            next(items)
        prefetcher.stop()

    def test_stop_with_full_queue(self) -> None:
        """Stopping an endless producer that nobody reads returns promptly."""

        def endless() -> Iterator[int]:
            n = 0
            while True:
                yield n
                n += 1

        prefetcher = BatchPrefetcher(endless, depth=2)
        items = iter(prefetcher)
        assert next(items) == 0
        started = time.monotonic()
        prefetcher.stop()
        assert time.monotonic() - started < 2.0

    def test_invalid_depth(self) -> None:
        with pytest.raises(ConfigError, match="depth"):
            BatchPrefetcher(lambda: iter(()), depth=0)
