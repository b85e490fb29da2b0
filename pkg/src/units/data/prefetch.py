from __future__ import annotations

import logging
import queue
import threading
from collections.abc import Callable, Iterator
from typing import Generic, Optional, TypeVar

from units.errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")

_POLL_SECONDS = 0.1


class _Done:
    pass


_DONE = _Done()


class BatchPrefetcher(Generic[T]):
    """Produces items on a worker thread into a bounded queue.

    The worker checks a stop event between items, so `stop()` returns promptly even when
    the consumer has stopped reading. Items must be immutable once handed over. An
    exception raised by the producer is re-raised on the consuming thread.
    """

    def __init__(self, produce: Callable[[], Iterator[T]], *, depth: int = 4) -> None:
        if depth < 1:
            raise ConfigError(f"prefetch depth must be >= 1, got {depth}")
        self._produce = produce
        self._queue: queue.Queue[object] = queue.Queue(maxsize=depth)
        self._stop_event = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._error: Optional[BaseException] = None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, name="units-prefetch", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is None:
            return
        self._stop_event.set()
        self._thread.join(2.5)
        self._thread = None

    def _put(self, item: object) -> bool:
        while not self._stop_event.is_set():
            try:
                self._queue.put(item, timeout=_POLL_SECONDS)
                return True
            except queue.Full:
                continue
        return False

    def _run(self) -> None:
        try:
            for item in self._produce():
                if not self._put(item):
                    return
        except BaseException as exc:  # handed to the consumer
            logger.debug("prefetch worker failed: %s", exc)
            self._error = exc
        self._put(_DONE)

    def __iter__(self) -> Iterator[T]:
        self.start()
        while True:
            item = self._queue.get()
            if item is _DONE:
                if self._error is not None:
                    raise self._error
                return
            yield item  # type: ignore[misc]

    def __enter__(self) -> BatchPrefetcher[T]:
        self.start()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.stop()
