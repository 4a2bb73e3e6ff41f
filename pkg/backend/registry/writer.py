import queue
import threading
from concurrent.futures import Future
from typing import Any, Callable

import structlog

logger = structlog.get_logger(__name__)

_STOP = object()


class WriteQueue:
    """Runs every mutation on one worker thread, in submission order.

    Callers block on the returned result, so a write is durable and visible
    in the store snapshot once ``submit`` returns.
    """

    def __init__(self, name: str = "expdb-writer"):
        self.name = name
        self.task_queue: "queue.Queue" = queue.Queue()
        self.worker = None
        self.running = False

    def submit(self, fn: Callable[..., Any], *args, **kwargs) -> Any:
        if threading.current_thread() is self.worker:
            return fn(*args, **kwargs)
        if not self.running:
            raise RuntimeError("write queue is not running")
        future: Future = Future()
        self.task_queue.put((fn, args, kwargs, future))
        return future.result()

    def _worker(self):
        while True:
            item = self.task_queue.get()
            try:
                if item is _STOP:
                    return
                fn, args, kwargs, future = item
                if not future.set_running_or_notify_cancel():
                    continue
                try:
                    future.set_result(fn(*args, **kwargs))
                except BaseException as exc:
                    future.set_exception(exc)
            finally:
                self.task_queue.task_done()

    def start_worker(self):
        if not self.running:
            self.running = True
            self.worker = threading.Thread(target=self._worker, name=self.name, daemon=True)
            self.worker.start()
            logger.debug("writer_started", name=self.name)

    def stop_worker(self, timeout: float = 5.0):
        if self.running:
            self.running = False
            self.task_queue.put(_STOP)
            self.worker.join(timeout=timeout)
            self.worker = None
            logger.debug("writer_stopped", name=self.name)
