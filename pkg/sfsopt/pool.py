import asyncio
import logging
import os
import typing as tp
from asyncio.queues import Queue, QueueEmpty

logger = logging.getLogger("sfsopt_pool")


class Pool:
    """
    Coroutine pool with a concurrency limit and a per-coroutine timeout.

    Every coroutine is spawned under an integer key; results and failures are
    kept by key so callers get them back in key order whatever the completion
    order was. The first failure closes the pool: pending coroutines are
    dropped and `wait_spawn` stops accepting new ones.
    """

    def __init__(
        self,
        name: str = "",
        limit: int = 0,
        concurrency: int = 0,
        timeout: tp.Union[int, float, None] = None,
    ):
        self.name = name
        self.concurrency = limit or concurrency or os.cpu_count() or 1
        self.timeout = timeout
        self.pending_queue: Queue[
            tp.Tuple[int, tp.Coroutine, float | None]
        ] = Queue()
        self.done_queue: Queue = Queue()
        self.futures: tp.Dict[asyncio.Future, int] = {}
        self.results: tp.Dict[int, tp.Any] = {}
        self.errors: tp.Dict[int, BaseException] = {}
        self.running_count = 0
        self.running = True

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}-{self.name} <running_count: {self.running_count}, pending_count: {self.pending_queue.qsize()}, done_count: {len(self.results)}>"

    def spawn(
        self,
        key: int,
        coroutine: tp.Coroutine,
        pending: bool = True,
        timeout: float | None = -1,
    ) -> tp.Optional[asyncio.Future]:
        if not self.running:
            coroutine.close()
            raise RuntimeError("This pool has been closed")

        if self.concurrency < 0 or self.running_count < self.concurrency:
            return self._ensure_future(key, coroutine, timeout=timeout)
        elif pending:
            self.pending_queue.put_nowait((key, coroutine, timeout))
            return None
        else:
            return None

    def _ensure_future(self, key: int, coroutine: tp.Coroutine, timeout: float | None):
        timeout = self.timeout if timeout == -1 else timeout
        self.running_count += 1
        f = asyncio.ensure_future(asyncio.wait_for(coroutine, timeout=timeout))
        f.add_done_callback(self.on_future_done)
        self.futures[f] = key
        return f

    async def wait_spawn(
        self, key: int, coroutine: tp.Coroutine, timeout: float | None = -1
    ) -> tp.Optional[asyncio.Future]:
        while self.running:
            if self.concurrency < 0 or self.running_count < self.concurrency:
                return self.spawn(key, coroutine, pending=False, timeout=timeout)
            await self.done_queue.get()
        coroutine.close()
        return None

    @property
    def done(self) -> bool:
        return not (self.running_count or self.pending_queue.qsize())

    async def wait_done(self):
        while not self.done:
            await self.done_queue.get()

    def ordered_results(self) -> tp.List[tp.Any]:
        """Results sorted by key; re-raises the failure with the smallest key."""
        if self.errors:
            raise self.errors[min(self.errors)]
        return [self.results[key] for key in sorted(self.results)]

    def close(self, force=False):
        logger.info(f"Close {'(force)' if force else ''} {self}...")
        self.running = False
        if force:
            self.drop_pending()
            for f in self.futures:
                f.cancel()

    def drop_pending(self):
        while not self.pending_queue.empty():
            _, coroutine, _ = self.pending_queue.get_nowait()
            coroutine.close()

    async def wait_close(self):
        self.close()
        await self.wait_done()

    def force_close(self):
        self.close(force=True)

    def check_future(self, key: int, f: asyncio.Future):
        if f.cancelled():
            self.errors[key] = asyncio.CancelledError(f"run {key} cancelled")
            return
        e = f.exception()
        if e:
            self.errors[key] = e
            try:
                raise e
            except BaseException:
                logger.exception(e)
            if self.running:
                self.close()
            self.drop_pending()
        else:
            self.results[key] = f.result()

    def on_future_done(self, f: asyncio.Future):
        self.running_count -= 1
        self.done_queue.put_nowait(f)
        key = self.futures.pop(f)
        self.check_future(key, f)
        try:
            if self.concurrency == -1 or self.running_count < self.concurrency:
                key, next, timeout = self.pending_queue.get_nowait()
                self._ensure_future(key, next, timeout)
        except QueueEmpty:
            pass
