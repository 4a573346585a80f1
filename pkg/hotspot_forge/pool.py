"""A coroutine worker pool for blocking numeric jobs.

Jobs go on a :class:`tornado.queues.Queue`; a fixed number of worker
coroutines take them off, run each one on a thread executor and mark it
done. With one job per worker at a time, the worker count bounds the jobs
in the executor. Results come back in submission order whatever the
completion order, which keeps sweeps and Monte Carlo reductions
deterministic.

    >>> from hotspot_forge.pool import run_jobs
    >>> run_jobs(abs, [-1, 2, -3], concurrency=2)
    [1, 2, 3]
"""

import logging
import os
from concurrent import futures

from tornado import gen, queues
from tornado.ioloop import IOLoop

from hotspot_forge.errors import ParameterError

logger = logging.getLogger(__name__)

__all__ = ['JobFailure', 'WorkerPool', 'run_jobs', 'default_concurrency']

THREADS_ENV = 'HOTSPOT_FORGE_THREADS'


def default_concurrency():
    """Worker count from ``$HOTSPOT_FORGE_THREADS``, else the CPU count."""
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            count = int(value)
        except ValueError:
            raise ParameterError('%s must be an integer, got %r'
                                 % (THREADS_ENV, value))
        if count < 1:
            raise ParameterError('%s must be >= 1' % THREADS_ENV)
        return count
    return os.cpu_count() or 1


class JobFailure(object):
    """Stands in for the result of a job that raised.

    :Parameters:
      - `index`: Position of the job in the submitted sequence.
      - `item`: The job's input.
      - `exception`: What it raised.
    """

    def __init__(self, index, item, exception):
        self.index = index
        self.item = item
        self.exception = exception

    def __str__(self):
        return '<%s #%d %s: %s>' % (
            self.__class__.__name__, self.index,
            type(self.exception).__name__, self.exception)

    __repr__ = __str__

    def __bool__(self):
        return False


class WorkerPool(object):
    """Run a blocking function over many inputs with bounded concurrency.

    :Parameters:
      - `concurrency`: Number of worker coroutines and executor threads.
        Defaults to :func:`default_concurrency`.
      - `executor`: Optional :class:`concurrent.futures.Executor`; a
        thread pool of `concurrency` threads is created per :meth:`map`
        otherwise.
    """

    def __init__(self, concurrency=None, executor=None):
        if concurrency is None:
            concurrency = default_concurrency()
        if concurrency < 1:
            raise ParameterError('concurrency must be >= 1')
        self.concurrency = int(concurrency)
        self.executor = executor

    def __str__(self):
        return '<%s concurrency=%d>' % (self.__class__.__name__,
                                        self.concurrency)

    @gen.coroutine
    def map(self, fn, items):
        """Apply `fn` to every item; resolves to the list of results.

        A job that raises contributes a :class:`JobFailure` instead of a
        result, and the remaining jobs still run.
        """
        items = list(items)
        results = [None] * len(items)
        q = queues.Queue()
        for job in enumerate(items):
            q.put_nowait(job)
        own_executor = self.executor is None
        executor = self.executor or futures.ThreadPoolExecutor(
            max_workers=self.concurrency)
        loop = IOLoop.current()

        @gen.coroutine
        def worker():
            while True:
                try:
                    index, item = q.get_nowait()
                except queues.QueueEmpty:
                    return
                try:
                    results[index] = yield loop.run_in_executor(
                        executor, fn, item)
                except Exception as e:
                    logger.warning('job %d failed: %s', index, e)
                    results[index] = JobFailure(index, item, e)
                finally:
                    q.task_done()

        try:
            workers = [worker() for _ in range(self.concurrency)]
            yield q.join()
            yield workers
        finally:
            if own_executor:
                executor.shutdown(wait=True)
        return results


def run_jobs(fn, items, concurrency=None):
    """Synchronous :meth:`WorkerPool.map` on a private IOLoop."""
    pool = WorkerPool(concurrency)
    loop = IOLoop()
    try:
        return loop.run_sync(lambda: pool.map(fn, items))
    finally:
        loop.close()
