import os
import threading
import time
import unittest
from concurrent import futures
from unittest import mock

from tornado.testing import AsyncTestCase, gen_test

from hotspot_forge import pool
from hotspot_forge.errors import ParameterError
from test import assert_raises


class WorkerPoolTest(AsyncTestCase):
    @gen_test
    def test_order(self):
        def job(i):
            # Later jobs finish first.
            time.sleep(0.01 * (5 - i))
            return i * i

        results = yield pool.WorkerPool(3).map(job, range(5))
        self.assertEqual([0, 1, 4, 9, 16], results)

    @gen_test
    def test_failure(self):
        def job(i):
            if i == 2:
                raise ValueError('bad item')
            return i

        results = yield pool.WorkerPool(2).map(job, range(4))
        self.assertEqual([0, 1], results[:2])
        self.assertEqual(3, results[3])
        failure = results[2]
        self.assertIsInstance(failure, pool.JobFailure)
        self.assertFalse(failure)
        self.assertEqual(2, failure.index)
        self.assertIsInstance(failure.exception, ValueError)
        self.assertIn('bad item', str(failure))

    @gen_test
    def test_concurrency_bound(self):
        lock = threading.Lock()
        state = {'active': 0, 'peak': 0}

        def job(i):
            with lock:
                state['active'] += 1
                state['peak'] = max(state['peak'], state['active'])
            time.sleep(0.02)
            with lock:
                state['active'] -= 1
            return i

        results = yield pool.WorkerPool(2).map(job, range(8))
        self.assertEqual(list(range(8)), results)
        self.assertLessEqual(state['peak'], 2)
        self.assertEqual(0, state['active'])

        # A wider executor does not raise the bound: each worker has at most
        # one job in flight.
        executor = futures.ThreadPoolExecutor(max_workers=4)
        try:
            results = yield pool.WorkerPool(2, executor).map(job, range(8))
        finally:
            executor.shutdown()
        self.assertEqual(list(range(8)), results)
        self.assertLessEqual(state['peak'], 2)

    @gen_test
    def test_empty(self):
        results = yield pool.WorkerPool(2).map(abs, [])
        self.assertEqual([], results)

    @gen_test
    def test_shared_executor(self):
        executor = futures.ThreadPoolExecutor(max_workers=1)
        try:
            results = yield pool.WorkerPool(4, executor).map(abs, [-1, -2])
            self.assertEqual([1, 2], results)
            # Still usable: map() leaves a caller's executor running.
            self.assertEqual(3, executor.submit(abs, -3).result())
        finally:
            executor.shutdown()

    def test_str(self):
        self.assertEqual('<WorkerPool concurrency=3>',
                         str(pool.WorkerPool(3)))

    def test_concurrency_must_be_positive(self):
        with assert_raises(ParameterError):
            pool.WorkerPool(0)


class RunJobsTest(unittest.TestCase):
    def test_run_jobs(self):
        self.assertEqual([1, 2, 3], pool.run_jobs(abs, [-1, 2, -3], 2))

    def test_default_concurrency(self):
        with mock.patch.dict(os.environ, {pool.THREADS_ENV: '3'}):
            self.assertEqual(3, pool.default_concurrency())
            self.assertEqual(3, pool.WorkerPool().concurrency)
        with mock.patch.dict(os.environ, {pool.THREADS_ENV: 'many'}):
            with assert_raises(ParameterError, 'must be an integer'):
                pool.default_concurrency()
        with mock.patch.dict(os.environ, {pool.THREADS_ENV: '0'}):
            with assert_raises(ParameterError, 'must be >= 1'):
                pool.default_concurrency()
        with mock.patch.dict(os.environ, {pool.THREADS_ENV: ''}):
            self.assertGreaterEqual(pool.default_concurrency(), 1)


if __name__ == '__main__':
    unittest.main()
