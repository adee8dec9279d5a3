# utils/workers.py
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Sequence

log = logging.getLogger(__name__)


def default_threads() -> int:
    """Thread cap from IMC_THREADS, else the CPU count."""
    value = os.getenv("IMC_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            log.warning(f"Ignoring invalid IMC_THREADS value '{value}'.")
    return os.cpu_count() or 1


def batches(ids: Sequence[int], size: int) -> list[list[int]]:
    """Splits replicate ids into consecutive batches of at most `size`."""
    ids = list(ids)
    return [ids[i:i + size] for i in range(0, len(ids), size)]


class Job:
    """One unit of replicate work: a callable applied to a batch of replicate ids."""

    def __init__(self, callback: Callable[[list[int]], Any], replicate_ids: list[int]):
        self.callback = callback
        self.replicate_ids = replicate_ids
        self.result = None


class ReplicatePool:
    """
    Runs replicate batches on a capped thread pool.

    Each job derives its random streams from its replicate ids, so results do not depend
    on the thread count or on completion order. Results come back in submission order.
    """

    def __init__(self, threads: int | None = None):
        self.threads = threads or default_threads()
        self._jobs: list[Job] = []

    def add_job(self, job: Job):
        self._jobs.append(job)

    def run_all(self) -> list[Any]:
        log.info(f"Running {len(self._jobs)} replicate batch(es) on {self.threads} thread(s)...")
        if self.threads == 1 or len(self._jobs) <= 1:
            for job in self._jobs:
                job.result = job.callback(job.replicate_ids)
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                futures = [executor.submit(job.callback, job.replicate_ids) for job in self._jobs]
                for job, future in zip(self._jobs, futures):
                    job.result = future.result()
        results = [job.result for job in self._jobs]
        self._jobs.clear()
        return results


def run_batched(callback: Callable[[list[int]], list], count: int, batch_size: int, threads: int | None = None) -> list:
    """Applies `callback` to replicate ids 0..count-1 in batches and concatenates the per-batch lists."""
    pool = ReplicatePool(threads)
    for ids in batches(range(count), batch_size):
        pool.add_job(Job(callback, ids))
    return [item for batch in pool.run_all() for item in batch]
