"""Work-item executors for campaigns.

Executors are responsible only for:
- Running a pure function over independent work items
- Returning results in input order
- Reporting progress

Every work item carries its own seeds, so results do not depend on the
executor or the worker count. Aggregation happens in campaign.py.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class CampaignExecutor(ABC):
    """Abstract base class for campaign executors."""

    def __init__(self, show_progress: bool = False, description: str = "campaign"):
        self.show_progress = show_progress
        self.description = description

    @abstractmethod
    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        """Apply ``fn`` to every item and yield results in input order.

        Args:
            fn: Pure function of one work item
            items: Work items

        Yields:
            ``fn(item)`` for each item, in order
        """

    def _progress(self, results: Iterator[R], total: int) -> Iterator[R]:
        if not self.show_progress:
            return results
        return iter(tqdm(results, total=total, desc=self.description, unit="item"))


class SerialExecutor(CampaignExecutor):
    """Runs work items one after another in the calling thread."""

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        items = list(items)
        return self._progress((fn(item) for item in items), len(items))


class ThreadedExecutor(CampaignExecutor):
    """Runs work items on a thread pool.

    numpy releases the GIL inside its kernels, so int8 inference scales across
    a few threads. Models and LUTs are immutable and shared; each work item
    owns its traces.
    """

    def __init__(
        self, workers: int, show_progress: bool = False, description: str = "campaign"
    ):
        super().__init__(show_progress=show_progress, description=description)
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        items = list(items)
        logger.debug(f"Running {len(items)} items on {self.workers} threads")
        return self._ordered(fn, items)

    def _ordered(self, fn: Callable[[T], R], items: list[T]) -> Iterator[R]:
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            # pool.map yields in submission order
            yield from self._progress(pool.map(fn, items), len(items))


def make_executor(
    workers: int, show_progress: bool = False, description: str = "campaign"
) -> CampaignExecutor:
    """Serial executor for one worker, threaded otherwise."""
    if workers <= 1:
        return SerialExecutor(show_progress=show_progress, description=description)
    return ThreadedExecutor(workers, show_progress=show_progress, description=description)
