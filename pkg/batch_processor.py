"""
Batch Processor - ordered concurrent map for classification sweeps and
theorem draws.

Each item produces a record {"index", "status", "result" | "error"}; a failing
item never aborts the batch. Output order always matches input order.
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Type, TypeVar

from config import WORKERS

logger = logging.getLogger(__name__)

T = TypeVar("T")


def process_items(
    func: Callable[[T], object],
    items: Sequence[T],
    label: str = "item",
    workers: Optional[int] = None,
    recoverable: Tuple[Type[BaseException], ...] = (Exception,),
) -> List[Dict]:
    """
    Apply `func` to every item and collect status records.

    Args:
        func: Work function applied to one item
        items: Inputs, processed in order (or concurrently when workers > 1)
        label: Name used in log lines ("draw", "point", ...)
        workers: Thread count; defaults to config.WORKERS
        recoverable: Exception types turned into error records; anything else propagates

    Returns:
        One record per item, in input order
    """
    workers = max(1, int(workers or WORKERS or 1))
    total = len(items)

    def _process_one(index: int) -> Dict:
        logger.debug(f"Processing {label} {index + 1}/{total}")
        return {"index": index, "status": "success", "result": func(items[index])}

    def _error_record(index: int, error: BaseException) -> Dict:
        logger.debug(f"✗ {label} {index + 1}/{total} failed: {error}")
        return {"index": index, "status": "error", "error": str(error), "error_type": type(error).__name__}

    results: List[Optional[Dict]] = [None] * total
    if workers == 1 or total <= 1:
        for index in range(total):
            try:
                results[index] = _process_one(index)
            except recoverable as e:
                results[index] = _error_record(index, e)
    else:
        logger.info(f"Running {total} {label}(s) with parallel workers: {workers}")
        with ThreadPoolExecutor(max_workers=workers) as executor:
            future_to_index = {executor.submit(_process_one, i): i for i in range(total)}
            for future in as_completed(future_to_index):
                index = future_to_index[future]
                try:
                    results[index] = future.result()
                except recoverable as e:
                    results[index] = _error_record(index, e)

    successful = sum(1 for r in results if r["status"] == "success")
    logger.debug(f"{label}: {successful} successful, {total - successful} failed")
    return results
