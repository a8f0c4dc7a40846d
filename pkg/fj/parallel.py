import asyncio
import concurrent.futures
import logging
from typing import Any, Callable, Optional, Sequence

from tqdm import tqdm

logger = logging.getLogger(__name__)


async def run_in_executor(executor, fn, *args):
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(executor, fn, *args)


async def batch_call_internal(fn, args_list, max_workers):
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        tasks = [run_in_executor(executor, fn, *args) for args in args_list]
        return await asyncio.gather(*tasks, return_exceptions=True)


def batch_call(fn: Callable, args_list: Sequence[tuple], max_workers: Optional[int] = None) -> list[Any]:
    """
    Run fn(*args) for every tuple in args_list on a thread pool.

    Results come back in input order; a call that raised yields its exception
    instead of a result.
    """
    if not args_list:
        return []
    try:
        try:
            loop = asyncio.get_running_loop()
        except RuntimeError:  # no event loop yet
            loop = asyncio.new_event_loop()
            asyncio.set_event_loop(loop)
        results = loop.run_until_complete(batch_call_internal(fn, args_list, max_workers))
    except RuntimeError:  # an event loop is already running
        import nest_asyncio
        nest_asyncio.apply()
        loop = asyncio.get_running_loop()
        results = loop.run_until_complete(batch_call_internal(fn, args_list, max_workers))
    for args, r in zip(args_list, results):
        if isinstance(r, Exception):
            logger.warning(f"Error: {r!r} for {args[0] if args else '()'}")
    return results


def batch_call_chunked(fn: Callable, args_list: Sequence[tuple], batch_size: int = 64,
                       max_workers: Optional[int] = None, desc: str = "Checking") -> list[Any]:
    all_results = []
    for i in tqdm(range(0, len(args_list), batch_size), desc=desc):
        all_results.extend(batch_call(fn, args_list[i:i + batch_size], max_workers))
    return all_results
