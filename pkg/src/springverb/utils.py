import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, TypeVar, Union

import numpy as np

__all__ = ["load_json", "dump_json", "worker_count", "parallel_map", "hardware_descriptor"]

THREADS_ENV = "SPRINGVERB_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def load_json(filename: Union[str, Path], process: Optional[Callable] = None) -> Any:
    with open(filename) as f:
        data = json.load(f)

    if process is not None:
        data = process(data)

    return data


def dump_json(filename: Union[str, Path], data: Any) -> None:
    """ Pretty-printed JSON with sorted keys. """
    Path(filename).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def worker_count() -> int:
    """ Thread pool size, capped by ``SPRINGVERB_THREADS`` when set. """
    default = min(4, os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """ ``map`` over a thread pool; results keep the order of ``items``. """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="springverb") as pool:
        return list(pool.map(fn, items))


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine() or "unknown cpu"
    return (f"{cpu}, {os.cpu_count() or 1} cores, {platform.system()} {platform.release()}, "
            f"python {platform.python_version()}, numpy {np.__version__}")
