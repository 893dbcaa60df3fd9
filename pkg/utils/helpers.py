"""Common helper functions used across the application."""

import asyncio
import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")


def get_content_hash(payload: dict[str, Any]) -> str:
    """
    Generate SHA-256 hash of a JSON-serializable payload for cache keys.

    Keys are sorted and floats rendered with repr, so equal parameter sets
    produce equal hashes regardless of dict insertion order.

    Args:
        payload: Parameters identifying an artifact

    Returns:
        Hex string of SHA-256 hash (64 characters)

    Example:
        >>> get_content_hash({"b": 1, "a": 0.5}) == get_content_hash({"a": 0.5, "b": 1})
        True
    """
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(canonical.encode()).hexdigest()


def format_float(value: float) -> str:
    """
    Shortest round-trip decimal for a float.

    Example:
        >>> format_float(0.1)
        '0.1'
        >>> format_float(float("inf"))
        'inf'
    """
    return repr(float(value))


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Write rows under a header with every float in round-trip form.

    Args:
        path: Destination file; parent directories are created
        header: Column names
        rows: Row values, formatted with format_cell

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(v) for v in row])
    return path


async def _gather_blockwise(
    func: Callable[[int], T], blocks: Sequence[int], threads: int
) -> list[T]:
    semaphore = asyncio.Semaphore(max(1, threads))

    async def _one(j: int) -> T:
        async with semaphore:
            return await asyncio.to_thread(func, j)

    return await asyncio.gather(*[_one(j) for j in blocks])


def run_blockwise(func: Callable[[int], T], blocks: Sequence[int], threads: int = 1) -> list[T]:
    """
    Apply a block-local computation to every block id.

    With threads > 1 the calls run in worker threads (numpy and SuperLU
    release the GIL). Results come back in the order of `blocks`, so the
    output never depends on the schedule.

    Args:
        func: Callable taking a block id
        blocks: Block ids, in output order
        threads: Maximum concurrent calls

    Returns:
        List of results aligned with `blocks`
    """
    if threads <= 1 or len(blocks) <= 1:
        return [func(j) for j in blocks]
    return asyncio.run(_gather_blockwise(func, blocks, threads))
