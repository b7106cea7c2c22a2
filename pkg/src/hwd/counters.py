"""Packed per-signature counters.

Each signature owns one 32-bit cell holding a small count in the high bits
and the sum of the recorded weights in the low bits, so recording a word is a
single addition of ``(1 << sum_bits) + weight``. Cells are updated blindly
during a batch; at the end of the batch they are moved into 64-bit
accumulators and zeroed, and the count fields must add up to the number of
records in the batch. Anything else means a count field wrapped.
"""

from __future__ import annotations

import numba
import numpy as np


class OverflowDetected(Exception):
    """A packed counter wrapped during a batch.

    Under the null hypothesis this has probability below the threshold
    used to certify the batch size (``1e-100`` by default), so it is
    reported as a p-value at most that small.
    """

    def __init__(self, expected: int, found: int, bytes_processed: int | None = None):
        self.expected = expected
        self.found = found
        self.bytes_processed = bytes_processed
        super().__init__(
            f"small counter overflow: count fields sum to {found}, batch had {expected} records"
        )


def count_bits_for(w: int) -> int:
    """Width of the count field: 14 bits when ``w == 16``, 13 otherwise."""
    return 14 if w == 16 else 13


class PackedCounterArray:
    """``3**k`` packed 32-bit (count, weight sum) cells."""

    def __init__(self, k: int, w: int, count_bits: int | None = None):
        self.k = k
        self.w = w
        self.count_bits = count_bits_for(w) if count_bits is None else count_bits
        self.sum_bits = 32 - self.count_bits
        if (1 << self.count_bits) * w > (1 << self.sum_bits):
            raise ValueError(f"{self.count_bits}-bit counts cannot protect {self.sum_bits}-bit sums for w={w}")
        self.cells = np.zeros(3**k, dtype=np.uint32)

    @property
    def capacity(self) -> int:
        return 1 << self.count_bits

    def record(self, s: int, weight: int) -> None:
        # wraps modulo 2**32 like the compiled loop; flush_batch detects it
        self.cells[s] = (int(self.cells[s]) + (1 << self.sum_bits) + weight) & 0xFFFFFFFF

    def count(self, s: int) -> int:
        return int(self.cells[s]) >> self.sum_bits

    def weight_sum(self, s: int) -> int:
        return int(self.cells[s]) & ((1 << self.sum_bits) - 1)


class LargeAccumulator:
    """64-bit per-signature totals: number of records and sum of weights."""

    def __init__(self, k: int):
        self.k = k
        self.counts = np.zeros(3**k, dtype=np.uint64)
        self.sums = np.zeros(3**k, dtype=np.uint64)
        self.total_words = 0


@numba.njit(cache=True)
def _flush(cells, counts, sums, sum_bits):
    shift = numba.uint64(sum_bits)
    mask = numba.uint64((1 << sum_bits) - 1)
    total = numba.uint64(0)
    for s in range(cells.shape[0]):
        c = numba.uint64(cells[s])
        if c:
            n = c >> shift
            total += n
            counts[s] += n
            sums[s] += c & mask
            cells[s] = 0
    return total


def flush_batch(arr: PackedCounterArray, acc: LargeAccumulator, batch_size: int) -> None:
    """Move the packed cells into ``acc`` after a batch of ``batch_size`` records.

    Raises :class:`OverflowDetected` if the count fields do not add up to
    ``batch_size``. In that case the accumulator is left inconsistent and the
    run must stop.
    """
    found = _flush(arr.cells, acc.counts, acc.sums, arr.sum_bits)
    if found != batch_size:
        raise OverflowDetected(batch_size, found)
    acc.total_words += batch_size
