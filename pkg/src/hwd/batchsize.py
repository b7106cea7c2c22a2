"""Certified batch sizes for the packed counters.

Within a batch the count field of a cell must not wrap. The signature most
likely to wrap is the all-ones one (every trit central), so it suffices to
bound the probability that a random stream visits it ``b = 2**count_bits``
or more times in ``B`` steps.

That probability is computed on an auxiliary chain whose state is
``(c, j)``: ``c`` visits so far (``c == b`` lumps "b or more") and ``j`` the
length of the current run of central trits (``j == k-1`` lumps runs of
length ``k-1`` and ``k``). Each step:

* every state moves to ``(c, 0)`` with probability ``1-p``;
* ``(c, j)`` with ``j < k-1`` moves to ``(c, j+1)`` with probability ``p``;
* ``(c, k-1)`` moves to ``(c+1, k-1)`` with probability ``p`` (``(b, k-1)``
  loops).

The chain starts with ``c = 0`` and ``j`` at its stationary distribution.
It is iterated exactly for up to ``10**6`` steps; longer horizons are
reached by convolving visit-count distributions of disjoint blocks, which
treats the chain as restarted at block boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numba
import numpy as np

from .counters import count_bits_for
from .weightclass import MAX_K, SUPPORTED_WIDTHS, WordParams, central_probability

log = logging.getLogger(__name__)

EXACT_STEPS = 10**6
# stay clear of subnormals; far below any threshold of interest (~1e-110)
FLUSH_BELOW = 1e-300
TABLE_RESOURCE = "batch_sizes.txt"


def default_threshold(k: int) -> float:
    return 1e-100 / 3**k


def steady_state_suffix(p: float, k: int) -> np.ndarray:
    """Stationary distribution of the run length of central trits, capped at ``k-1``."""
    pi = np.array([(1 - p) * p**j for j in range(k - 1)] + [p ** (k - 1)])
    return pi


@dataclass
class PassageDistribution:
    """Distribution of the visit count after ``steps`` steps; ``probs[b]`` lumps ``>= b``."""

    steps: int
    probs: np.ndarray

    @property
    def overflow(self) -> float:
        return float(self.probs[-1])


# --- exact iteration ---------------------------------------------------------
#
# For j < k-1 the state (c, j) at step u holds p**j times the mass of (c, 0)
# at step u-j, so only a ring of the last k-1 values of column 0 and the
# column j = k-1 are stored.

@numba.njit(cache=True)
def _tail(hist, last, pos, pw):
    km1 = hist.shape[0]
    b = last.shape[0] - 1
    t = last[b]
    for j in range(km1):
        t += pw[j] * hist[(pos - j) % km1, b]
    return t


@numba.njit(cache=True)
def _iterate(hist, last, pos, lo, hi, p, steps, threshold, tiny):
    km1, size = hist.shape[0], last.shape[0]
    k = km1 + 1
    b = size - 1
    r = 1.0 - p
    pw = np.empty(km1)
    for j in range(km1):
        pw[j] = p**j
    pk1 = p ** (k - 1)
    rowsum = np.zeros(size)
    newlast = np.zeros(size)
    for u in range(steps):
        if _tail(hist, last, pos, pw) > threshold:
            return u, pos, lo, hi
        top = min(hi + 1, b)
        for c in range(lo, top + 1):
            rowsum[c] = last[c]
        for j in range(km1):
            col = hist[(pos - j) % km1]
            wj = pw[j]
            for c in range(lo, top + 1):
                rowsum[c] += wj * col[c]
        if km1 == 0:
            newlast[lo] = r * last[lo]
            for c in range(lo + 1, top + 1):
                newlast[c] = r * last[c] + p * last[c - 1]
        else:
            oldest = hist[(pos + 1) % km1]
            newlast[lo] = pk1 * oldest[lo]
            for c in range(lo + 1, top + 1):
                newlast[c] = pk1 * oldest[c] + p * last[c - 1]
        if top == b and hi == b:
            newlast[b] += p * last[b]
        if km1:
            pos = (pos + 1) % km1
            dst = hist[pos]
            for c in range(lo, top + 1):
                x = r * rowsum[c]
                dst[c] = x if x >= tiny else 0.0
        for c in range(lo, top + 1):
            y = newlast[c]
            last[c] = y if y >= tiny else 0.0
        hi = top
        while lo < hi:
            live = last[lo] != 0.0
            for j in range(km1):
                live = live or hist[j, lo] != 0.0
            if live:
                break
            lo += 1
        while hi > lo:
            live = last[hi] != 0.0
            for j in range(km1):
                live = live or hist[j, hi] != 0.0
            if live:
                break
            hi -= 1
    return steps, pos, lo, hi


class OverflowChain:
    """Visit-count chain for the all-ones signature.

    Parameters
    ----------
    p : float
        Probability of a central trit.
    k : int
        Window length.
    b : int
        Overflow bound; ``c == b`` means ``b`` or more visits.
    """

    def __init__(self, p: float, k: int, b: int):
        if not 0 < p < 1:
            raise ValueError("p must be in (0, 1)")
        self.p, self.k, self.b = p, k, b
        self.steps = 0
        pi = steady_state_suffix(p, k)
        self._hist = np.zeros((k - 1, b + 1))
        self._hist[:, 0] = 1 - p  # column 0 at steps 0, -1, ..., -(k-2); scaled by p**j it gives pi[j]
        self._last = np.zeros(b + 1)
        self._last[0] = pi[-1]
        self._pos = 0
        self._lo = self._hi = 0

    def advance(self, steps: int = 1, threshold: float = math.inf) -> int:
        """Advance up to ``steps`` steps, stopping early once the overflow
        probability exceeds ``threshold``. Returns the number of steps taken."""
        done, self._pos, self._lo, self._hi = _iterate(
            self._hist, self._last, self._pos, self._lo, self._hi,
            self.p, steps, threshold, FLUSH_BELOW,
        )
        self.steps += done
        return done

    @property
    def q(self) -> np.ndarray:
        """The ``(b+1) x k`` matrix of state probabilities."""
        k = self.k
        q = np.empty((self.b + 1, k))
        for j in range(k - 1):
            q[:, j] = self.p**j * self._hist[(self._pos - j) % (k - 1)]
        q[:, k - 1] = self._last
        return q

    def passage_distribution(self) -> PassageDistribution:
        probs = self.q.sum(axis=1)
        # undo rounding drift (about 1e-17 per step)
        probs /= probs.sum()
        return PassageDistribution(self.steps, probs)


def step_chain(chain: OverflowChain) -> OverflowChain:
    chain.advance(1)
    return chain


def step_dense(q: np.ndarray, p: float) -> np.ndarray:
    """One step on the full ``(b+1) x k`` matrix, transition by transition."""
    b, k = q.shape[0] - 1, q.shape[1]
    new = np.zeros_like(q)
    new[:, 0] += (1 - p) * q.sum(axis=1)
    new[:, 1:] += p * q[:, :-1]
    new[1:, k - 1] += p * q[:-1, k - 1]
    new[b, k - 1] += p * q[b, k - 1]
    return new


def overflow_probability(chain: OverflowChain | np.ndarray) -> float:
    q = chain.q if isinstance(chain, OverflowChain) else chain
    return float(q[-1].sum())


# --- block convolution -------------------------------------------------------

def extend_by_doubling(d1: PassageDistribution, d2: PassageDistribution) -> PassageDistribution:
    """Visit-count distribution over two consecutive independent blocks."""
    b = d1.probs.shape[0] - 1
    # np.convolve is a direct sum of non-negative products: tiny tails survive
    full = np.convolve(d1.probs, d2.probs)
    probs = full[: b + 1].copy()
    probs[b] = full[b:].sum()
    return PassageDistribution(d1.steps + d2.steps, probs)


def compute_batch_size(w: int, k: int, count_bits: int | None = None,
                       threshold: float | None = None, ell: int | None = None,
                       exact_steps: int = EXACT_STEPS) -> int:
    """Largest batch whose all-ones overflow probability stays below ``threshold``.

    Below ``exact_steps`` the answer is exact to the step. Beyond it the
    answer is a multiple of ``exact_steps`` found by binary search over
    sums of doubled blocks.
    """
    if w not in SUPPORTED_WIDTHS:
        raise ValueError(f"unsupported word width {w}")
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be in [1, {MAX_K}], got {k}")
    count_bits = count_bits_for(w) if count_bits is None else count_bits
    threshold = default_threshold(k) if threshold is None else threshold
    p = central_probability(WordParams.for_width(w, ell))

    chain = OverflowChain(p, k, 1 << count_bits)
    done = chain.advance(exact_steps, threshold)
    if done < exact_steps:
        log.debug("w=%d k=%d: exact crossing after %d steps", w, k, done)
        return done - 1 if done else 0
    # the chain can still cross at exactly exact_steps
    if overflow_probability(chain) > threshold:
        return exact_steps - 1

    blocks = [chain.passage_distribution()]
    while blocks[-1].overflow < threshold:
        blocks.append(extend_by_doubling(blocks[-1], blocks[-1]))
    top = len(blocks) - 1
    acc, m = blocks[top - 1], 1 << (top - 1)
    for h in range(top - 2, -1, -1):
        cand = extend_by_doubling(acc, blocks[h])
        if cand.overflow < threshold:
            acc, m = cand, m + (1 << h)
    log.debug("w=%d k=%d: %d blocks of %d steps", w, k, m, exact_steps)
    return m * exact_steps


# --- cached table ------------------------------------------------------------

def format_table_line(w: int, k: int, threshold: float, batch: int) -> str:
    return f"{w} {k} {threshold:.6e} {batch}"


@lru_cache(maxsize=1)
def load_table() -> dict[tuple[int, int], tuple[float, int]]:
    """``(w, k) -> (threshold, batch)`` from the bundled table."""
    out = {}
    try:
        text = resources.files("hwd.data").joinpath(TABLE_RESOURCE).read_text()
    except FileNotFoundError:
        return out
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        w, k, thr, batch = line.split()
        out[int(w), int(k)] = (float(thr), int(batch))
    return out


def certified_batch_size(w: int, k: int, ell: int | None = None) -> int:
    """Batch size for the default threshold and count width, from the table if possible."""
    if ell is None or ell == WordParams.for_width(w).ell:
        entry = load_table().get((w, k))
        if entry is not None and math.isclose(entry[0], default_threshold(k), rel_tol=1e-5):
            return entry[1]
    log.info("no cached batch size for w=%d k=%d ell=%s; computing", w, k, ell)
    return compute_batch_size(w, k, ell=ell)


def generate_table(widths=SUPPORTED_WIDTHS, ks=range(1, MAX_K + 1)):
    """Yield table lines, computing every entry."""
    for w in widths:
        for k in ks:
            yield format_table_line(w, k, default_threshold(k), compute_batch_size(w, k))


if __name__ == "__main__":
    import sys

    logging.basicConfig(level=logging.INFO)
    print("# w k threshold batch_size")
    for line in generate_table():
        print(line, flush=True)
        print(line, file=sys.stderr, flush=True)
