"""Streaming loop, checkpoints and reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numba
import numpy as np

from .analysis import CategoryScheme, TestReport, analyze, default_categories
from .batchsize import certified_batch_size
from .counters import LargeAccumulator, OverflowDetected, PackedCounterArray, flush_batch
from .generators import WordSource
from .weightclass import MAX_K, WordParams, classify_weight, next_signature, popcount64

log = logging.getLogger(__name__)

CHUNK_WORDS = 1 << 20
OVERFLOW_P = 1e-100

PASS = "PASS-SO-FAR"
FAIL = "FAIL"
END = "END-OF-STREAM"
OVERFLOW = "OVERFLOW"


class ConfigError(ValueError):
    pass


def parse_count(text: str) -> int:
    """Parse ``1000000``, ``1e9`` or ``2.5e8`` as an exact integer."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer() or value < 0:
            raise ConfigError(f"not a byte count: {text!r}") from None
        return int(value)


@dataclass(frozen=True)
class CheckpointSchedule:
    """Where to analyze, in bytes.

    ``kind`` is ``geometric`` (``start``, then each previous value times
    ``ratio``), ``every`` (multiples of ``start``) or ``list`` (``points``
    only).
    """

    kind: str = "geometric"
    start: int = 10**8
    ratio: float = 2.0
    points: tuple[int, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "CheckpointSchedule":
        """``geometric[:START[:RATIO]]``, ``every:N`` or ``N1,N2,...``."""
        head, _, rest = text.partition(":")
        try:
            if head == "geometric":
                args = rest.split(":") if rest else []
                if len(args) > 2:
                    raise ConfigError(f"bad checkpoint schedule {text!r}")
                start = parse_count(args[0]) if args else cls.start
                ratio = float(args[1]) if len(args) > 1 else cls.ratio
                if ratio <= 1 or start <= 0:
                    raise ConfigError("geometric checkpoints need start > 0 and ratio > 1")
                return cls("geometric", start, ratio)
            if head == "every":
                step = parse_count(rest)
                if step <= 0:
                    raise ConfigError("checkpoint interval must be positive")
                return cls("every", step)
            points = tuple(sorted(parse_count(x) for x in text.split(",") if x.strip()))
            return cls("list", points=points)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad checkpoint schedule {text!r}") from exc

    def iter_bytes(self) -> Iterator[int]:
        if self.kind == "list":
            yield from self.points
            return
        x = self.start
        n = 1
        while True:
            yield x
            if self.kind == "every":
                n += 1
                x = self.start * n
            else:
                x = max(x + 1, math.ceil(x * self.ratio))


@dataclass
class TestConfig:
    source: WordSource
    w: int = 64
    k: int = 8
    ell: int | None = None
    C: int | None = None
    batch_size: int | None = None
    unsafe_batch: bool = False
    max_bytes: int | None = None
    p_threshold: float = 1e-20
    transitional: bool = False
    checkpoints: CheckpointSchedule = field(default_factory=CheckpointSchedule)
    state_bits: int | None = None

    __test__ = False

    def resolved(self) -> "TestConfig":
        """Fill defaults and validate; raises :class:`ConfigError`."""
        if self.source.w != self.w:
            raise ConfigError(f"source produces {self.source.w}-bit words, test expects w={self.w}")
        if not 1 <= self.k <= MAX_K:
            raise ConfigError(f"k must be in [1, {MAX_K}]")
        try:
            params = WordParams.for_width(self.w, self.ell)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        C = default_categories(self.k) if self.C is None else self.C
        if not 1 <= C <= self.k:
            raise ConfigError(f"C must be in [1, k={self.k}]")
        certified = certified_batch_size(self.w, self.k, params.ell)
        batch = certified if self.batch_size is None else self.batch_size
        if batch <= 0:
            raise ConfigError("batch size must be positive")
        if batch > certified and not self.unsafe_batch:
            raise ConfigError(
                f"batch size {batch} exceeds the certified {certified} for w={self.w} k={self.k}; "
                "pass the unsafe-batch acknowledgment to use it anyway"
            )
        if not 0 < self.p_threshold < 1:
            raise ConfigError("p threshold must be in (0, 1)")
        return replace(self, ell=params.ell, C=C, batch_size=batch)


@numba.njit(cache=True)
def _consume(words, start, end, cells, sig, fill, k, top, low, high, unit, budget):
    """Feed ``words[start:end]``, recording at most ``budget`` words.

    Returns ``(next_index, signature, window_fill, records)``.
    """
    i = start
    while i < end and fill < k:
        t = classify_weight(popcount64(words[i]), low, high)
        sig = next_signature(sig, t, top)
        fill += 1
        i += 1
    stop = min(end, i + budget)
    n = stop - i
    while i < stop:
        wt = popcount64(words[i])
        cells[sig] += numba.uint32(unit + wt)
        sig = next_signature(sig, classify_weight(wt, low, high), top)
        i += 1
    return i, sig, fill, n


class _Stream:
    """Counters and signature of one run."""

    def __init__(self, cfg: TestConfig):
        params = WordParams(cfg.w, cfg.ell)
        self.cfg = cfg
        self.low, self.high = params.low, params.high
        self.top = 3 ** (cfg.k - 1)
        self.packed = PackedCounterArray(cfg.k, cfg.w)
        self.acc = LargeAccumulator(cfg.k)
        self.unit = 1 << self.packed.sum_bits
        self.sig = 0
        self.fill = 0
        self.words = 0
        self.in_batch = 0

    def feed(self, chunk: np.ndarray, limit: int) -> int:
        """Consume words of ``chunk`` from the start, stopping at a full batch or after ``limit`` words."""
        budget = self.cfg.batch_size - self.in_batch
        end = min(chunk.shape[0], limit)
        i, self.sig, self.fill, n = _consume(
            chunk, 0, end, self.packed.cells, self.sig, self.fill, self.cfg.k,
            self.top, self.low, self.high, self.unit, budget,
        )
        self.in_batch += n
        self.words += i
        return i

    def flush(self) -> None:
        try:
            flush_batch(self.packed, self.acc, self.in_batch)
        except OverflowDetected as exc:
            exc.bytes_processed = self.bytes
            raise
        self.in_batch = 0

    @property
    def bytes(self) -> int:
        return self.words * (self.cfg.w // 8)


def _report(stream: _Stream, scheme: CategoryScheme) -> TestReport:
    acc = stream.acc
    return analyze(acc.counts, acc.sums, stream.cfg.w, scheme, stream.bytes, stream.cfg.transitional)


def accumulate(config: TestConfig) -> LargeAccumulator:
    """Feed the source (up to ``max_bytes``) through the packed counters, flushing
    at every full batch, and return the 64-bit totals. No analysis is done."""
    cfg = config.resolved()
    stream = _Stream(cfg)
    max_words = math.inf if cfg.max_bytes is None else cfg.max_bytes // (cfg.w // 8)
    while stream.words < max_words:
        chunk = cfg.source.read(int(min(CHUNK_WORDS, max_words - stream.words)))
        if not chunk.size:
            break
        while chunk.size:
            used = stream.feed(chunk, chunk.shape[0])
            chunk = chunk[used:]
            if stream.in_batch == cfg.batch_size:
                stream.flush()
    stream.flush()
    return stream.acc


def run_test(config: TestConfig) -> Iterator[TestReport]:
    """Stream the source and yield a report at every checkpoint.

    The last report carries the verdict: ``FAIL`` when the p-value drops
    below the threshold, ``OVERFLOW`` when a packed counter wrapped,
    ``PASS-SO-FAR`` when ``max_bytes`` was reached and ``END-OF-STREAM``
    when the source ran dry.
    """
    cfg = config.resolved()
    scheme = CategoryScheme(cfg.k, cfg.C)
    stream = _Stream(cfg)
    unit_bytes = cfg.w // 8
    max_words = None if cfg.max_bytes is None else cfg.max_bytes // unit_bytes
    marks = (-(-b // unit_bytes) for b in cfg.checkpoints.iter_bytes())
    next_mark = next(marks, None)
    last = None

    def advance_mark():
        nonlocal next_mark
        while next_mark is not None and next_mark <= stream.words:
            next_mark = next(marks, None)

    advance_mark()
    chunk = np.empty(0, dtype=np.uint64)
    exhausted = False
    while True:
        # where the next stop lies, in words
        goal = math.inf if next_mark is None else next_mark
        if max_words is not None:
            goal = min(goal, max_words)
        if goal <= stream.words:
            break
        if not chunk.size:
            want = CHUNK_WORDS if goal == math.inf else int(min(CHUNK_WORDS, goal - stream.words))
            chunk = cfg.source.read(want)
            if not chunk.size:
                exhausted = True
                break
        limit = goal - stream.words
        used = stream.feed(chunk, int(min(limit, chunk.shape[0])))
        chunk = chunk[used:]
        at_mark = stream.words == goal
        if stream.in_batch == cfg.batch_size or at_mark:
            try:
                stream.flush()
            except OverflowDetected as exc:
                yield _overflow_report(exc, stream, cfg)
                return
        if next_mark is not None and stream.words >= next_mark:
            advance_mark()
            last = _report(stream, scheme)
            if last.final_p < cfg.p_threshold:
                last.verdict = FAIL
            elif max_words is not None and stream.words >= max_words:
                last.verdict = PASS
            yield last
            if last.verdict:
                return

    try:
        stream.flush()
    except OverflowDetected as exc:
        yield _overflow_report(exc, stream, cfg)
        return
    if last is not None and last.bytes_processed == stream.bytes:
        # nothing new since the last checkpoint; repeat it with the verdict
        final = replace(last)
    else:
        final = _report(stream, scheme)
    if final.final_p < cfg.p_threshold:
        final.verdict = FAIL
    else:
        final.verdict = END if exhausted else PASS
    yield final


def _overflow_report(exc: OverflowDetected, stream: _Stream, cfg: TestConfig) -> TestReport:
    log.warning("%s", exc)
    return TestReport(
        bytes_processed=stream.bytes,
        final_p=OVERFLOW_P,
        worst_signature="-" * cfg.k,
        worst_category=0,
        worst_coordinate_p=OVERFLOW_P,
        preview=False,
        transitional=cfg.transitional,
        overflow=True,
        verdict=OVERFLOW,
    )


def render_report(report: TestReport) -> str:
    sig = report.worst_signature + (" (transitional)" if report.transitional else "")
    p = f"p<={report.final_p:.3e}" if report.overflow else f"p={report.final_p:.3e}"
    parts = [f"bytes={report.bytes_processed}", p, f"signature={sig}", f"category={report.worst_category}"]
    if report.preview:
        parts.append("[PREVIEW: some signatures have few samples; p-values near 1 may be artifacts]")
    if report.verdict:
        parts.append(report.verdict)
    return " ".join(parts)
