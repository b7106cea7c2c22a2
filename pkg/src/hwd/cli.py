"""Command line interface.

Exit codes: 0 no failure, 1 statistical failure, 2 configuration error,
3 counter overflow.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .batchsize import default_threshold, format_table_line, load_table, compute_batch_size
from .counters import count_bits_for
from .generators import (FAMILIES, SPLIT_MODES, Generator, GeneratorSource, GeneratorSpec,
                         RawSource, TransitionalSource)
from .runner import (FAIL, OVERFLOW, CheckpointSchedule, ConfigError, TestConfig, parse_count,
                     render_report, run_test)
from .weightclass import MAX_K, SUPPORTED_WIDTHS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_OVERFLOW = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hwd", description="Test a generator for Hamming-weight dependencies."
    )
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--gen", choices=FAMILIES, help="built-in generator to test")
    src.add_argument("--stdin", action="store_true", help="read little-endian words from standard input")
    src.add_argument("--file", help="read little-endian words from a file")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="64-bit seed for --gen")
    ap.add_argument("--w", type=int, choices=SUPPORTED_WIDTHS, default=64, help="word width in bits")
    ap.add_argument("--k", type=int, default=8, help=f"window length, 1..{MAX_K}")
    ap.add_argument("--ell", type=int, help="half-width of the central weight band")
    ap.add_argument("--C", type=int, dest="C", help="number of categories (default k//2 + 1)")
    ap.add_argument("--batch", type=parse_count, help="batch size in words")
    ap.add_argument("--unsafe-batch", action="store_true",
                    help="accept a --batch larger than the certified size")
    ap.add_argument("--max-bytes", type=parse_count, help="stop after this many bytes")
    ap.add_argument("--p-threshold", type=float, default=1e-20, help="failure threshold")
    ap.add_argument("--transitional", action="store_true",
                    help="test the stream xored with itself shifted by one bit")
    ap.add_argument("--split", choices=SPLIT_MODES, default=None,
                    help="how 64-bit generator outputs become w-bit words")
    ap.add_argument("--checkpoints", default="geometric",
                    help="geometric[:START[:RATIO]], every:N or a comma-separated list of byte counts")
    ap.add_argument("--batch-table", action="store_true",
                    help="print certified batch sizes (w k threshold batch) and exit")
    ap.add_argument("--recompute", action="store_true",
                    help="with --batch-table, recompute every entry instead of using the bundled table")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def print_batch_table(recompute: bool, out=None) -> None:
    out = sys.stdout if out is None else out
    table = {} if recompute else load_table()
    print("# w k threshold batch_size", file=out)
    for w in SUPPORTED_WIDTHS:
        for k in range(1, MAX_K + 1):
            thr = default_threshold(k)
            entry = table.get((w, k))
            batch = entry[1] if entry else compute_batch_size(w, k, count_bits_for(w), thr)
            print(format_table_line(w, k, thr, batch), file=out, flush=True)


def make_config(args) -> TestConfig:
    split = args.split
    if args.gen:
        if split is None:
            split = "whole" if args.w == 64 else "halves"
        try:
            source = GeneratorSource(Generator(GeneratorSpec(args.gen, args.seed)), args.w, split)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        state_bits = GeneratorSpec(args.gen).state_bits
    elif args.stdin or args.file:
        if split not in (None, "whole"):
            raise ConfigError("--split applies to built-in generators only")
        stream = sys.stdin.buffer if args.stdin else _open(args.file)
        source = RawSource(stream, args.w)
        state_bits = None
    else:
        raise ConfigError("choose a source: --gen, --stdin or --file")
    if args.transitional:
        source = TransitionalSource(source)
    return TestConfig(
        source=source, w=args.w, k=args.k, ell=args.ell, C=args.C,
        batch_size=args.batch, unsafe_batch=args.unsafe_batch, max_bytes=args.max_bytes,
        p_threshold=args.p_threshold, transitional=args.transitional,
        checkpoints=CheckpointSchedule.parse(args.checkpoints), state_bits=state_bits,
    )


def _open(path):
    try:
        return open(path, "rb")
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc}") from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.batch_table:
        print_batch_table(args.recompute)
        return EXIT_OK
    try:
        cfg = make_config(args)
        if cfg.state_bits is not None and cfg.state_bits >= cfg.k * cfg.w:
            print(f"hint: {cfg.state_bits} bits of state is not below k*w = {cfg.k * cfg.w}; "
                  "the test works best when the window covers more bits than the state",
                  file=sys.stderr)
        reports = run_test(cfg)
        report = None
        for report in reports:
            print(render_report(report), flush=True)
    except ConfigError as exc:
        print(f"hwd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if report is None:
        return EXIT_OK
    if report.verdict == OVERFLOW:
        return EXIT_OVERFLOW
    if report.verdict == FAIL:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
