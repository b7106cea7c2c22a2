import io
import re
import time
import types

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwd import cli
from hwd.analysis import TestReport
from hwd.generators import ArraySource, Generator, GeneratorSource, GeneratorSpec
from hwd.runner import (
    END, FAIL, OVERFLOW, PASS, CheckpointSchedule, ConfigError, TestConfig, parse_count,
    render_report, run_test,
)

LINE = re.compile(
    r"^bytes=(\d+) p(=|<=)\d\.\d{3}e[+-]\d{2,3} signature=([012-]+)( \(transitional\))? category=\d+"
)


def _control(seed=5, w=64, split="whole"):
    return GeneratorSource(Generator(GeneratorSpec("control", seed)), w, split)


def _run(**kw):
    kw.setdefault("source", _control())
    return list(run_test(TestConfig(**kw)))


def _sticky_words(n, seed=0):
    # every word repeats its predecessor half of the time: strong weight dependency
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 2**64 - 1, size=n, dtype=np.uint64, endpoint=True)
    repeat = rng.random(n) < 0.5
    for i in range(1, n):
        if repeat[i]:
            words[i] = words[i - 1]
    return words


class TestParsing:
    @pytest.mark.parametrize("text, value", [("1000", 1000), ("1e9", 10**9), ("2.5e8", 250_000_000)])
    def test_parse_count(self, text, value):
        assert parse_count(text) == value

    @pytest.mark.parametrize("text", ["1.5", "-3e2", "abc"])
    def test_parse_count_rejects(self, text):
        with pytest.raises(ValueError):
            parse_count(text)

    def test_geometric(self):
        sched = CheckpointSchedule.parse("geometric:1e6:3")
        it = sched.iter_bytes()
        assert [next(it) for _ in range(4)] == [10**6, 3 * 10**6, 9 * 10**6, 27 * 10**6]

    def test_default_geometric(self):
        it = CheckpointSchedule.parse("geometric").iter_bytes()
        assert [next(it) for _ in range(3)] == [10**8, 2 * 10**8, 4 * 10**8]

    def test_every_and_list(self):
        it = CheckpointSchedule.parse("every:5e5").iter_bytes()
        assert [next(it) for _ in range(3)] == [500_000, 10**6, 1_500_000]
        assert list(CheckpointSchedule.parse("300,100,2e2").iter_bytes()) == [100, 200, 300]

    @pytest.mark.parametrize("text", ["every:0", "geometric:1e6:1", "every:x", "geometric:1:2:3:x"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            CheckpointSchedule.parse(text)


class TestConfigValidation:
    def test_defaults(self):
        cfg = TestConfig(_control(), k=8).resolved()
        assert (cfg.ell, cfg.C, cfg.batch_size) == (2, 5, 2_000_000)

    def test_oversized_batch_needs_flag(self):
        with pytest.raises(ConfigError):
            TestConfig(_control(), k=8, batch_size=10**8).resolved()
        assert TestConfig(_control(), k=8, batch_size=10**8, unsafe_batch=True).resolved().batch_size == 10**8

    def test_smaller_batch_allowed(self):
        assert TestConfig(_control(), k=8, batch_size=1000).resolved().batch_size == 1000

    @pytest.mark.parametrize("kw", [dict(k=0), dict(k=20), dict(C=9), dict(C=0), dict(w=32),
                                    dict(p_threshold=0.0), dict(ell=40), dict(batch_size=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            TestConfig(_control(), **{"k": 8, **kw}).resolved()


class TestRun:
    def test_deterministic(self):
        kw = dict(k=4, max_bytes=4 * 10**7, checkpoints=CheckpointSchedule.parse("every:1e7"))
        a = _run(source=_control(11), **kw)
        b = _run(source=_control(11), **kw)
        assert a == b
        assert len(a) == 4

    def test_prefix_stability(self):
        sched = CheckpointSchedule.parse("every:5e6")
        short = _run(source=_control(3), k=4, max_bytes=2 * 10**7, checkpoints=sched)
        long = _run(source=_control(3), k=4, max_bytes=4 * 10**7, checkpoints=sched)
        for a, b in zip(short[:-1], long):
            assert a == b
        last = short[-1]
        assert last.verdict == PASS
        assert TestReport(**{**last.__dict__, "verdict": None}) == long[len(short) - 1]

    def test_bytes_increase_and_checkpoints_exact(self):
        reps = _run(k=3, max_bytes=10**6, checkpoints=CheckpointSchedule.parse("123456,500000,777777"))
        got = [r.bytes_processed for r in reps]
        # checkpoints round up to whole words and force a flush
        assert got == [123456, 500000, 777784, 10**6]
        assert got == sorted(got)

    def test_empty_statistics(self):
        reps = _run(k=8, max_bytes=63)
        assert len(reps) == 1
        rep = reps[0]
        assert rep.preview and rep.final_p == 1.0 and rep.verdict == PASS

    def test_end_of_stream(self):
        words = _control().read(1000)
        reps = _run(source=ArraySource(words), k=2)
        assert reps[-1].verdict == END
        assert reps[-1].bytes_processed == 8000

    def test_end_of_stream_on_checkpoint(self):
        words = _control().read(10**4)
        reps = _run(source=ArraySource(words), k=2, checkpoints=CheckpointSchedule.parse("80000"))
        assert [r.bytes_processed for r in reps] == [80000, 80000]
        assert reps[0].verdict is None and reps[1].verdict == END

    def test_failure_detected(self):
        # repeated words crowd a few cells, so the certified batch would overflow
        reps = _run(source=ArraySource(_sticky_words(10**6)), k=2, batch_size=4096,
                    checkpoints=CheckpointSchedule.parse("every:1e6"))
        assert reps[-1].verdict == FAIL
        assert reps[-1].final_p < 1e-20
        assert "FAIL" in render_report(reps[-1])

    def test_overflow(self):
        reps = _run(source=ArraySource(np.zeros(200_000, dtype=np.uint64)), k=8,
                    batch_size=100_000, unsafe_batch=True)
        assert len(reps) == 1
        rep = reps[0]
        assert rep.overflow and rep.verdict == OVERFLOW
        assert rep.final_p <= 1e-100
        # 8 window words plus one batch of 100000 records
        assert render_report(rep).startswith("bytes=800064 p<=1.000e-100")

    def test_transitional_flag_in_report(self):
        from hwd.generators import TransitionalSource
        reps = _run(source=TransitionalSource(_control()), k=2, max_bytes=10**6, transitional=True)
        assert "(transitional)" in render_report(reps[-1])

    @settings(max_examples=15)
    @given(st.integers(1, 5), st.integers(100, 5000), st.integers(0, 2**32 - 1))
    def test_batch_size_does_not_change_result(self, k, batch, seed):
        words = _control(seed).read(20_000)
        a = _run(source=ArraySource(words), k=k)
        b = _run(source=ArraySource(words), k=k, batch_size=batch)
        assert a[-1].final_p == b[-1].final_p
        assert a[-1].worst_signature == b[-1].worst_signature


class TestRender:
    def test_format(self):
        rep = TestReport(123, 1.23456e-25, "00000021", 2, 1e-30, False, verdict=FAIL)
        line = render_report(rep)
        m = LINE.match(line)
        assert m and m.group(3) == "00000021"
        assert "p=1.235e-25" in line and line.endswith("FAIL")

    def test_preview_marker(self):
        rep = TestReport(0, 1.0, "000", 1, 1.0, True)
        assert "PREVIEW" in render_report(rep)

    def test_transitional_suffix(self):
        rep = TestReport(10, 0.5, "12", 1, 0.3, False, transitional=True)
        assert "signature=12 (transitional)" in render_report(rep)


def test_throughput_floor():
    cfg = dict(k=8, checkpoints=CheckpointSchedule.parse("every:1e12"))
    _run(max_bytes=10**7, **cfg)  # compile
    start = time.perf_counter()
    _run(max_bytes=4 * 10**8, **cfg)
    rate = 4e8 / (time.perf_counter() - start)
    assert rate >= 100e6


# --- command line ----------------------------------------------------------------

class TestCli:
    def test_control_run(self, capsys):
        code = cli.main(["--gen", "control", "--k", "4", "--max-bytes", "2e7", "--checkpoints", "every:1e7"])
        out = capsys.readouterr().out.strip().splitlines()
        assert code == cli.EXIT_OK
        assert len(out) == 2
        assert all(LINE.match(line) for line in out)
        assert out[-1].endswith(PASS)

    def test_failure_exit_code(self, tmp_path, capsys):
        path = tmp_path / "sticky.bin"
        path.write_bytes(_sticky_words(10**6).astype("<u8").tobytes())
        argv = ["--file", str(path), "--k", "2", "--batch", "4096", "--checkpoints", "every:1e6"]
        assert cli.main(argv) == cli.EXIT_FAIL
        assert capsys.readouterr().out.strip().endswith(FAIL)

    def test_overflow_exit_code(self, tmp_path, capsys):
        path = tmp_path / "zeros.bin"
        path.write_bytes(bytes(8 * 200_000))
        code = cli.main(["--file", str(path), "--batch", "100000", "--unsafe-batch"])
        assert code == cli.EXIT_OVERFLOW
        assert OVERFLOW in capsys.readouterr().out

    def test_stdin(self, monkeypatch, capsys):
        data = _control().read(10**5).astype("<u8").tobytes()
        monkeypatch.setattr("sys.stdin", types.SimpleNamespace(buffer=io.BytesIO(data)))
        assert cli.main(["--stdin", "--k", "2"]) == cli.EXIT_OK
        assert capsys.readouterr().out.strip().endswith(END)

    def test_split_w32(self, capsys):
        assert cli.main(["--gen", "control", "--w", "32", "--k", "3", "--max-bytes", "4e6"]) == cli.EXIT_OK
        assert capsys.readouterr().out.strip().startswith("bytes=4000000")

    @pytest.mark.parametrize("argv", [
        ["--gen", "control", "--batch", "1e9"],
        ["--gen", "control", "--k", "25"],
        ["--gen", "control", "--C", "12"],
        ["--gen", "control", "--w", "32", "--split", "whole"],
        ["--gen", "control", "--checkpoints", "every:0"],
        ["--file", "/nonexistent/stream.bin"],
        ["--file", "/dev/null", "--split", "halves"],
        [],
    ])
    def test_config_errors(self, argv, capsys):
        assert cli.main(argv) == cli.EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_state_hint(self, capsys):
        cli.main(["--gen", "xorshift1024", "--k", "8", "--max-bytes", "1e6"])
        assert "hint" in capsys.readouterr().err

    def test_batch_table(self, capsys):
        assert cli.main(["--batch-table"]) == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("#")
        rows = [line.split() for line in lines[1:]]
        assert len(rows) == 57
        assert all(len(r) == 4 and int(r[3]) > 0 for r in rows)
        assert ["64", "1", "3.333333e-101", "14748"] in rows
