import json

import pytest

from fj.config import CheckerOptions
from eval.bench import ConfigReport, PhaseStats, format_table, measure, run_benchmark
from eval.synth import SynthConfig


def _report(contextual, initial, incremental):
    return ConfigReport(
        SynthConfig(),
        {"contextual": PhaseStats([contextual]), "co_initial": PhaseStats([initial]),
         "co_incremental": PhaseStats([incremental])},
        nodes=7,
        nodes_recomputed=3,
    )


def test_phase_stats():
    stats = PhaseStats([4, 1, 3, 2, 100])
    assert stats.median_ns == 3.0
    assert stats.iqr_ns == 2.0


def test_break_even():
    report = _report(10, 100, 2)
    assert report.break_even == 13
    assert report.speedup("co_incremental") == 5.0
    assert _report(10, 100, 10).break_even is None


def test_measure_runs_warmup_then_samples():
    calls = []
    samples = measure(lambda: calls.append(1), repetitions=5, warmup=2)
    assert len(samples) == 5
    assert 7 <= len(calls) <= 11
    assert all(s >= 0 for s in samples)
    calls.clear()
    measure(lambda: calls.append(1), repetitions=3, warmup=0)
    assert len(calls) == 3


def test_zero_repetitions(tmp_path, capsys):
    path = tmp_path / "empty.results.jsonl"
    report = run_benchmark([SynthConfig()], repetitions=0, report_path=str(path))
    assert report.configs == []
    assert report.records == []
    assert path.read_text() == ""


def test_small_benchmark(tmp_path, capsys):
    path = tmp_path / "bench" / "small.results.jsonl"
    config = SynthConfig("AccumSuper", "Unique", 2, 2)
    report = run_benchmark([config], repetitions=2, warmup=1, options=CheckerOptions(), report_path=str(path))
    (result,) = report.configs
    assert result.nodes > result.nodes_recomputed > 0
    assert len(report.records) == 6
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert {r["phase"] for r in records} == {"contextual", "co_initial", "co_incremental"}
    assert all(r["config"] == config.name for r in records)
    table = format_table(report)
    assert config.name in table
    assert "break-even" in table.splitlines()[0]
