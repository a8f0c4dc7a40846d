import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from fj.config import CheckerOptions
from fj.contextual import check_program
from fj.syntax import count_nodes
from fj.coco.incremental import initial_check, invalidate_classes, recheck
from eval.synth import NAT_CLASSES, SynthConfig, synthesize

logger = logging.getLogger(__name__)

PHASES = ("contextual", "co_initial", "co_incremental")


@dataclass
class PhaseStats:
    samples: list[int]

    @property
    def median_ns(self) -> float:
        return float(np.median(self.samples))

    @property
    def iqr_ns(self) -> float:
        q1, q3 = np.percentile(self.samples, [25, 75])
        return float(q3 - q1)


@dataclass
class ConfigReport:
    config: SynthConfig
    phases: dict[str, PhaseStats]
    nodes: int
    nodes_recomputed: int

    def speedup(self, phase: str) -> float:
        """Contextual baseline time over the phase's time."""
        return self.phases["contextual"].median_ns / self.phases[phase].median_ns

    @property
    def break_even(self) -> Optional[int]:
        """Smallest number of edits n with initial + n * incremental < n * contextual."""
        base = self.phases["contextual"].median_ns
        init = self.phases["co_initial"].median_ns
        inc = self.phases["co_incremental"].median_ns
        if base <= inc:
            return None
        return math.floor(init / (base - inc)) + 1


@dataclass
class BenchReport:
    configs: list[ConfigReport] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)


def measure(fn: Callable[[], object], repetitions: int, warmup: int = 3) -> list[int]:
    """
    Time fn with time.perf_counter_ns after warming up. Warm-up continues (up to
    three times the requested count) while the last warm-up samples still vary
    by more than 10%.
    """
    history: list[int] = []
    for i in range(max(warmup, 0) * 3):
        start = time.perf_counter_ns()
        fn()
        history.append(time.perf_counter_ns() - start)
        if i + 1 >= warmup and _stable(history[-3:]):
            break
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return samples


def _stable(window: list[int]) -> bool:
    if len(window) < 3:
        return True
    mean = float(np.mean(window))
    return mean == 0 or float(np.std(window)) / mean <= 0.1


def bench_config(config: SynthConfig, repetitions: int, warmup: int,
                 options: Optional[CheckerOptions] = None) -> ConfigReport:
    options = options or CheckerOptions.from_env()
    program = synthesize(config)
    contextual = measure(lambda: check_program(program), repetitions, warmup)
    initial = measure(lambda: initial_check(program, options), repetitions, warmup)

    verdict, memo = initial_check(program, options)
    if not verdict.ok:
        logger.warning(f"{config.name} rejected by the co-contextual checker: {verdict.errors[:1]}")
    recomputed: list[int] = []

    def incremental():
        invalidate_classes(memo, NAT_CLASSES)
        recheck(memo, program)
        recomputed.append(memo.stats.recomputed)

    inc = measure(incremental, repetitions, warmup)
    return ConfigReport(
        config,
        {"contextual": PhaseStats(contextual), "co_initial": PhaseStats(initial), "co_incremental": PhaseStats(inc)},
        count_nodes(program),
        recomputed[-1] if recomputed else 0,
    )


def run_benchmark(configs: list[SynthConfig], repetitions: int = 30, warmup: int = 3,
                  options: Optional[CheckerOptions] = None, report_path: Optional[str] = None) -> BenchReport:
    """
    Measure the contextual checker, the initial co-contextual check and the
    incremental recheck after invalidating the Nat classes, per configuration.

    Args:
        configs: Programs to synthesize and measure
        repetitions: Measured runs per phase; 0 gives an empty report
        warmup: Minimum warm-up runs per phase
        options: Co-contextual checker switches
        report_path: Where to write one JSONL record per measured run

    Returns:
        Per-configuration statistics and the raw records
    """
    report = BenchReport()
    if repetitions > 0:
        for config in tqdm(configs, desc="Benchmarking"):
            logger.info(f"Benchmarking {config.name} ({config.class_count} classes)")
            result = bench_config(config, repetitions, warmup, options)
            report.configs.append(result)
            for phase, stats in result.phases.items():
                for ns in stats.samples:
                    report.records.append({
                        "config": config.name,
                        "phase": phase,
                        "ns": ns,
                        "nodes_recomputed": result.nodes_recomputed if phase == "co_incremental" else result.nodes,
                    })
    if report_path:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        with open(report_path, "w") as f:
            for r in report.records:
                f.write(json.dumps(r) + "\n")
        print(f"✓ Wrote {len(report.records)} records to {report_path}")
    return report


def format_ms(ns: float) -> str:
    return f"{ns / 1e6:.2f} ms"


def format_table(report: BenchReport) -> str:
    header = f"{'config':<34} {'contextual':>12} {'co-init':>20} {'co-inc':>20} {'break-even':>10} {'recomputed':>12}"
    lines = [header, "-" * len(header)]
    for r in report.configs:
        init = f"{format_ms(r.phases['co_initial'].median_ns)} ({r.speedup('co_initial'):.2f}x)"
        inc = f"{format_ms(r.phases['co_incremental'].median_ns)} ({r.speedup('co_incremental'):.2f}x)"
        even = "-" if r.break_even is None else str(r.break_even)
        lines.append(
            f"{r.config.name:<34} {format_ms(r.phases['contextual'].median_ns):>12} {init:>20} {inc:>20} "
            f"{even:>10} {f'{r.nodes_recomputed}/{r.nodes}':>12}"
        )
    return "\n".join(lines)


def main():
    """Same as `cocofj bench`."""
    from fj.cli import main as cli_main

    sys.exit(cli_main(["bench", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
