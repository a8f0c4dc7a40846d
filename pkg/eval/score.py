import json
import argparse
from collections import defaultdict

import numpy as np


def load_jsonl(path: str) -> list[dict]:
    data = []
    with open(path) as f:
        for line in f:
            if line.strip():
                data.append(json.loads(line))
    return data


def calculate_bench_metrics(results: list[dict]) -> dict:
    """
    Median and interquartile range per configuration and phase, plus the
    speedup of each co-contextual phase over the contextual baseline.

    Examples:
        >>> calculate_bench_metrics([
        ...     {"config": "c", "phase": "contextual", "ns": 4, "nodes_recomputed": 3},
        ...     {"config": "c", "phase": "co_incremental", "ns": 2, "nodes_recomputed": 1},
        ... ])["c"]["co_incremental"]["speedup"]
        2.0
    """
    samples: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    recomputed: dict[tuple[str, str], int] = {}
    for r in results:
        samples[r["config"]][r["phase"]].append(r["ns"])
        recomputed[(r["config"], r["phase"])] = r.get("nodes_recomputed", 0)

    metrics = {}
    for config, phases in samples.items():
        base = float(np.median(phases["contextual"])) if phases.get("contextual") else None
        metrics[config] = {}
        for phase, ns in phases.items():
            q1, median, q3 = np.percentile(ns, [25, 50, 75])
            metrics[config][phase] = {
                "median_ms": float(median) / 1e6,
                "iqr_ms": float(q3 - q1) / 1e6,
                "runs": len(ns),
                "nodes_recomputed": recomputed[(config, phase)],
                "speedup": base / float(median) if base is not None and median > 0 else None,
            }
    return metrics


def calculate_diff_metrics(results: list[dict]) -> dict:
    total = len(results)
    agree = sum(1 for r in results if r["agree"])
    with_expected = [r for r in results if r.get("expected") is not None and r["agree"]]
    correct = sum(1 for r in with_expected if r["contextual"] == r["expected"])
    return {
        "agreement": agree / total if total else 1.0,
        "disagreements": total - agree,
        "expected_verdicts": correct / len(with_expected) if with_expected else 1.0,
        "total_programs": total,
    }


def calculate_metrics(results: list[dict]) -> dict:
    """Benchmark records carry a phase; differential records carry an agree flag."""
    if results and "phase" in results[0]:
        return {"kind": "bench", "configs": calculate_bench_metrics(results)}
    return {"kind": "diff", **calculate_diff_metrics(results)}


def main():
    parser = argparse.ArgumentParser(description="Summarize benchmark or differential-check records")
    parser.add_argument("results_file", type=str, help="Path to the results JSONL file")
    parser.add_argument("metrics_file", type=str, help="Path to the output metrics JSON file")
    args = parser.parse_args()

    results = load_jsonl(args.results_file)
    metrics = calculate_metrics(results)

    # Write metrics to file
    with open(args.metrics_file, 'w') as f:
        json.dump(metrics, f, indent=2)

    print(f"Metrics written to {args.metrics_file}")
    if metrics["kind"] == "bench":
        print("\nBenchmark Metrics:")
        for config, phases in metrics["configs"].items():
            print(f"  {config}")
            for phase, m in phases.items():
                speedup = f" ({m['speedup']:.2f}x)" if m["speedup"] is not None else ""
                print(f"    {phase}: {m['median_ms']:.2f} ms ± {m['iqr_ms']:.2f}{speedup}")
    else:
        print("\nDifferential Metrics:")
        print(f"  Agreement: {metrics['agreement']:.2%}")
        print(f"  Disagreements: {metrics['disagreements']}")
        print(f"  Expected verdicts: {metrics['expected_verdicts']:.2%}")
        print(f"  Total programs: {metrics['total_programs']}")


if __name__ == "__main__":
    main()
