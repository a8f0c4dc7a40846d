"""
Command-line entry point.

    cocofj check --mode cocontextual prog.fj
    cocofj session prog.fj edits.txt --cache .cocofj-cache
    cocofj synth --scheme AccumSuper --naming Unique --k 8 --height 4 --out prog.fj
    cocofj bench --k 8 --height 4 --report results/bench.jsonl
    cocofj diff data/corpus
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from fj.config import CheckerOptions
from fj.contextual import check_program
from fj.errors import FJError, ParseError, Verdict
from fj.syntax import parse_decls, parse_program
from fj.coco.checker import co_check_program
from fj.coco.incremental import Session, parse_edit_script

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_USAGE = 2


def _report_errors(file: str, verdict: Verdict):
    for e in verdict.errors:
        where = f"{file}:{e}" if e.loc else f"{file}: {e}"
        print(where, file=sys.stderr)


def _options(args) -> CheckerOptions:
    return CheckerOptions.from_env(in_depth_merge=not args.no_in_depth, normalize=not args.no_normalize)


def cmd_check(args) -> int:
    text = Path(args.file).read_text()
    if args.mode == "contextual":
        verdict = check_program(parse_decls(text))
    else:
        verdict = co_check_program(parse_program(text, args.arity, args.layout), _options(args))
    if verdict.ok:
        print(f"✓ {args.file}: accepted")
        return EXIT_OK
    _report_errors(args.file, verdict)
    print(f"✗ {args.file}: rejected ({len(verdict.errors)} error{'s' if len(verdict.errors) != 1 else ''})")
    return EXIT_REJECT


def cmd_session(args) -> int:
    script = Path(args.script)
    edits = parse_edit_script(script.read_text(), script.parent)
    session = Session(parse_program(Path(args.file).read_text()), _options(args), args.cache)
    verdict = session.check()
    print(f"initial: {'accept' if verdict.ok else 'reject'} (recomputed {session.recomputed})")
    for edit in edits:
        verdict = session.apply(edit)
        print(f"{edit}: {'accept' if verdict.ok else 'reject'} (recomputed {session.recomputed})")
        _report_errors(str(edit.file or args.file), verdict)
    session.save()
    return EXIT_OK if verdict.ok else EXIT_REJECT


def cmd_synth(args) -> int:
    from eval.synth import SynthConfig, all_configs, synthesize, write_corpus
    from fj.syntax import render

    if args.corpus:
        write_corpus(args.out or "results/corpus/synth", all_configs(), args.mutants, args.seed)
        return EXIT_OK
    config = SynthConfig(args.scheme, args.naming, args.k, args.height)
    text = render(synthesize(config)) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"✓ Wrote {config.class_count} classes to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from eval.bench import format_table, run_benchmark
    from eval.synth import SynthConfig

    configs = [SynthConfig(s, n, k, h) for s in args.scheme for n in args.naming for k in args.k for h in args.height]
    report = run_benchmark(configs, args.repetitions, args.warmup, _options(args), args.report)
    if report.configs:
        print(format_table(report))
    return EXIT_OK


def cmd_diff(args) -> int:
    from eval.diff import diff_check, load_corpus, print_report

    report = diff_check(load_corpus(args.corpus_dir), _options(args), args.workers)
    if args.results:
        Path(args.results).parent.mkdir(parents=True, exist_ok=True)
        with open(args.results, "w") as f:
            for r in report.records:
                f.write(json.dumps(r) + "\n")
    print_report(report)
    return EXIT_OK if not report.disagreements else EXIT_REJECT


def build_parser() -> argparse.ArgumentParser:
    from eval.synth import NAMINGS, SCHEMES

    parser = argparse.ArgumentParser(prog="cocofj", description="Contextual and co-contextual Featherweight Java checking")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    def checker_flags(p):
        p.add_argument("--no-in-depth", action="store_true", help="Disable in-depth requirement merging")
        p.add_argument("--no-normalize", action="store_true", help="Keep requirements with unsatisfiable conditions")

    p = sub.add_parser("check", help="Type check a program")
    p.add_argument("file")
    p.add_argument("--mode", choices=["contextual", "cocontextual"], default="cocontextual")
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--layout", choices=["even", "pairwise"], default="even")
    checker_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("session", help="Replay an edit script with incremental rechecking")
    p.add_argument("file")
    p.add_argument("script")
    p.add_argument("--cache", type=str, default=None, help="Cache file kept between invocations")
    checker_flags(p)
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("synth", help="Synthesize a benchmark program")
    p.add_argument("--scheme", choices=SCHEMES, default="AccumSuper")
    p.add_argument("--naming", choices=NAMINGS, default="Unique")
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--corpus", action="store_true", help="Write all configurations plus mutants to --out")
    p.add_argument("--mutants", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="Benchmark contextual against co-contextual checking")
    p.add_argument("--scheme", nargs="+", choices=SCHEMES, default=["AccumSuper"])
    p.add_argument("--naming", nargs="+", choices=NAMINGS, default=["Unique"])
    p.add_argument("--k", nargs="+", type=int, default=[8])
    p.add_argument("--height", nargs="+", type=int, default=[4])
    p.add_argument("--repetitions", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--report", type=str, default=None, help="Path to the output JSONL records")
    checker_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diff", help="Compare both checkers on a corpus")
    p.add_argument("corpus_dir")
    p.add_argument("--results", type=str, default=None)
    p.add_argument("--workers", type=int, default=None)
    checker_flags(p)
    p.set_defaults(func=cmd_diff)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    file = getattr(args, "file", None) or ""
    try:
        return args.func(args)
    except ParseError as e:
        print(f"{file}:{e}", file=sys.stderr)
    except (FJError, OSError, ValueError) as e:
        print(f"cocofj: {e}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
