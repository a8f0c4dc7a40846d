import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from fj.config import CheckerOptions
from fj.contextual import check_program
from fj.errors import FJError
from fj.parallel import batch_call_chunked
from fj.syntax import ClassDecl, balance, parse_decls, render
from fj.coco.checker import co_check_program

logger = logging.getLogger(__name__)


@dataclass
class DiffCase:
    name: str
    decls: list[ClassDecl]
    expected: Optional[bool] = None


@dataclass
class Disagreement:
    name: str
    contextual_ok: Optional[bool]
    co_ok: Optional[bool]
    expected: Optional[bool]
    reproducer: str = ""
    error: str = ""


@dataclass
class DiffReport:
    total: int = 0
    agreements: int = 0
    disagreements: list[Disagreement] = field(default_factory=list)
    # both checkers agree but not with the expected verdict
    unexpected: list[str] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)

    @property
    def agreement_rate(self) -> float:
        return self.agreements / self.total if self.total else 1.0


def check_both(decls: list[ClassDecl], options: Optional[CheckerOptions] = None) -> tuple[bool, bool]:
    contextual = check_program(decls).ok
    co = co_check_program(balance(decls), options or CheckerOptions()).ok
    return contextual, co


def minimize(decls: list[ClassDecl], interesting: Callable[[list[ClassDecl]], bool]) -> list[ClassDecl]:
    """
    Greedily delete classes, then methods, while interesting(program) still
    holds. The result is 1-minimal with respect to those deletions.
    """
    current = list(decls)
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(current):
            candidate = current[:i] + current[i + 1:]
            if interesting(candidate):
                current = candidate
                changed = True
            else:
                i += 1
        for ci in range(len(current)):
            mi = 0
            while mi < len(current[ci].methods):
                methods = current[ci].methods[:mi] + current[ci].methods[mi + 1:]
                candidate = current[:ci] + [replace(current[ci], methods=methods)] + current[ci + 1:]
                if interesting(candidate):
                    current = candidate
                    changed = True
                else:
                    mi += 1
    return current


def _run_case(case: DiffCase, options: CheckerOptions) -> dict:
    try:
        contextual, co = check_both(case.decls, options)
    except Exception as e:  # a crash in either checker is a disagreement
        logger.warning(f"Checker crashed on {case.name}: {e!r}")
        return {"name": case.name, "contextual": None, "cocontextual": None, "expected": case.expected,
                "agree": False, "error": repr(e)}
    return {"name": case.name, "contextual": contextual, "cocontextual": co, "expected": case.expected,
            "agree": contextual == co}


def diff_check(cases: list[DiffCase], options: Optional[CheckerOptions] = None,
               max_workers: Optional[int] = None, minimize_disagreements: bool = True) -> DiffReport:
    """
    Run both checkers on every case and report verdict disagreements, each
    with a minimized reproducer.
    """
    options = options or CheckerOptions.from_env()
    report = DiffReport(total=len(cases))
    results = batch_call_chunked(_run_case, [(case, options) for case in cases], max_workers=max_workers,
                                 desc="Differential check")
    for case, r in zip(cases, results):
        if isinstance(r, Exception):
            r = {"name": case.name, "contextual": None, "cocontextual": None, "expected": case.expected,
                 "agree": False, "error": repr(r)}
        report.records.append(r)
        if r["agree"]:
            report.agreements += 1
            if case.expected is not None and r["contextual"] != case.expected:
                report.unexpected.append(case.name)
            continue
        logger.warning(f"Checkers disagree on {case.name}: contextual={r['contextual']} co-contextual={r['cocontextual']}")
        reproducer = case.decls
        if minimize_disagreements and "error" not in r:
            def still_disagrees(decls):
                try:
                    c, o = check_both(decls, options)
                except FJError:
                    return False
                return c != o
            reproducer = minimize(case.decls, still_disagrees)
        report.disagreements.append(Disagreement(
            case.name, r["contextual"], r["cocontextual"], case.expected,
            "\n".join(render(d) for d in reproducer), r.get("error", ""),
        ))
    return report


def load_corpus(corpus_dir) -> list[DiffCase]:
    """
    Every .fj file under corpus_dir. Expected verdicts come from manifest.jsonl
    files next to the programs, or from an `ok`/`bad` directory name.
    """
    corpus_dir = Path(corpus_dir)
    expected: dict[Path, bool] = {}
    for manifest in sorted(corpus_dir.rglob("manifest.jsonl")):
        with open(manifest) as f:
            for line in f:
                if line.strip():
                    record = json.loads(line)
                    expected[manifest.parent / record["file"]] = record["expected"] == "accept"
    cases = []
    for path in sorted(corpus_dir.rglob("*.fj")):
        exp = expected.get(path)
        if exp is None and path.parent.name in ("ok", "bad"):
            exp = path.parent.name == "ok"
        try:
            decls = parse_decls(path.read_text())
        except FJError as e:
            logger.warning(f"Skipping {path}: {e}")
            continue
        cases.append(DiffCase(str(path.relative_to(corpus_dir)), decls, exp))
    logger.info(f"Loaded {len(cases)} programs from {corpus_dir}")
    return cases


def print_report(report: DiffReport):
    print(f"Differential check over {report.total} programs")
    print(f"  Agreement: {report.agreement_rate:.1%}")
    print(f"  Disagreements: {len(report.disagreements)}")
    print(f"  Unexpected verdicts: {len(report.unexpected)}")
    for d in report.disagreements:
        print(f"✗ {d.name}: contextual={d.contextual_ok} co-contextual={d.co_ok}")
        if d.reproducer:
            print("    " + d.reproducer.replace("\n", "\n    "))


def main():
    """Same as `cocofj diff`."""
    from fj.cli import main as cli_main

    sys.exit(cli_main(["diff", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
