import sys
from pathlib import Path

import pytest

import eval.diff
import eval.synth
from fj.cli import EXIT_OK, EXIT_REJECT, EXIT_USAGE, main

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "data" / "corpus"
SESSIONS = ROOT / "data" / "sessions"


@pytest.mark.parametrize("mode", ["contextual", "cocontextual"])
def test_check_accepts(mode, capsys):
    path = str(CORPUS / "ok" / "list.fj")
    assert main(["check", "--mode", mode, path]) == EXIT_OK
    assert f"✓ {path}: accepted" in capsys.readouterr().out


@pytest.mark.parametrize("mode,rule", [("contextual", "T-Method"), ("cocontextual", "TC-")])
def test_check_rejects(mode, rule, capsys):
    path = str(CORPUS / "bad" / "wrong_return.fj")
    assert main(["check", "--mode", mode, path]) == EXIT_REJECT
    out, err = capsys.readouterr()
    assert "rejected (1 error)" in out
    assert err.startswith(path + ":")
    assert rule in err


def test_check_flags(capsys):
    path = str(CORPUS / "ok" / "casts.fj")
    assert main(["check", "--no-in-depth", "--no-normalize", "--arity", "3", "--layout", "pairwise", path]) == EXIT_OK


def test_parse_error(tmp_path, capsys):
    path = tmp_path / "broken.fj"
    path.write_text("class A extends Object {\n  A() { super() }\n}\n")
    assert main(["check", str(path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert err.startswith(f"{path}:2:")


def test_missing_file(tmp_path, capsys):
    assert main(["check", str(tmp_path / "missing.fj")]) == EXIT_USAGE
    assert capsys.readouterr().err.startswith("cocofj:")


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["check", "--mode", "nope", "x.fj"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_session(tmp_path, capsys):
    cache = tmp_path / "cache"
    code = main(["session", str(SESSIONS / "shapes.fj"), str(SESSIONS / "shapes.edits"), "--cache", str(cache)])
    assert code == EXIT_REJECT
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("initial: accept")
    assert [line.split(": ")[1].split()[0] for line in lines[1:]] == ["reject", "accept", "accept", "accept", "reject"]
    assert cache.exists()


def test_synth(tmp_path, capsys):
    out = tmp_path / "prog.fj"
    assert main(["synth", "--k", "2", "--height", "2", "--out", str(out)]) == EXIT_OK
    assert "Wrote 9 classes" in capsys.readouterr().out
    assert main(["check", str(out)]) == EXIT_OK


def test_synth_stdout(capsys):
    assert main(["synth", "--k", "1", "--height", "1", "--naming", "MirOver"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("class Nat extends Object")


def test_bench(tmp_path, capsys):
    report = tmp_path / "bench.results.jsonl"
    args = ["bench", "--k", "1", "--height", "2", "--repetitions", "1", "--warmup", "0", "--report", str(report)]
    assert main(args) == EXIT_OK
    assert len(report.read_text().splitlines()) == 3
    assert "AccumSuper-Unique-k1-h2" in capsys.readouterr().out


def test_diff(tmp_path, capsys):
    results = tmp_path / "diff" / "corpus.results.jsonl"
    assert main(["diff", str(CORPUS), "--results", str(results), "--workers", "2"]) == EXIT_OK
    assert "Agreement: 100.0%" in capsys.readouterr().out
    assert results.exists()


@pytest.mark.parametrize("module,argv,expected", [
    (eval.synth, ["--k", "1", "--height", "1"], "class Nat extends Object"),
    (eval.diff, [str(CORPUS / "ok")], "Agreement: 100.0%"),
])
def test_module_entry_points_use_cli(module, argv, expected, monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", [module.__file__, *argv])
    with pytest.raises(SystemExit) as info:
        module.main()
    assert info.value.code == EXIT_OK
    assert expected in capsys.readouterr().out
