import random
from pathlib import Path

import pytest

from fj.class_table import build_class_table
from fj.config import CheckerOptions
from fj.contextual import check_expr, check_program
from fj.errors import FJTypeError
from fj.syntax import balance, class_decls, parse_decls, parse_expr, parse_program
from fj.coco.checker import (
    CheckStats,
    ClassFacts,
    FreshVars,
    _discharge_ground,
    co_check_expr,
    co_check_program,
)
from fj.coco.constraints import Eq, Substitution, solve_step
from fj.coco.incremental import MemoTable
from fj.coco.requirements import merge_cr, satisfies
from eval.synth import SCHEMES, SynthConfig, all_configs, mutate, synthesize

CORPUS = Path(__file__).resolve().parent.parent / "data" / "corpus"

TABLE_TEXT = """
class A extends Object { Object a; A(Object a) { super(); this.a = a; } Object getA() { return this.a; } }
class B extends A { A b; B(Object a, A b) { super(a); this.b = b; } A getB() { return this.b; } B self(A x) { return this; } }
class C extends B { C(Object a, A b) { super(a, b); } B self(A x) { return new C(x, x); } }
class D extends Object { B d; D(B d) { super(); this.d = d; } B pick(B x, A y) { return x; } }
class E extends Object { E() { super(); } }
"""
GAMMA = {"p": "C", "q": "D", "r": "E"}
SUBTYPES = {"Object": "ABCDE", "A": "ABC", "B": "BC", "C": "C", "D": "D", "E": "E"}


def _exact(rng, t, depth):
    """Random expression of exactly type t over TABLE_TEXT and GAMMA."""
    if depth <= 0:
        return {"A": "((A) p)", "B": "((B) p)", "C": "p", "D": "q", "E": "r", "Object": "((Object) q)"}[t]
    d = depth - 1
    sub = lambda bound: _exact(rng, rng.choice(SUBTYPES[bound]), d)
    choices = {
        "Object": [lambda: f"{sub('A')}.a", lambda: f"{sub('A')}.getA()", lambda: "new Object()",
                   lambda: f"((Object) {sub('Object')})"],
        "A": [lambda: f"new A({sub('Object')})", lambda: f"{sub('B')}.b", lambda: f"{sub('B')}.getB()",
              lambda: f"((A) {sub('B')})"],
        "B": [lambda: f"new B({sub('Object')}, {sub('A')})", lambda: f"{sub('D')}.d",
              lambda: f"{sub('D')}.pick({sub('B')}, {sub('A')})", lambda: f"{sub('B')}.self({sub('A')})",
              lambda: f"((B) {_exact(rng, 'C', d)})", lambda: f"((B)! {_exact(rng, 'A', d)})"],
        "C": [lambda: "p", lambda: f"new C({sub('Object')}, {sub('A')})", lambda: f"((C)! {_exact(rng, 'B', d)})"],
        "D": [lambda: "q", lambda: f"new D({sub('B')})"],
        "E": [lambda: "r", lambda: "new E()", lambda: f"((E)? {_exact(rng, rng.choice('ABCD'), d)})"],
    }
    return rng.choice(choices[t])()


def _random_exprs(n, seed=42):
    rng = random.Random(seed)
    return [(_exact(rng, t, rng.randrange(5)), t) for t in (rng.choice(list(SUBTYPES)) for _ in range(n))]


def _holder(body):
    return TABLE_TEXT + f"class Holder extends Object {{ Holder() {{ super(); }} Object hold(C p, D q, E r) {{ return {body}; }} }}"


def _decision(program, options=None):
    return check_program(program).ok, co_check_program(program, options or CheckerOptions()).ok


def test_operand_requirements():
    # new List().add(1).size() + new LinkedList().add(2).size(), with one and two standing for the literals
    fresh = FreshVars(0)
    left = co_check_expr(parse_expr("new List().add(one).size()"), fresh)
    right = co_check_expr(parse_expr("new LinkedList().add(two).size()"), fresh)
    assert left.type == left.reqs.bucket("method", "size")[0].req.ret
    assert set(left.context) == {"one"}
    ints = Substitution({left.context["one"]: "Int", right.context["two"]: "Int"})
    assert left.reqs.substitute(ints).dump().splitlines() == [
        "(?2.size : () -> ?3, true)",
        "(List.add : (Int) -> ?2, true)",
        "(List.init(), true)",
    ]
    assert right.reqs.substitute(ints).dump().splitlines() == [
        "(?6.size : () -> ?7, true)",
        "(LinkedList.add : (Int) -> ?6, true)",
        "(LinkedList.init(), true)",
    ]
    merged, cs = merge_cr(left.reqs, right.reqs)
    assert [str(c) for c in cs] == ["?3 = ?7 if ?2=?6"]
    assert merged.substitute(ints).dump().splitlines() == [
        "(?2.size : () -> ?3, ?2=?6)",
        "(?2.size : () -> ?3, ?2≠?6)",
        "(?6.size : () -> ?7, ?6≠?2)",
        "(LinkedList.add : (Int) -> ?6, true)",
        "(LinkedList.init(), true)",
        "(List.add : (Int) -> ?2, true)",
        "(List.init(), true)",
    ]


@pytest.mark.parametrize("text,expected", [
    ("new E()", "E"),
    ("(Object) x", "Object"),
    ("(A)? x", "A"),
])
def test_expr_ground_types(text, expected):
    assert co_check_expr(parse_expr(text)).type == expected


def test_expr_context_requirements():
    result = co_check_expr(parse_expr("x.m(x, this)"))
    assert set(result.context) == {"x", "this"}


def test_expr_unsatisfiable():
    with pytest.raises(FJTypeError) as info:
        co_check_expr(parse_expr("(A)! new A(x)"))
    assert info.value.rule == "TC-DCast"


@pytest.mark.parametrize("body,t", _random_exprs(200))
def test_body_types_match_contextual(body, t):
    table = build_class_table(parse_decls(TABLE_TEXT))
    assert check_expr(GAMMA, table, parse_expr(body)) == t
    verdict = co_check_program(parse_program(_holder(body)), CheckerOptions())
    assert verdict.ok, verdict.errors
    assert verdict.method_types[("Holder", "hold")] == t


@pytest.mark.parametrize("body,t", _random_exprs(200, seed=7))
def test_requirements_satisfied(body, t):
    decls = parse_decls(TABLE_TEXT)
    options = CheckerOptions()
    result = co_check_expr(parse_expr(body), FreshVars(0), options)
    state = result.solver
    solve_step(state, [Eq(GAMMA[x], u) for x, u in result.context.items()])
    state.hierarchy = {d.name: d.super_name for d in decls}
    state.closed = True
    facts = ClassFacts.union(ClassFacts.of(d) for d in decls)
    reqs = result.reqs
    # nested receivers become ground one discharge round at a time
    for _ in range(10):
        reqs = _discharge_ground(reqs, state, facts, options)
    assert not state.failed
    assert state.sigma.resolve(result.type) == t
    assert all(state.sigma.resolve(u) == GAMMA[x] for x, u in result.context.items())
    assert satisfies(build_class_table(decls), state.sigma, result.reqs)


@pytest.mark.parametrize("path", sorted((CORPUS / "ok").glob("*.fj")), ids=lambda p: p.name)
def test_accepts_ok_fixtures(path):
    verdict = co_check_program(parse_program(path.read_text()), CheckerOptions())
    assert verdict.ok, verdict.errors


@pytest.mark.parametrize("path", sorted((CORPUS / "bad").glob("*.fj")), ids=lambda p: p.name)
def test_rejects_bad_fixtures(path):
    verdict = co_check_program(parse_program(path.read_text()), CheckerOptions())
    assert not verdict.ok
    assert all(r.startswith("TC-") for r in verdict.rules())


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*/*.fj")), ids=lambda p: p.name)
@pytest.mark.parametrize("options", [CheckerOptions(), CheckerOptions(in_depth_merge=False),
                                     CheckerOptions(normalize=False)], ids=["default", "flat", "lazy"])
def test_modes_agree_on_fixtures(path, options):
    contextual, co = _decision(parse_decls(path.read_text()), options)
    assert contextual == co


def test_residual_requirement_reported():
    verdict = co_check_program(parse_program((CORPUS / "bad" / "undeclared_class.fj").read_text()))
    (error,) = verdict.errors
    assert error.rule == "TC-Program"
    assert "Widget.init()" in error.message


def test_unbound_variable():
    verdict = co_check_program(parse_program((CORPUS / "bad" / "unbound_var.fj").read_text()))
    assert verdict.rules() == ["TC-Method"]
    assert "unbound variable y" in verdict.errors[0].message


def test_method_types_ground():
    verdict = co_check_program(parse_program((CORPUS / "ok" / "list.fj").read_text()))
    assert verdict.method_types[("LinkedList", "size")] == "Succ"
    assert verdict.method_types[("List", "add")] == "LinkedList"


def test_empty_program():
    assert co_check_program(balance([])).ok


@pytest.mark.parametrize("config", [SynthConfig(s, n, 2, 2) for s in ("AccumSuper", "AccumPrevSuper")
                                    for n in ("Unique", "MirOver")], ids=lambda c: c.name)
def test_synthesized_programs_agree(config):
    program = synthesize(config)
    assert _decision(class_decls(program)) == (True, True)
    for seed in range(3):
        mutant = mutate(program, seed=seed)
        assert _decision(class_decls(mutant.program)) == (mutant.expected_ok, mutant.expected_ok), mutant.note


@pytest.mark.slow
def test_equivalence_suite():
    # one memo table per configuration: re-balanced variants and mutants reuse unchanged subtrees
    valid = mutants = 0
    for ci, config in enumerate(all_configs()):
        program = synthesize(config)
        decls = class_decls(program)
        assert check_program(decls).ok
        memo = MemoTable(CheckerOptions())
        rng = random.Random(ci)
        variants = [balance(decls, arity, layout) for arity in (2, 3, 4, 5) for layout in ("even", "pairwise")]
        for _ in range(3):
            shuffled = list(decls)
            rng.shuffle(shuffled)
            variants.append(balance(shuffled))
        for v in variants:
            assert memo.check(v).ok, config.name
            valid += 1
        for j in range(11):
            mutant = mutate(program, seed=ci * 11 + j)
            assert check_program(class_decls(mutant.program)).ok == mutant.expected_ok, f"{config.name}: {mutant.note}"
            assert memo.check(mutant.program).ok == mutant.expected_ok, f"{config.name}: {mutant.note}"
            mutants += 1
    assert valid >= 500
    assert mutants >= 500


@pytest.mark.slow
def test_order_and_balancing_invariance():
    decls = class_decls(synthesize(SynthConfig("AccumPrevSuper", "Override", 3, 3)))
    reference = co_check_program(balance(decls), CheckerOptions())
    assert reference.ok
    rng = random.Random(42)
    for _ in range(50):
        shuffled = list(decls)
        rng.shuffle(shuffled)
        root = balance(shuffled, rng.choice((2, 3, 4)), rng.choice(("even", "pairwise")))
        verdict = co_check_program(root, CheckerOptions())
        assert verdict.ok
        assert verdict.method_types == reference.method_types


def test_in_depth_merging_keeps_fewer_requirements():
    program = synthesize(SynthConfig("AccumSuper", "Override", 4, 3))
    deep, flat = CheckStats(), CheckStats()
    assert co_check_program(program, CheckerOptions(), deep).ok
    assert co_check_program(program, CheckerOptions(in_depth_merge=False), flat).ok
    assert deep.peak_live < flat.peak_live
    assert deep.recomputed == flat.recomputed


def test_fresh_seed_offsets_variables():
    result = co_check_expr(parse_expr("x"), options=CheckerOptions(fresh_seed=100))
    assert str(result.type) == "?100"


@pytest.mark.slow
@pytest.mark.parametrize("scheme", SCHEMES)
def test_in_depth_merging_lowers_peak_for_every_scheme(scheme):
    program = synthesize(SynthConfig(scheme, "Override", 4, 3))
    deep, flat = CheckStats(), CheckStats()
    assert co_check_program(program, CheckerOptions(), deep).ok
    assert co_check_program(program, CheckerOptions(in_depth_merge=False), flat).ok
    assert deep.peak_live < flat.peak_live


@pytest.mark.slow
def test_optimizations_do_not_change_verdicts():
    toggles = [CheckerOptions(in_depth_merge=False), CheckerOptions(normalize=False)]
    for ci, config in enumerate(all_configs()):
        program = synthesize(config)
        for root in [program] + [mutate(program, seed=ci * 2 + j).program for j in range(2)]:
            reference = co_check_program(root, CheckerOptions()).ok
            assert all(co_check_program(root, options).ok == reference for options in toggles), config.name
