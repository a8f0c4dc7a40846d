import itertools
import random

import pytest

from fj.class_table import build_class_table
from fj.config import CheckerOptions
from fj.syntax import ClassVar, is_ground, parse_decls
from fj.coco.checker import ClassFacts, _discharge_ground
from fj.coco.constraints import (
    Condition,
    Conflict,
    Eq,
    SolverState,
    Substitution,
    Truth,
    evaluate_condition,
    finalize,
    solve_step,
)
from fj.coco.requirements import (
    CtorReq,
    ExtendsReq,
    FieldReq,
    MethodReq,
    OptMethodReq,
    class_reqs,
    discharge_object,
    entry,
    merge_cr,
    merge_r,
    remove_class,
    remove_ctor,
    remove_ext,
    remove_fields,
    remove_methods,
    remove_var_req,
    satisfies,
    settle,
)

U1, U2, U3, U4, U5 = (ClassVar(i) for i in range(1, 6))
FLAT = CheckerOptions(in_depth_merge=False)


def test_merge_context_requirements():
    merged, cs = merge_r({"x": U1}, {"x": U2, "y": U3})
    assert merged == {"x": U1, "y": U3}
    assert cs == [Eq(U1, U2)]


def test_remove_context_requirement():
    rest, cs = remove_var_req({"x": U1, "y": U2}, "x", "Nat")
    assert rest == {"y": U2}
    assert cs == [Eq("Nat", U1)]
    assert remove_var_req({"y": U2}, "x", "Nat") == ({"y": U2}, [])


def test_remove_method_trace():
    cr = class_reqs(MethodReq(U1, "size", (), U2))
    result, cs = remove_methods("List", {"size": ((), "Int")}, cr)
    assert str(result) == "{(?1.size : () -> ?2, ?1≠List)}"
    assert [str(c) for c in cs] == ["?2 = Int if ?1=List"]
    # the input is left untouched
    assert str(cr) == "{(?1.size : () -> ?2, true)}"


def test_remove_ext_trace():
    cr = class_reqs(MethodReq(U1, "add", (U2,), U3))
    result, cs = remove_ext("LinkedList", "List", cr)
    assert result.dump().splitlines() == [
        "(?1.add : (?2) -> ?3, ?1≠LinkedList)",
        "(List.add : (?2) -> ?3, ?1=LinkedList)",
    ]
    assert cs == []


def test_remove_ext_learns_supertype():
    result, cs = remove_ext("LinkedList", "List", class_reqs(ExtendsReq("LinkedList", U1)))
    assert not result
    assert cs == [Eq(U1, "List")]


def test_remove_ground_receivers_elsewhere_untouched():
    cr = class_reqs(FieldReq("Other", "f", U1), FieldReq(U2, "f", U3))
    result, cs = remove_fields("Pair", [("Object", "f")], cr)
    assert "(Other.f : ?1, true)" in str(result)
    assert [str(c) for c in cs] == ["?3 = Object if ?2=Pair"]


def test_remove_arity_mismatch_is_conflict():
    cr = class_reqs(MethodReq(U1, "m", (), U2))
    result, cs = remove_methods("A", {"m": (("Object",), "Object")}, cr)
    (conflict,) = cs
    assert isinstance(conflict, Conflict)
    assert str(conflict.guard) == "?1=A"
    assert str(result) == "{(?1.m : () -> ?2, ?1≠A)}"


def test_remove_ctor_ground():
    result, cs = remove_ctor("Pair", ("Object", "Object"), class_reqs(CtorReq("Pair", (U1, U2))))
    assert not result
    assert cs == [Eq(U1, "Object"), Eq(U2, "Object")]


def test_merge_same_receiver_in_depth():
    merged, cs = merge_cr(class_reqs(MethodReq(U1, "m", (U2,), U3)), class_reqs(MethodReq(U1, "m", (U4,), U5)))
    assert len(merged) == 1
    assert cs == [Eq(U2, U4), Eq(U3, U5)]


def test_merge_same_receiver_flat():
    merged, cs = merge_cr(class_reqs(MethodReq(U1, "m", (U2,), U3)), class_reqs(MethodReq(U1, "m", (U4,), U5)),
                          options=FLAT)
    assert len(merged) == 2
    assert cs == [Eq(U2, U4), Eq(U3, U5)]


def test_merge_different_receivers():
    merged, cs = merge_cr(class_reqs(MethodReq(U1, "m", (), U3)), class_reqs(MethodReq(U2, "m", (), U4)))
    assert set(merged.dump().splitlines()) == {
        "(?1.m : () -> ?3, ?1≠?2)",
        "(?1.m : () -> ?3, ?1=?2)",
        "(?2.m : () -> ?4, ?2≠?1)",
    }
    assert [str(c) for c in cs] == ["?3 = ?4 if ?1=?2"]


def test_merge_distinct_ground_receivers():
    merged, cs = merge_cr(class_reqs(CtorReq("A", ())), class_reqs(CtorReq("B", ())))
    assert len(merged) == 2
    assert cs == []


def test_merge_skips_other_arity():
    merged, cs = merge_cr(class_reqs(MethodReq(U1, "m", (), U2)), class_reqs(MethodReq(U1, "m", (U3,), U4)))
    assert len(merged) == 2
    assert cs == []


def test_in_depth_merge_unions_alternatives():
    req = FieldReq(U1, "f", U2)
    a = class_reqs((req, Condition(U1).restrict_alternatives({"A"})))
    b = class_reqs((req, Condition(U1).restrict_alternatives({"B"})))
    merged, _ = merge_cr(a, b)
    (e,) = list(merged)
    assert e.cond.same_ground_alternatives == frozenset({"A", "B"})
    assert len(merge_cr(a, b, options=FLAT)[0]) == 2


def test_settle_merges_after_unification():
    cr = class_reqs(MethodReq(U1, "m", (), U2), MethodReq("List", "m", (), U3))
    result, cs = settle(cr, Substitution({U1: "List"}), CheckerOptions())
    assert len(result) == 1
    assert cs == [Eq(U2, U3)]


def test_discharge_object():
    cr = class_reqs(CtorReq("Object", ()), OptMethodReq("Object", "m", (), "A"), MethodReq("Object", "m", (), "A"))
    result, cs = discharge_object(cr)
    assert [e.req for e in result] == [MethodReq("Object", "m", (), "A")]
    assert cs == []


@pytest.fixture
def shapes():
    return build_class_table(parse_decls("""
    class Shape extends Object { Object tag; Shape(Object tag) { super(); this.tag = tag; } Object id() { return this; } }
    class Cube extends Shape { Cube(Object tag) { super(tag); } }
    """))


def test_satisfies(shapes):
    sigma = Substitution({U1: "Cube"})
    assert satisfies(shapes, sigma, class_reqs(
        MethodReq(U1, "id", (), "Object"),
        FieldReq(U1, "tag", "Object"),
        CtorReq(U1, ("Object",)),
        ExtendsReq(U1, "Shape"),
        OptMethodReq("Shape", "missing", (), "Object"),
    ))
    assert not satisfies(shapes, sigma, class_reqs(FieldReq(U1, "nope", "Object")))
    assert satisfies(shapes, sigma, class_reqs((FieldReq(U1, "nope", "Object"), Condition(U1).add_neq("Cube"))))
    with pytest.raises(ValueError):
        satisfies(shapes, sigma, class_reqs(FieldReq(U2, "tag", "Object")))


def test_copy_leaves_source_untouched():
    cr = class_reqs(MethodReq(U1, "m", (), U2))
    owned = set(cr._owned)
    clone = cr.copy()
    assert cr._owned == owned
    clone._writable(("method", "m"))[U1].append(entry(MethodReq(U1, "m", (), U3)))
    cr._writable(("method", "m"))[U1].append(entry(MethodReq(U1, "m", (), U4)))
    assert str(cr) == "{(?1.m : () -> ?2, true), (?1.m : () -> ?4, true)}"
    assert str(clone) == "{(?1.m : () -> ?2, true), (?1.m : () -> ?3, true)}"


VARS = (U1, U2, U3, U4)
NAMES = ("A", "B", "C")
# one name beyond those the conditions mention, so "differs from all of them" stays satisfiable
CANDIDATES = NAMES + ("D",)


def _random_condition(rng):
    cond = Condition(rng.choice(VARS))
    for _ in range(rng.randint(1, 5)):
        t = rng.choice(VARS + NAMES)
        op = rng.randrange(3)
        if op == 0:
            cond = cond.add_eq(t)
        elif op == 1:
            cond = cond.add_neq(t)
        else:
            cond = cond.restrict_alternatives(rng.sample(NAMES, rng.randint(1, 3)))
    return cond


def _satisfiable_by_enumeration(cond):
    variables = sorted(cond.mentions(), key=str)
    for values in itertools.product(CANDIDATES, repeat=len(variables)):
        if evaluate_condition(cond, Substitution(dict(zip(variables, values)))) is Truth.HOLDS:
            return True
    return False


def test_pruned_iff_unsatisfiable_everywhere():
    rng = random.Random(5)
    for _ in range(500):
        cond = _random_condition(rng)
        assert cond.unsatisfiable == (not _satisfiable_by_enumeration(cond)), str(cond)


def _random_reqs(rng, receivers, types, size):
    """size random requirements, merged into one well-formed set."""
    reqs = []
    for _ in range(size):
        receiver = rng.choice(receivers)
        if rng.random() < 0.5:
            reqs.append(FieldReq(receiver, rng.choice(["f", "g"]), rng.choice(types)))
        else:
            params = tuple(rng.choice(types) for _ in range(rng.randint(0, 1)))
            reqs.append(MethodReq(receiver, "m", params, rng.choice(types)))
    return merge_cr(*(class_reqs(r) for r in reqs))


def test_merge_keeps_only_satisfiable_conditions():
    rng = random.Random(6)
    for _ in range(200):
        merged, _ = merge_cr(*(_random_reqs(rng, (U1, U2, "A"), (U3, U4, "B"), rng.randint(1, 3))[0] for _ in range(3)))
        assert all(_satisfiable_by_enumeration(e.cond) for e in merged)


PAIR_TABLE = parse_decls("""
class A extends Object { B f; A(B f) { super(); this.f = f; } B m() { return this.f; } }
class B extends A { A g; B(B f, A g) { super(f); this.g = g; } B m(A x) { return this.f; } }
class C extends Object { C() { super(); } }
""")
PAIR_FACTS = ClassFacts.union(ClassFacts.of(d) for d in PAIR_TABLE)
PAIR_HIERARCHY = {d.name: d.super_name for d in PAIR_TABLE}


def _discharge_all(cr, constraints):
    """Remove every declaration, subclasses first, then decide what is left."""
    options = CheckerOptions()
    state = SolverState(hierarchy=dict(PAIR_HIERARCHY))
    solve_step(state, constraints)
    for d in sorted(PAIR_TABLE, key=lambda d: d.super_name == "Object"):
        cr, cs = remove_class(d.name, d.super_name, d.ctor.param_types, d.fields,
                              {m.name: (m.param_types, m.return_type) for m in d.methods}, cr, options)
        solve_step(state, cs)
    for _ in range(3):
        cr = _discharge_ground(cr, state, PAIR_FACTS, options)
    if state.failed or not finalize(state, PAIR_HIERARCHY).ok:
        return "reject", None, None
    residual = any(evaluate_condition(e.cond, state.sigma) is not Truth.FAILS for e in cr)
    ground = {v: state.sigma.resolve(v) for v in VARS if is_ground(state.sigma.resolve(v))}
    return "accept", residual, ground


def test_merge_verdict_commutes():
    rng = random.Random(9)
    for _ in range(300):
        (a, s_a), (b, s_b) = (_random_reqs(rng, (U1, U2, "A", "B"), (U3, U4, "A", "B"), rng.randint(1, 4)) for _ in range(2))
        ab, s_ab = merge_cr(a, b)
        ba, s_ba = merge_cr(b, a)
        assert _discharge_all(ab, s_a + s_b + s_ab) == _discharge_all(ba, s_a + s_b + s_ba), (str(a), str(b))


PAIR_PROVIDED = [
    FieldReq("A", "f", "B"), FieldReq("B", "f", "B"), FieldReq("B", "g", "A"),
    MethodReq("A", "m", (), "B"), MethodReq("B", "m", ("A",), "B"),
    CtorReq("A", ("B",)), CtorReq("B", ("B", "A")), CtorReq("C", ()),
    ExtendsReq("A", "Object"), ExtendsReq("B", "A"), ExtendsReq("C", "Object"),
]


def _random_ground_req(rng):
    if rng.random() < 0.6:
        return rng.choice(PAIR_PROVIDED)
    receiver, t = rng.choice(NAMES), rng.choice(NAMES + ("Object",))
    return rng.choice([
        FieldReq(receiver, rng.choice(["f", "g", "h"]), t),
        MethodReq(receiver, rng.choice(["m", "n"]), tuple(rng.choice(NAMES) for _ in range(rng.randint(0, 1))), t),
        CtorReq(receiver, tuple(rng.choice(NAMES) for _ in range(rng.randint(0, 2)))),
        ExtendsReq(receiver, t),
    ])


def test_removal_empties_exactly_the_satisfied_requirements():
    table = build_class_table(PAIR_TABLE)
    rng = random.Random(10)
    for _ in range(300):
        cr = class_reqs(*(_random_ground_req(rng) for _ in range(rng.randint(1, 4))))
        options = CheckerOptions()
        state = SolverState(hierarchy=dict(PAIR_HIERARCHY))
        left = cr
        for _ in range(3):
            left = _discharge_ground(left, state, PAIR_FACTS, options)
        discharged = not state.failed and not any(
            evaluate_condition(e.cond, state.sigma) is not Truth.FAILS for e in left
        )
        assert discharged == satisfies(table, Substitution(), cr), str(cr)
