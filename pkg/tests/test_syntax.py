import pytest

from fj.errors import ParseError
from fj.syntax import (
    DCast,
    FieldAccess,
    Group,
    Invoke,
    Leaf,
    New,
    SCast,
    This,
    UCast,
    Var,
    balance,
    class_decls,
    count_nodes,
    depth,
    leaves,
    node_at,
    node_key,
    node_path,
    parse,
    parse_decls,
    parse_expr,
    parse_program,
    render,
)

PAIR = """
class Pair extends Object {
    Object fst;
    Object snd;
    Pair(Object fst, Object snd) { super(); this.fst = fst; this.snd = snd; }
    Pair setFst(Object newfst) { return new Pair(newfst, this.snd); }
}
"""


def _decls(n):
    text = "\n".join(f"class C{i} extends Object {{ C{i}() {{ super(); }} }}" for i in range(n))
    return parse_decls(text)


def _shape(node):
    if isinstance(node, Leaf):
        return node.decl.name
    return tuple(_shape(c) for c in node.children)


def test_parse_class():
    (decl,) = parse_decls(PAIR)
    assert decl.name == "Pair"
    assert decl.super_name == "Object"
    assert decl.fields == (("Object", "fst"), ("Object", "snd"))
    assert decl.ctor.super_params == ()
    assert decl.ctor.own_params == decl.fields
    (m,) = decl.methods
    assert m.name == "setFst"
    assert m.params == (("Object", "newfst"),)
    assert m.body == New("Pair", (Var("newfst"), FieldAccess(This(), "snd")))


def test_parse_inherited_ctor():
    text = PAIR + """
    class Triple extends Pair {
        Object thd;
        Triple(Object fst, Object snd, Object thd) { super(fst, snd); this.thd = thd; }
    }
    """
    triple = parse_decls(text)[1]
    assert triple.ctor.super_params == (("Object", "fst"), ("Object", "snd"))
    assert triple.ctor.own_params == (("Object", "thd"),)
    assert triple.ctor.param_types == ("Object", "Object", "Object")


@pytest.mark.parametrize("text,expected", [
    ("x", Var("x")),
    ("this.f", FieldAccess(This(), "f")),
    ("x.m(y, z)", Invoke(Var("x"), "m", (Var("y"), Var("z")))),
    ("(A) x", UCast("A", Var("x"))),
    ("(A)! x", DCast("A", Var("x"))),
    ("(A)? x", SCast("A", Var("x"))),
    ("((A) x).m()", Invoke(UCast("A", Var("x")), "m")),
    ("succ(0)", New("Succ", (New("Zero"),))),
])
def test_parse_expr(text, expected):
    assert parse_expr(text) == expected


def test_parse_dispatch():
    assert isinstance(parse("// comment\nclass A extends Object { A() { super(); } }"), Group)
    assert parse("") == Group(())
    assert parse("x.f") == FieldAccess(Var("x"), "f")


@pytest.mark.parametrize("text,message", [
    ("class A extends Object { A() { super(); } } class A extends Object { A() { super(); } }", "duplicate class A"),
    ("class A extends A { A() { super(); } }", "extends itself"),
    ("class A extends Object { Object f; Object f; A(Object f) { super(); this.f = f; } }", "duplicate field"),
    ("class A extends Object { A() { super(); } Object m(Object x, Object x) { return x; } }", "duplicate parameter"),
    ("class A extends Object { B() { super(); } }", "does not match class A"),
    ("class A extends Object { }", "exactly one constructor"),
    ("class A extends Object { Object f; A(Object g) { super(); this.f = g; } }", "must assign"),
])
def test_parse_well_formedness(text, message):
    with pytest.raises(ParseError) as info:
        parse_decls(text)
    assert message in info.value.message


def test_parse_error_location():
    with pytest.raises(ParseError) as info:
        parse_decls("class A extends Object {\n  A() { super() }\n}")
    assert info.value.line == 2
    assert info.value.column > 0


def test_render_reparses():
    decls = parse_decls(PAIR + "class Q extends Object { Q() { super(); } Object m(Pair p) { return ((Object) p.fst); } }")
    assert parse_decls(render(balance(decls))) == decls


def test_node_key_ignores_layout():
    a = parse_program(PAIR)
    b = parse_program(" ".join(PAIR.split()))
    assert a.key == b.key
    assert node_key(class_decls(a)[0]) == node_key(class_decls(b)[0])
    assert a.key != parse_program(PAIR.replace("setFst", "setFirst")).key


def test_balance_small_programs():
    assert balance([]) == Group(())
    (only,) = balance(_decls(1)).children
    assert isinstance(only, Leaf)


def test_balance_even():
    root = balance(_decls(7))
    assert _shape(root) == ((("C0", "C1"), ("C2", "C3")), (("C4", "C5"), "C6"))
    assert depth(root) == 3
    assert [leaf.decl.name for leaf in leaves(root)] == [f"C{i}" for i in range(7)]


def test_balance_pairwise():
    root = balance(_decls(7), layout="pairwise")
    assert _shape(root) == (((("C0", "C1"), "C2"), ("C3", "C4")), ("C5", "C6"))


@pytest.mark.parametrize("n,arity,expected", [(2, 2, 1), (8, 2, 3), (9, 2, 4), (123, 2, 7), (9, 3, 2)])
def test_balance_depth(n, arity, expected):
    assert depth(balance(_decls(n), arity)) == expected


def test_balance_rejects_arity_one():
    with pytest.raises(ValueError):
        balance(_decls(3), arity=1)


def test_paths():
    root = balance(_decls(7))
    path = node_path(root, "C5")
    assert path == (1, 0, 1)
    assert node_at(root, path).decl.name == "C5"
    assert node_path(root, "Missing") is None
    with pytest.raises(IndexError):
        node_at(root, (5,))
    assert count_nodes(root) == 13
