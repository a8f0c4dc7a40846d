import hashlib
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from fj.errors import Loc, ParseError

OBJECT = "Object"
THIS = "this"

_GRAMMAR_PATH = Path(__file__).with_name("grammar.lark")

ClassName = str


@dataclass(frozen=True, order=True)
class ClassVar:
    """Unification placeholder for a class type not known yet."""
    id: int

    def __str__(self) -> str:
        return f"?{self.id}"


TypeRef = Union[ClassName, ClassVar]


def is_ground(t: TypeRef) -> bool:
    return isinstance(t, str)


# Expressions

@dataclass(frozen=True)
class Var:
    name: str
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class This:
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FieldAccess:
    receiver: "Expr"
    field: str
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Invoke:
    receiver: "Expr"
    method: str
    args: tuple["Expr", ...] = ()
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class New:
    cls: ClassName
    args: tuple["Expr", ...] = ()
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class UCast:
    cls: ClassName
    expr: "Expr"
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DCast:
    cls: ClassName
    expr: "Expr"
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SCast:
    cls: ClassName
    expr: "Expr"
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


Expr = Union[Var, This, FieldAccess, Invoke, New, UCast, DCast, SCast]
CASTS = (UCast, DCast, SCast)

# (type, name) pairs
Param = tuple[ClassName, str]


@dataclass(frozen=True)
class MethodDecl:
    return_type: ClassName
    name: str
    params: tuple[Param, ...]
    body: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)

    @property
    def param_types(self) -> tuple[ClassName, ...]:
        return tuple(t for t, _ in self.params)


@dataclass(frozen=True)
class CtorDecl:
    cls: ClassName
    super_params: tuple[Param, ...] = ()
    own_params: tuple[Param, ...] = ()
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)

    @property
    def param_types(self) -> tuple[ClassName, ...]:
        return tuple(t for t, _ in self.super_params + self.own_params)


@dataclass(frozen=True)
class ClassDecl:
    name: ClassName
    super_name: ClassName
    fields: tuple[Param, ...]
    ctor: CtorDecl
    methods: tuple[MethodDecl, ...] = ()
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        return None


# Program tree

@dataclass(frozen=True)
class Leaf:
    decl: ClassDecl

    @cached_property
    def key(self) -> str:
        return _digest("L" + render(self.decl))


@dataclass(frozen=True)
class Group:
    children: tuple["ProgramNode", ...] = ()

    @cached_property
    def key(self) -> str:
        return _digest("G(" + ",".join(c.key for c in self.children) + ")")


ProgramNode = Union[Group, Leaf]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def node_key(node) -> str:
    """
    Structural hash of a program node or any other AST value.

    Locations and whitespace do not contribute, so two parses of the same program
    (or of texts differing only in layout) share keys.
    """
    if isinstance(node, (Leaf, Group)):
        return node.key
    return _digest(render(node))


def leaves(node: ProgramNode) -> Iterator[Leaf]:
    if isinstance(node, Leaf):
        yield node
        return
    for child in node.children:
        yield from leaves(child)


def class_decls(node: ProgramNode) -> list[ClassDecl]:
    return [leaf.decl for leaf in leaves(node)]


def depth(node: ProgramNode) -> int:
    """Number of edges on the longest path from node down to a leaf."""
    if isinstance(node, Leaf) or not node.children:
        return 0
    return 1 + max(depth(c) for c in node.children)


def count_nodes(node: ProgramNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return 1 + sum(count_nodes(c) for c in node.children)


def node_at(root: ProgramNode, path: tuple[int, ...]) -> ProgramNode:
    node = root
    for i in path:
        if not isinstance(node, Group) or not 0 <= i < len(node.children):
            raise IndexError(f"No node at path {path}")
        node = node.children[i]
    return node


def node_path(root: ProgramNode, class_name: ClassName) -> Optional[tuple[int, ...]]:
    """Child-index path from root to the leaf declaring class_name."""
    if isinstance(root, Leaf):
        return () if root.decl.name == class_name else None
    for i, child in enumerate(root.children):
        sub = node_path(child, class_name)
        if sub is not None:
            return (i,) + sub
    return None


def balance(decls: list[ClassDecl], arity: int = 2, layout: str = "even") -> Group:
    """
    Arrange class declarations as a balanced tree of groups.

    Args:
        decls: Class declarations in program order
        arity: Maximum branching factor of a group (>= 2)
        layout: "even" splits into near-equal contiguous chunks, giving depth
            ceil(log_arity n); "pairwise" groups neighbours level by level, folding
            a remainder into the first group

    Returns:
        Root group; a single class sits under a root group, no classes give an
        empty group

    Examples:
        >>> [type(c).__name__ for c in balance([A]).children]
        ['Leaf']
    """
    if arity < 2:
        raise ValueError(f"arity must be at least 2, got {arity}")
    items = [Leaf(d) for d in decls]
    if not items:
        return Group(())
    if len(items) == 1:
        return Group((items[0],))
    if layout == "even":
        return _balance_even(items, arity)
    if layout == "pairwise":
        return _balance_pairwise(items, arity)
    raise ValueError(f"Unknown layout {layout!r}")


def _balance_even(items: list[Leaf], arity: int) -> ProgramNode:
    if len(items) == 1:
        return items[0]
    chunks = [c for c in np.array_split(np.arange(len(items)), arity) if len(c)]
    return Group(tuple(_balance_even(items[c[0]:c[-1] + 1], arity) for c in chunks))


def _balance_pairwise(items: list[Leaf], arity: int) -> Group:
    level: list[ProgramNode] = list(items)
    while len(level) > 1:
        extra = len(level) % arity
        grouped: list[ProgramNode] = []
        start = 0
        if extra and len(level) > arity:
            grouped.append(Group((Group(tuple(level[:arity])),) + tuple(level[arity:arity + extra])))
            start = arity + extra
        for i in range(start, len(level), arity):
            chunk = level[i:i + arity]
            grouped.append(chunk[0] if len(chunk) == 1 else Group(tuple(chunk)))
        level = grouped
    root = level[0]
    return root if isinstance(root, Group) else Group((root,))


# Rendering

def render(node) -> str:
    if isinstance(node, Group):
        return "\n".join(render(leaf.decl) for leaf in leaves(node))
    if isinstance(node, Leaf):
        return render(node.decl)
    if isinstance(node, ClassDecl):
        return _render_class(node)
    if isinstance(node, MethodDecl):
        return _render_method(node)
    if isinstance(node, CtorDecl):
        return _render_ctor(node)
    return _render_expr(node)


def _render_params(params) -> str:
    return ", ".join(f"{t} {n}" for t, n in params)


def _render_ctor(k: CtorDecl) -> str:
    supers = ", ".join(n for _, n in k.super_params)
    assigns = "".join(f" this.{n} = {n};" for _, n in k.own_params)
    return f"{k.cls}({_render_params(k.super_params + k.own_params)}) {{ super({supers});{assigns} }}"


def _render_method(m: MethodDecl) -> str:
    return f"{m.return_type} {m.name}({_render_params(m.params)}) {{ return {_render_expr(m.body)}; }}"


def _render_class(c: ClassDecl) -> str:
    members = [f"{t} {n};" for t, n in c.fields]
    members.append(_render_ctor(c.ctor))
    members.extend(_render_method(m) for m in c.methods)
    return f"class {c.name} extends {c.super_name} {{ {' '.join(members)} }}"


def _render_receiver(e: Expr) -> str:
    text = _render_expr(e)
    return f"({text})" if isinstance(e, CASTS) else text


def _render_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, This):
        return THIS
    if isinstance(e, FieldAccess):
        return f"{_render_receiver(e.receiver)}.{e.field}"
    if isinstance(e, Invoke):
        args = ", ".join(_render_expr(a) for a in e.args)
        return f"{_render_receiver(e.receiver)}.{e.method}({args})"
    if isinstance(e, New):
        args = ", ".join(_render_expr(a) for a in e.args)
        return f"new {e.cls}({args})"
    if isinstance(e, UCast):
        return f"({e.cls}) {_render_expr(e.expr)}"
    if isinstance(e, DCast):
        return f"({e.cls})! {_render_expr(e.expr)}"
    if isinstance(e, SCast):
        return f"({e.cls})? {_render_expr(e.expr)}"
    raise TypeError(f"Cannot render {e!r}")


# Parsing

@lru_cache(maxsize=1)
def _parser() -> Lark:
    return Lark(
        _GRAMMAR_PATH.read_text(),
        parser="lalr",
        start=["program", "expr"],
        propagate_positions=True,
    )


def _loc(meta) -> Optional[Loc]:
    if getattr(meta, "empty", True):
        return None
    return Loc(meta.line, meta.column)


def _fail(message: str, loc: Optional[Loc]):
    raise ParseError(message, loc.line if loc else 0, loc.column if loc else 0)


@dataclass
class _Assign:
    field: str
    value: str
    loc: Optional[Loc]


@v_args(meta=True)
class _ToAst(Transformer):
    def program(self, meta, children):
        seen = {}
        for decl in children:
            if decl.name in seen:
                _fail(f"duplicate class {decl.name}", decl.loc)
            seen[decl.name] = decl
        return list(children)

    def class_decl(self, meta, children):
        name, super_name, *members = children
        loc = _loc(meta)
        if name == super_name:
            _fail(f"class {name} extends itself", loc)
        fields, ctors, methods = [], [], []
        for m in members:
            if isinstance(m, CtorDecl):
                ctors.append(m)
            elif isinstance(m, MethodDecl):
                methods.append(m)
            else:
                fields.append(m)
        if len(ctors) != 1:
            _fail(f"class {name} must declare exactly one constructor", loc)
        if ctors[0].cls != name:
            _fail(f"constructor {ctors[0].cls} does not match class {name}", ctors[0].loc)
        _check_unique([n for _, n in fields], f"duplicate field in class {name}", loc)
        _check_unique([m.name for m in methods], f"duplicate method in class {name}", loc)
        return ClassDecl(str(name), str(super_name), tuple(fields), ctors[0], tuple(methods), loc)

    def field_decl(self, meta, children):
        t, n = children
        return (str(t), str(n))

    def ctor_decl(self, meta, children):
        name, params, names, *assigns = children
        loc = _loc(meta)
        params = params or []
        names = names or []
        _check_params(params, loc)
        param_names = [n for _, n in params]
        if param_names[:len(names)] != names:
            _fail(f"constructor {name} must pass its leading parameters to super", loc)
        rest = params[len(names):]
        if [(a.field, a.value) for a in assigns] != [(n, n) for _, n in rest]:
            _fail(f"constructor {name} must assign this.f = f for its remaining parameters", loc)
        return CtorDecl(str(name), tuple(params[:len(names)]), tuple(rest), loc)

    def assign(self, meta, children):
        f, v = children
        return _Assign(str(f), str(v), _loc(meta))

    def method_decl(self, meta, children):
        ret, name, params, body = children
        params = params or []
        loc = _loc(meta)
        _check_params(params, loc)
        return MethodDecl(str(ret), str(name), tuple(params), body, loc)

    def params(self, meta, children):
        return list(children)

    def param(self, meta, children):
        t, n = children
        return (str(t), str(n))

    def names(self, meta, children):
        return [str(c) for c in children]

    def args(self, meta, children):
        return list(children)

    def var(self, meta, children):
        return Var(str(children[0]), _loc(meta))

    def this(self, meta, children):
        return This(_loc(meta))

    def field_access(self, meta, children):
        recv, name = children
        return FieldAccess(recv, str(name), _loc(meta))

    def invoke(self, meta, children):
        recv, name, args = children
        return Invoke(recv, str(name), tuple(args or ()), _loc(meta))

    def new(self, meta, children):
        name, args = children
        return New(str(name), tuple(args or ()), _loc(meta))

    def zero(self, meta, children):
        return New("Zero", (), _loc(meta))

    def succ(self, meta, children):
        return New("Succ", (children[0],), _loc(meta))

    def ucast(self, meta, children):
        return UCast(str(children[0]), children[1], _loc(meta))

    def dcast(self, meta, children):
        return DCast(str(children[0]), children[1], _loc(meta))

    def scast(self, meta, children):
        return SCast(str(children[0]), children[1], _loc(meta))


def _check_unique(names: list[str], message: str, loc: Optional[Loc]):
    seen = set()
    for n in names:
        if n in seen:
            _fail(f"{message}: {n}", loc)
        seen.add(n)


def _check_params(params: list[Param], loc: Optional[Loc]):
    names = [n for _, n in params]
    if THIS in names:
        _fail("parameter may not be named this", loc)
    _check_unique(names, "duplicate parameter", loc)


_LEADING = re.compile(r"(?:\s|//[^\n]*)*")


def _is_program_text(text: str) -> bool:
    rest = text[_LEADING.match(text).end():]
    return rest == "" or re.match(r"class\b", rest) is not None


def _run(text: str, start: str):
    try:
        tree = _parser().parse(text, start=start)
        return _ToAst().transform(tree)
    except UnexpectedInput as e:
        raise ParseError(f"syntax error: {e.__class__.__name__}", max(e.line, 0), max(e.column, 0)) from e
    except VisitError as e:
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc from None
        raise


def parse_decls(text: str) -> list[ClassDecl]:
    return _run(text, "program")


def parse_program(text: str, arity: int = 2, layout: str = "even") -> Group:
    return balance(parse_decls(text), arity, layout)


def parse_expr(text: str) -> Expr:
    return _run(text, "expr")


def parse(text: str) -> Union[ProgramNode, Expr]:
    """Parse a program (text empty or starting with `class`) or a single expression."""
    if _is_program_text(text):
        return parse_program(text)
    return parse_expr(text)
