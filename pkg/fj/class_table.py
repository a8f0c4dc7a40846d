import logging
from collections import deque
from functools import lru_cache
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from fj.errors import ClassTableError
from fj.syntax import OBJECT, ClassDecl, ClassName, ProgramNode, class_decls

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Extends:
    cls: ClassName
    super_name: ClassName


@dataclass(frozen=True)
class Ctor:
    cls: ClassName
    params: tuple[ClassName, ...]


@dataclass(frozen=True)
class Field:
    cls: ClassName
    name: str
    type: ClassName


@dataclass(frozen=True)
class Method:
    cls: ClassName
    name: str
    params: tuple[ClassName, ...]
    ret: ClassName


Clause = Union[Extends, Ctor, Field, Method]
Signature = tuple[tuple[ClassName, ...], ClassName]
# immediate subclass relation: (C, D) for every `C extends D`
SubclassRelation = frozenset[tuple[ClassName, ClassName]]


def add_ext(decl: ClassDecl) -> list[Clause]:
    return [Extends(decl.name, decl.super_name)]


def add_ctor(decl: ClassDecl) -> list[Clause]:
    return [Ctor(decl.name, decl.ctor.param_types)]


def add_fields(decl: ClassDecl) -> list[Clause]:
    return [Field(decl.name, n, t) for t, n in decl.fields]


def add_methods(decl: ClassDecl) -> list[Clause]:
    return [Method(decl.name, m.name, m.param_types, m.return_type) for m in decl.methods]


class ClassTable:
    """
    Decomposed class table: a set of ground clauses indexed by
    (class, member kind, member name).

    Object is implicit: no extends clause, an empty constructor, no members.
    """

    def __init__(self, clauses: Iterable[Clause] = ()):
        self._extends: dict[ClassName, ClassName] = {}
        self._ctors: dict[ClassName, tuple[ClassName, ...]] = {}
        self._fields: dict[ClassName, dict[str, ClassName]] = {}
        self._methods: dict[ClassName, dict[str, Signature]] = {}
        self._clauses: list[Clause] = []
        for clause in clauses:
            self.add(clause)

    def add(self, clause: Clause):
        if isinstance(clause, Extends):
            if clause.cls in self._extends:
                raise ClassTableError(f"duplicate extends clause for {clause.cls}")
            self._extends[clause.cls] = clause.super_name
        elif isinstance(clause, Ctor):
            if clause.cls in self._ctors:
                raise ClassTableError(f"duplicate constructor clause for {clause.cls}")
            self._ctors[clause.cls] = clause.params
        elif isinstance(clause, Field):
            own = self._fields.setdefault(clause.cls, {})
            if clause.name in own:
                raise ClassTableError(f"duplicate field clause {clause.cls}.{clause.name}")
            own[clause.name] = clause.type
        elif isinstance(clause, Method):
            own = self._methods.setdefault(clause.cls, {})
            if clause.name in own:
                raise ClassTableError(f"duplicate method clause {clause.cls}.{clause.name}")
            own[clause.name] = (clause.params, clause.ret)
        else:
            raise TypeError(f"not a clause: {clause!r}")
        self._clauses.append(clause)

    def __len__(self) -> int:
        return len(self._clauses)

    @property
    def clauses(self) -> list[Clause]:
        return list(self._clauses)

    def declares(self, cls: ClassName) -> bool:
        return cls == OBJECT or cls in self._extends

    @property
    def class_names(self) -> list[ClassName]:
        return list(self._extends)

    def own_fields(self, cls: ClassName) -> dict[str, ClassName]:
        return dict(self._fields.get(cls, {}))

    def own_methods(self, cls: ClassName) -> dict[str, Signature]:
        return dict(self._methods.get(cls, {}))

    def ctor_params(self, cls: ClassName) -> Optional[tuple[ClassName, ...]]:
        if cls == OBJECT:
            return ()
        return self._ctors.get(cls)

    def ancestors(self, cls: ClassName) -> list[ClassName]:
        """cls followed by its superclasses up to Object (cycle safe)."""
        chain, seen = [], set()
        current: Optional[ClassName] = cls
        while current is not None and current not in seen:
            chain.append(current)
            seen.add(current)
            current = None if current == OBJECT else self._extends.get(current)
        return chain

    def subtype_relation(self) -> SubclassRelation:
        return frozenset(self._extends.items())

    def dump(self) -> str:
        return "\n".join(sorted(_clause_text(c) for c in self._clauses))


def _clause_text(c: Clause) -> str:
    if isinstance(c, Extends):
        return f"{c.cls} extends {c.super_name}"
    if isinstance(c, Ctor):
        return f"{c.cls}.init({', '.join(c.params)})"
    if isinstance(c, Field):
        return f"{c.cls}.{c.name} : {c.type}"
    return f"{c.cls}.{c.name} : ({', '.join(c.params)}) -> {c.ret}"


def _decls(program) -> list[ClassDecl]:
    if isinstance(program, list):
        return program
    return class_decls(program)


def build_class_table(program: Union[ProgramNode, list[ClassDecl]]) -> ClassTable:
    """
    Collect addExt, addCtor, addFs and addMs of every declaration.

    Raises:
        ClassTableError: on duplicate clauses or an inheritance cycle
    """
    decls = _decls(program)
    table = ClassTable()
    for decl in decls:
        for clause in add_ext(decl) + add_ctor(decl) + add_fields(decl) + add_methods(decl):
            table.add(clause)
    _check_acyclic(table)
    logger.debug(f"Built class table with {len(table)} clauses for {len(decls)} classes")
    return table


def _check_acyclic(table: ClassTable):
    done: set[ClassName] = {OBJECT}
    for cls in table.class_names:
        path: list[ClassName] = []
        on_path: set[ClassName] = set()
        current = cls
        while current not in done and current in table._extends:
            if current in on_path:
                cycle = path[path.index(current):] + [current]
                raise ClassTableError(f"inheritance cycle: {' -> '.join(cycle)}")
            path.append(current)
            on_path.add(current)
            current = table._extends[current]
        done.update(path)


def check_well_formed(program: Union[ProgramNode, list[ClassDecl]]) -> ClassTable:
    """
    Whole-program checks that neither checker expresses as a typing rule:
    undeclared superclasses, inheritance cycles and field shadowing.
    """
    table = build_class_table(program)
    for cls in table.class_names:
        sup = table._extends[cls]
        if not table.declares(sup):
            raise ClassTableError(f"class {cls} extends undeclared class {sup}")
    for cls in table.class_names:
        inherited: set[str] = set()
        for anc in table.ancestors(cls)[1:]:
            inherited.update(table.own_fields(anc))
        for name in table.own_fields(cls):
            if name in inherited:
                raise ClassTableError(f"field {cls}.{name} shadows an inherited field")
    return table


# Lookups

def field_lookup(f: str, cls: ClassName, table: ClassTable) -> ClassName:
    for anc in table.ancestors(cls):
        own = table.own_fields(anc)
        if f in own:
            return own[f]
    raise KeyError(f"field {f} not found in {cls}")


def fields_lookup(cls: ClassName, table: ClassTable) -> tuple[ClassName, ...]:
    """fields(C) = C.init(D̄): inherited then own field types, root first."""
    if not table.declares(cls):
        raise KeyError(f"undeclared class {cls}")
    types: list[ClassName] = []
    for anc in reversed(table.ancestors(cls)):
        types.extend(table.own_fields(anc).values())
    return tuple(types)


def field_names(cls: ClassName, table: ClassTable) -> tuple[str, ...]:
    names: list[str] = []
    for anc in reversed(table.ancestors(cls)):
        names.extend(table.own_fields(anc))
    return tuple(names)


def mtype_lookup(m: str, cls: ClassName, table: ClassTable) -> Optional[Signature]:
    """Signature from the nearest ancestor declaring m, or None."""
    for anc in table.ancestors(cls):
        own = table.own_methods(anc)
        if m in own:
            return own[m]
    return None


def extends_lookup(cls: ClassName, table: ClassTable) -> ClassName:
    if cls not in table._extends:
        raise KeyError(f"no extends clause for {cls}")
    return table._extends[cls]


def project_extends(source: Union[ClassTable, ProgramNode, list[ClassDecl]]) -> SubclassRelation:
    if isinstance(source, ClassTable):
        return source.subtype_relation()
    return frozenset((d.name, d.super_name) for d in _decls(source))


@lru_cache(maxsize=32)
def _successors(sigma: SubclassRelation) -> dict[ClassName, tuple[ClassName, ...]]:
    succ: dict[ClassName, list[ClassName]] = {}
    for sub, sup in sigma:
        succ.setdefault(sub, []).append(sup)
    return {sub: tuple(sups) for sub, sups in succ.items()}


def is_subtype(sigma: SubclassRelation, c: ClassName, d: ClassName) -> bool:
    """(c, d) in the reflexive transitive closure of sigma."""
    if c == d:
        return True
    succ = _successors(sigma)
    seen = {c}
    queue = deque([c])
    while queue:
        current = queue.popleft()
        for nxt in succ.get(current, ()):
            if nxt == d:
                return True
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def table_is_subtype(table: ClassTable, c: ClassName, d: ClassName) -> bool:
    return d in table.ancestors(c)
