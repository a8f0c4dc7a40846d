"""
Context requirements R and class-table requirements CR with their merge and
remove operations.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Optional, Union

from fj.class_table import ClassTable, field_lookup, mtype_lookup
from fj.config import CheckerOptions
from fj.errors import Loc
from fj.syntax import OBJECT, ClassName, MethodDecl, TypeRef, is_ground
from fj.coco.constraints import (
    Condition,
    Conflict,
    Constraint,
    Eq,
    Origin,
    Substitution,
    Truth,
    cond_eq,
    equation,
    evaluate_condition,
    refine,
)

logger = logging.getLogger(__name__)

ContextReqs = Mapping[str, TypeRef]

EXTENDS, CTOR, FIELD, METHOD, OPT_METHOD = "extends", "ctor", "field", "method", "optmethod"


@dataclass(frozen=True)
class ExtendsReq:
    receiver: TypeRef
    super_type: TypeRef
    loc: Optional[Loc] = field(default=None, compare=False)
    kind = EXTENDS

    @property
    def name(self) -> str:
        return ""

    def signature(self) -> tuple[TypeRef, ...]:
        return (self.super_type,)

    def __str__(self):
        return f"{self.receiver} extends {self.super_type}"


@dataclass(frozen=True)
class CtorReq:
    receiver: TypeRef
    params: tuple[TypeRef, ...]
    loc: Optional[Loc] = field(default=None, compare=False)
    kind = CTOR

    @property
    def name(self) -> str:
        return ""

    def signature(self) -> tuple[TypeRef, ...]:
        return self.params

    def __str__(self):
        return f"{self.receiver}.init({', '.join(map(str, self.params))})"


@dataclass(frozen=True)
class FieldReq:
    receiver: TypeRef
    name: str
    type: TypeRef
    loc: Optional[Loc] = field(default=None, compare=False)
    kind = FIELD

    def signature(self) -> tuple[TypeRef, ...]:
        return (self.type,)

    def __str__(self):
        return f"{self.receiver}.{self.name} : {self.type}"


@dataclass(frozen=True)
class MethodReq:
    receiver: TypeRef
    name: str
    params: tuple[TypeRef, ...]
    ret: TypeRef
    loc: Optional[Loc] = field(default=None, compare=False)
    kind = METHOD

    def signature(self) -> tuple[TypeRef, ...]:
        return self.params + (self.ret,)

    def __str__(self):
        return f"{self.receiver}.{self.name} : ({', '.join(map(str, self.params))}) -> {self.ret}"


@dataclass(frozen=True)
class OptMethodReq(MethodReq):
    """Override check against a superclass that may not declare the method at all."""
    kind = OPT_METHOD

    def __str__(self):
        return super().__str__() + " (optional)"


ClassReq = Union[ExtendsReq, CtorReq, FieldReq, MethodReq, OptMethodReq]


def _sig_of(req: ClassReq, sig: tuple[TypeRef, ...]) -> ClassReq:
    if isinstance(req, ExtendsReq):
        return replace(req, super_type=sig[0])
    if isinstance(req, CtorReq):
        return replace(req, params=tuple(sig))
    if isinstance(req, FieldReq):
        return replace(req, type=sig[0])
    return replace(req, params=tuple(sig[:-1]), ret=sig[-1])


def substitute_req(req: ClassReq, sigma: Substitution) -> ClassReq:
    sig = tuple(sigma.resolve(t) for t in req.signature())
    return replace(_sig_of(req, sig), receiver=sigma.resolve(req.receiver))


def req_vars(req: ClassReq) -> set:
    return {t for t in (req.receiver,) + req.signature() if not is_ground(t)}


@dataclass(frozen=True)
class Entry:
    req: ClassReq
    cond: Condition

    @property
    def key(self) -> tuple[str, str]:
        return (self.req.kind, self.req.name)

    @property
    def receiver(self) -> TypeRef:
        return self.req.receiver

    @property
    def hypothetical(self) -> bool:
        """Re-targeted duplicate whose condition is about the original receiver."""
        return not self.cond.irrefutable and self.cond.receiver != self.req.receiver

    def __str__(self):
        return f"({self.req}, {self.cond})"


def entry(req: ClassReq, cond: Optional[Condition] = None) -> Entry:
    return Entry(req, cond if cond is not None else Condition(req.receiver))


# bucket: receiver -> entries, per (kind, name)
_Bucket = dict[TypeRef, list[Entry]]


class ClassReqs:
    """
    Set of conditional class requirements grouped by member kind and name, and
    within a group by receiver. Copies share buckets until one side writes.
    """

    def __init__(self, entries: Iterable[Entry] = ()):
        self._buckets: dict[tuple[str, str], _Bucket] = {}
        self._owned: set[tuple[str, str]] = set()
        for e in entries:
            self._writable(e.key).setdefault(e.receiver, []).append(e)

    def _writable(self, key: tuple[str, str]) -> _Bucket:
        if key not in self._owned:
            self._buckets[key] = {r: list(es) for r, es in self._buckets.get(key, {}).items()}
            self._owned.add(key)
        return self._buckets[key]

    def copy(self) -> "ClassReqs":
        # buckets the source may still write in place are copied, the rest shared
        clone = ClassReqs()
        clone._buckets = {
            k: {r: list(es) for r, es in b.items()} if k in self._owned else b
            for k, b in self._buckets.items()
        }
        clone._owned = set(self._owned)
        return clone

    def __iter__(self) -> Iterator[Entry]:
        for bucket in self._buckets.values():
            for es in bucket.values():
                yield from es

    def __len__(self) -> int:
        return sum(len(es) for b in self._buckets.values() for es in b.values())

    def __bool__(self) -> bool:
        return any(es for b in self._buckets.values() for es in b.values())

    def live_count(self) -> int:
        return sum(1 for e in self if not e.cond.unsatisfiable)

    def keys(self) -> list[tuple[str, str]]:
        return [k for k, b in self._buckets.items() if any(b.values())]

    def bucket(self, kind: str, name: str = "") -> list[Entry]:
        return [e for es in self._buckets.get((kind, name), {}).values() for e in es]

    def with_receiver(self, receiver: TypeRef) -> list[Entry]:
        return [e for b in self._buckets.values() for e in b.get(receiver, ())]

    def ground_receivers(self) -> set[TypeRef]:
        return {
            r for b in self._buckets.values() for r, es in b.items()
            if is_ground(r) and any(not e.cond.unsatisfiable for e in es)
        }

    def _replace_bucket(self, key: tuple[str, str], entries: list[Entry]):
        bucket: _Bucket = {}
        for e in entries:
            bucket.setdefault(e.receiver, []).append(e)
        self._buckets[key] = bucket
        self._owned.add(key)

    def _drop_empty(self):
        for key in [k for k, b in self._buckets.items() if not any(b.values())]:
            del self._buckets[key]
            self._owned.discard(key)

    def substitute(self, sigma: Substitution) -> "ClassReqs":
        return settle(self, sigma, CheckerOptions(in_depth_merge=False))[0]

    def dump(self) -> str:
        return "\n".join(sorted(str(e) for e in self))

    def __str__(self):
        return "{" + ", ".join(sorted(str(e) for e in self)) + "}"


def class_reqs(*pairs) -> ClassReqs:
    """Build a requirement set from requirements or (requirement, condition) pairs."""
    entries = []
    for p in pairs:
        if isinstance(p, Entry):
            entries.append(p)
        elif isinstance(p, tuple):
            entries.append(entry(*p))
        else:
            entries.append(entry(p))
    return ClassReqs(entries)


# Context requirements

def merge_r(*rs: ContextReqs, origin: Optional[Origin] = None) -> tuple[dict[str, TypeRef], list[Constraint]]:
    merged: dict[str, TypeRef] = {}
    constraints: list[Constraint] = []
    for r in rs:
        for name, t in r.items():
            if name in merged:
                if merged[name] != t:
                    constraints.append(Eq(merged[name], t, origin))
            else:
                merged[name] = t
    return merged, constraints


def remove_var_req(r: ContextReqs, name: str, declared: TypeRef, origin: Optional[Origin] = None) -> tuple[dict[str, TypeRef], list[Constraint]]:
    rest = dict(r)
    if name not in rest:
        return rest, []
    required = rest.pop(name)
    return rest, [Eq(declared, required, origin)]


# Merging class requirements

def _sig_equalities(a: ClassReq, b: ClassReq, guard: Optional[Condition], origin) -> list[Constraint]:
    if guard is None:
        return []
    out = []
    for x, y in zip(a.signature(), b.signature()):
        if x != y:
            c = cond_eq(x, y, guard, origin)
            if c is not None:
                out.append(c)
    return out


def _same_arity(a: ClassReq, b: ClassReq) -> bool:
    return len(a.signature()) == len(b.signature())


def _same_cond(a: Condition, b: Condition) -> bool:
    return a == b or (a.irrefutable and b.irrefutable)


def _insert(cr: ClassReqs, new: Entry, options: CheckerOptions, out: list[Constraint], rule: str = "TC-Program"):
    """Merge one entry into cr, pairing it with the entries of its group."""
    if new.cond.unsatisfiable:
        if not options.normalize:
            cr._writable(new.key).setdefault(new.receiver, []).append(new)
        return
    bucket = cr._writable(new.key)
    origin = Origin(rule, new.req.loc, "merge")
    if is_ground(new.receiver):
        candidates = [new.receiver] + [r for r in bucket if not is_ground(r)]
    else:
        candidates = list(bucket)
    extra: list[Entry] = []
    for receiver in candidates:
        olds = bucket.get(receiver)
        if not olds:
            continue
        for i, old in enumerate(olds):
            if old.cond.unsatisfiable or not _same_arity(old.req, new.req):
                continue
            if old.receiver == new.receiver:
                if options.in_depth_merge and _same_cond(old.cond, new.cond):
                    out.extend(_sig_equalities(old.req, new.req, old.cond, origin))
                    return
                if (options.in_depth_merge and old.req == new.req
                        and old.cond.same_up_to_alternatives(new.cond)):
                    olds[i] = Entry(old.req, old.cond.union_alternatives(new.cond))
                    return
                out.extend(_sig_equalities(old.req, new.req, old.cond.conjoin(new.cond), origin))
                if _same_cond(old.cond, new.cond):
                    # signatures of identical requirements are equated once
                    break
                continue
            t1, t2 = old.receiver, new.receiver
            if old.cond.irrefutable and new.cond.irrefutable:
                apart_old = refine(old.cond, t1, t2, False, prefer=t1)
                apart_new = refine(new.cond, t1, t2, False, prefer=t2)
                together = refine(old.cond, t1, t2, True, prefer=t1)
                out.extend(_sig_equalities(old.req, new.req, equation(t1, t2, prefer=t1), origin))
                olds[i] = Entry(old.req, apart_old)
                extra.append(Entry(old.req, together))
                new = Entry(new.req, apart_new)
            else:
                guard = old.cond.conjoin(new.cond)
                if guard is not None:
                    guard = refine(guard, t1, t2, True, prefer=t1)
                out.extend(_sig_equalities(old.req, new.req, guard, origin))
    for e in [new] + extra:
        if e.cond.unsatisfiable and options.normalize:
            continue
        bucket.setdefault(e.receiver, []).append(e)
    if options.normalize:
        for receiver in candidates:
            if receiver in bucket:
                bucket[receiver] = [e for e in bucket[receiver] if not e.cond.unsatisfiable]


def merge_cr(*crs: ClassReqs, options: Optional[CheckerOptions] = None, rule: str = "TC-Program") -> tuple[ClassReqs, list[Constraint]]:
    """
    N-ary merge as a left fold of the binary merge.

    Returns:
        Merged requirements and the conditional constraints equating signatures of
        requirements that may denote the same member
    """
    options = options or CheckerOptions()
    crs = [c for c in crs if c is not None]
    if not crs:
        return ClassReqs(), []
    # fold into the largest input to touch fewer buckets
    largest = max(range(len(crs)), key=lambda i: len(crs[i]))
    result = crs[largest].copy()
    out: list[Constraint] = []
    for i, cr in enumerate(crs):
        if i == largest:
            continue
        for e in cr:
            _insert(result, e, options, out, rule)
    result._drop_empty()
    return result, out


def settle(cr: ClassReqs, sigma: Substitution, options: CheckerOptions) -> tuple[ClassReqs, list[Constraint]]:
    """
    Apply sigma, prune entries whose condition became unsatisfiable and merge
    entries that now share a receiver.
    """
    out: list[Constraint] = []
    result = ClassReqs()
    result._buckets = dict(cr._buckets)
    for key, bucket in cr._buckets.items():
        changed = False
        entries: list[Entry] = []
        for es in bucket.values():
            for e in es:
                req = substitute_req(e.req, sigma)
                cond = e.cond.substitute(sigma)
                if req != e.req or cond != e.cond:
                    changed = True
                entries.append(Entry(req, cond))
        if not changed:
            continue
        result._replace_bucket(key, [])
        for e in entries:
            _insert(result, e, options, out)
    result._drop_empty()
    return result, out


# Removing class requirements against declarations

def _discharge_guard(e: Entry, cls: ClassName) -> Condition:
    base = equation(e.receiver, cls, prefer=e.receiver)
    if e.hypothetical:
        combined = e.cond.conjoin(base)
        if combined is not None:
            return combined
    return base


def _apart(e: Entry, cls: ClassName) -> Condition:
    refined = refine(e.cond, e.receiver, cls, False, prefer=e.receiver)
    return e.cond if refined is None else refined


def _affected(e: Entry, cls: ClassName, only_receiver: bool = False) -> bool:
    if e.cond.unsatisfiable:
        return False
    if only_receiver:
        return e.receiver == cls
    return not (is_ground(e.receiver) and e.receiver != cls)


def _remove_member(cr: ClassReqs, key: tuple[str, str], cls: ClassName, declared: tuple[ClassName, ...],
                   options: CheckerOptions, out: list[Constraint], rule: str, only_receiver: bool = False):
    if key not in cr._buckets:
        return
    kept: list[Entry] = []
    touched = False
    for e in [e for es in cr._buckets[key].values() for e in es]:
        if not _affected(e, cls, only_receiver):
            kept.append(e)
            continue
        touched = True
        guard = _discharge_guard(e, cls)
        origin = Origin(rule, e.req.loc, str(e.req))
        sig = e.req.signature()
        if len(sig) == len(declared):
            for required, actual in zip(sig, declared):
                c = cond_eq(required, actual, guard, origin)
                if c is not None:
                    out.append(c)
        elif not guard.unsatisfiable:
            out.append(Conflict(guard, f"{e.req} has a different arity than its declaration in {cls}", origin))
        cond = _apart(e, cls)
        if cond.unsatisfiable and options.normalize:
            continue
        kept.append(Entry(e.req, cond))
    if touched:
        cr._replace_bucket(key, kept)


MethodSigs = Union[Iterable[MethodDecl], Mapping[str, tuple[tuple[ClassName, ...], ClassName]]]


def _method_sigs(methods: MethodSigs) -> list[tuple[str, tuple[ClassName, ...]]]:
    if isinstance(methods, Mapping):
        return [(name, tuple(params) + (ret,)) for name, (params, ret) in methods.items()]
    return [(m.name, m.param_types + (m.return_type,)) for m in methods]


def remove_methods(cls: ClassName, methods: MethodSigs, cr: ClassReqs,
                   options: Optional[CheckerOptions] = None,
                   only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    """
    Refine method requirements with `T ≠ cls`, emitting `T̄ = C̄, T' = C' if T = cls`.

    Args:
        cls: Declaring class
        methods: Method declarations of cls, or a map name -> (parameter types, return type)
        cr: Requirements to discharge
        options: Checker switches
        only_receiver: Touch only requirements whose receiver is cls itself

    Examples:
        >>> cr, s = remove_methods("List", [size], class_reqs(MethodReq(u1, "size", (), u2)))
        >>> str(cr), [str(c) for c in s]
        ('{(?1.size : () -> ?2, ?1≠List)}', ['?2 = Int if ?1=List'])
    """
    options = options or CheckerOptions()
    result, out = cr.copy(), []
    for name, sig in _method_sigs(methods):
        _remove_member(result, (METHOD, name), cls, sig, options, out, "TC-Invk", only_receiver)
    result._drop_empty()
    return result, out


def remove_opt_methods(cls: ClassName, methods: MethodSigs, cr: ClassReqs,
                       options: Optional[CheckerOptions] = None,
                       only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    options = options or CheckerOptions()
    result, out = cr.copy(), []
    for name, sig in _method_sigs(methods):
        _remove_member(result, (OPT_METHOD, name), cls, sig, options, out, "TC-Method", only_receiver)
    result._drop_empty()
    return result, out


def remove_fields(cls: ClassName, fields: Iterable[tuple[ClassName, str]], cr: ClassReqs,
                  options: Optional[CheckerOptions] = None,
                  only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    options = options or CheckerOptions()
    result, out = cr.copy(), []
    for t, name in fields:
        _remove_member(result, (FIELD, name), cls, (t,), options, out, "TC-Field", only_receiver)
    result._drop_empty()
    return result, out


def remove_ctor(cls: ClassName, params: tuple[ClassName, ...], cr: ClassReqs,
                options: Optional[CheckerOptions] = None,
                only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    """params is the full constructor signature: inherited field types, then own."""
    options = options or CheckerOptions()
    result, out = cr.copy(), []
    _remove_member(result, (CTOR, ""), cls, tuple(params), options, out, "TC-New", only_receiver)
    result._drop_empty()
    return result, out


def remove_ext(cls: ClassName, super_name: ClassName, cr: ClassReqs,
               options: Optional[CheckerOptions] = None,
               only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    """
    Discharge `cls extends super_name`: extends requirements on cls learn their
    supertype, member requirements that may concern cls are duplicated onto
    super_name under the condition that the receiver is cls.
    """
    options = options or CheckerOptions()
    result, out = cr.copy(), []
    _remove_member(result, (EXTENDS, ""), cls, (super_name,), options, out, "TC-Method", only_receiver)
    duplicates: list[Entry] = []
    for key in list(result._buckets):
        if key[0] not in (FIELD, METHOD, OPT_METHOD):
            continue
        kept: list[Entry] = []
        touched = False
        for e in [e for es in result._buckets[key].values() for e in es]:
            if not _affected(e, cls, only_receiver):
                kept.append(e)
                continue
            touched = True
            together = refine(e.cond, e.receiver, cls, True, prefer=e.receiver)
            if together is not None and not together.unsatisfiable:
                duplicates.append(Entry(replace(e.req, receiver=super_name), together))
            cond = _apart(e, cls)
            if cond.unsatisfiable and options.normalize:
                continue
            kept.append(Entry(e.req, cond))
        if touched:
            result._replace_bucket(key, kept)
    for d in duplicates:
        _insert(result, d, options, out, "TC-Program")
    result._drop_empty()
    return result, out


def remove_class(cls: ClassName, super_name: ClassName, ctor_params: tuple[ClassName, ...],
                 fields: Iterable[tuple[ClassName, str]], methods: MethodSigs, cr: ClassReqs,
                 options: Optional[CheckerOptions] = None,
                 only_receiver: bool = False) -> tuple[ClassReqs, list[Constraint]]:
    """All removes of one declaration: methods, optional methods, fields, ctor, extends last."""
    out: list[Constraint] = []
    methods = dict(_method_sigs(methods))
    sigs = {name: (sig[:-1], sig[-1]) for name, sig in methods.items()}
    for step in (
        lambda r: remove_methods(cls, sigs, r, options, only_receiver),
        lambda r: remove_opt_methods(cls, sigs, r, options, only_receiver),
        lambda r: remove_fields(cls, fields, r, options, only_receiver),
        lambda r: remove_ctor(cls, ctor_params, r, options, only_receiver),
        lambda r: remove_ext(cls, super_name, r, options, only_receiver),
    ):
        if not cr:
            break
        cr, cs = step(cr)
        out.extend(cs)
    return cr, out


def discharge_object(cr: ClassReqs, options: Optional[CheckerOptions] = None) -> tuple[ClassReqs, list[Constraint]]:
    """
    Object has an empty constructor and declares no methods, so override checks
    against it always pass.
    """
    result, out = remove_ctor(OBJECT, (), cr, options, only_receiver=True)
    for key in [k for k in result._buckets if k[0] == OPT_METHOD]:
        if result._buckets[key].get(OBJECT):
            result._writable(key).pop(OBJECT, None)
    result._drop_empty()
    return result, out


# Satisfaction oracle

def satisfies(table: ClassTable, sigma: Substitution, cr: ClassReqs) -> bool:
    """
    Whether the class table provides every requirement whose condition holds
    under sigma.

    Raises:
        ValueError: a live requirement is not ground under sigma
    """
    for e in cr:
        truth = evaluate_condition(e.cond, sigma)
        if truth is Truth.FAILS:
            continue
        req = substitute_req(e.req, sigma)
        if truth is Truth.UNDECIDED or req_vars(req):
            raise ValueError(f"requirement {req} is not ground under the substitution")
        if not _provided(table, req):
            return False
    return True


def _provided(table: ClassTable, req: ClassReq) -> bool:
    c = req.receiver
    if isinstance(req, ExtendsReq):
        return table._extends.get(c) == req.super_type
    if isinstance(req, CtorReq):
        return table.ctor_params(c) == tuple(req.params)
    if isinstance(req, FieldReq):
        try:
            return field_lookup(req.name, c, table) == req.type
        except KeyError:
            return False
    sig = mtype_lookup(req.name, c, table)
    if isinstance(req, OptMethodReq) and sig is None:
        return True
    return sig == (tuple(req.params), req.ret)
