"""
Co-contextual checking: nodes take no typing context and no class table. Every
node reports its type together with the requirements it has on variables and on
the class table, and requirements flow bottom-up until declarations discharge them.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from fj.class_table import Signature, check_well_formed
from fj.config import CheckerOptions
from fj.errors import ClassTableError, FJTypeError, Loc, Verdict
from fj.syntax import (
    OBJECT,
    THIS,
    ClassDecl,
    ClassName,
    ClassVar,
    DCast,
    Expr,
    FieldAccess,
    Group,
    Invoke,
    Leaf,
    MethodDecl,
    New,
    Param,
    ProgramNode,
    SCast,
    This,
    TypeRef,
    UCast,
    Var,
    balance,
    class_decls,
)
from fj.coco.constraints import (
    Constraint,
    Eq,
    Neq,
    NotSub,
    Origin,
    SolverState,
    Sub,
    Truth,
    evaluate_condition,
    finalize,
    solve_step,
)
from fj.coco.requirements import (
    OPT_METHOD,
    ClassReqs,
    CtorReq,
    ExtendsReq,
    FieldReq,
    MethodReq,
    OptMethodReq,
    class_reqs,
    discharge_object,
    merge_cr,
    merge_r,
    remove_class,
    remove_var_req,
    settle,
)

logger = logging.getLogger(__name__)


class FreshVars:
    """Monotonic class-variable supply shared by one checking session."""

    def __init__(self, start: int = 0):
        self.next_id = start

    def __call__(self) -> ClassVar:
        var = ClassVar(self.next_id)
        self.next_id += 1
        return var


@dataclass
class CoResult:
    type: TypeRef
    solver: SolverState
    context: dict[str, TypeRef]
    reqs: ClassReqs


@dataclass
class CheckStats:
    recomputed: int = 0
    reused: int = 0
    peak_live: int = 0

    def observe(self, reqs: ClassReqs):
        self.peak_live = max(self.peak_live, reqs.live_count())


def solver_error(failure: Constraint) -> FJTypeError:
    origin = failure.origin
    if origin is None:
        return FJTypeError("TC-Program", f"unsatisfiable constraint {failure}")
    note = f" ({origin.note})" if origin.note else ""
    return FJTypeError(origin.rule, f"unsatisfiable constraint {failure}{note}", origin.loc)


def _settle(cr: ClassReqs, state: SolverState, options: CheckerOptions) -> ClassReqs:
    """Apply sigma until re-merging stops binding variables."""
    while True:
        before = len(state.sigma)
        cr, cs = settle(cr, state.sigma, options)
        solve_step(state, cs)
        if state.failed or len(state.sigma) == before:
            return cr


# Expressions

class _Generator:
    def __init__(self, fresh: FreshVars, options: CheckerOptions, state: SolverState):
        self.fresh = fresh
        self.options = options
        self.state = state

    def solve(self, constraints: Iterable[Constraint]):
        solve_step(self.state, constraints)
        if self.state.failed:
            raise solver_error(self.state.failure)

    def combine(self, rule: str, loc: Optional[Loc], children, own: list[ClassReqs],
                constraints: list[Constraint]) -> tuple[dict[str, TypeRef], ClassReqs]:
        r, cs = merge_r(*[c[1] for c in children], origin=Origin(rule, loc))
        self.solve(cs + constraints)
        crs = []
        for cr in [c[2] for c in children] + own:
            settled, cs = settle(cr, self.state.sigma, self.options)
            self.solve(cs)
            crs.append(settled)
        merged, cs = merge_cr(*crs, options=self.options, rule=rule)
        self.solve(cs)
        return r, merged

    def expr(self, e: Expr) -> tuple[TypeRef, dict[str, TypeRef], ClassReqs]:
        if isinstance(e, (Var, This)):
            u = self.fresh()
            return u, {THIS if isinstance(e, This) else e.name: u}, ClassReqs()
        if isinstance(e, FieldAccess):
            child = self.expr(e.receiver)
            u = self.fresh()
            r, cr = self.combine("TC-Field", e.loc, [child], [class_reqs(FieldReq(child[0], e.field, u, e.loc))], [])
            return u, r, cr
        if isinstance(e, Invoke):
            child = self.expr(e.receiver)
            args = [self.expr(a) for a in e.args]
            params = tuple(self.fresh() for _ in args)
            ret = self.fresh()
            subs = [Sub(a[0], p, Origin("TC-Invk", arg.loc or e.loc, f"argument of {e.method}"))
                    for a, p, arg in zip(args, params, e.args)]
            req = MethodReq(child[0], e.method, params, ret, e.loc)
            r, cr = self.combine("TC-Invk", e.loc, [child] + args, [class_reqs(req)], subs)
            return ret, r, cr
        if isinstance(e, New):
            args = [self.expr(a) for a in e.args]
            params = tuple(self.fresh() for _ in args)
            subs = [Sub(a[0], p, Origin("TC-New", arg.loc or e.loc, f"argument of new {e.cls}"))
                    for a, p, arg in zip(args, params, e.args)]
            r, cr = self.combine("TC-New", e.loc, args, [class_reqs(CtorReq(e.cls, params, e.loc))], subs)
            return e.cls, r, cr
        if isinstance(e, UCast):
            child = self.expr(e.expr)
            r, cr = self.combine("TC-UCast", e.loc, [child], [], [Sub(child[0], e.cls, Origin("TC-UCast", e.loc))])
            return e.cls, r, cr
        if isinstance(e, DCast):
            child = self.expr(e.expr)
            origin = Origin("TC-DCast", e.loc)
            r, cr = self.combine("TC-DCast", e.loc, [child], [], [Sub(e.cls, child[0], origin), Neq(e.cls, child[0], origin)])
            return e.cls, r, cr
        if isinstance(e, SCast):
            child = self.expr(e.expr)
            origin = Origin("TC-SCast", e.loc)
            r, cr = self.combine("TC-SCast", e.loc, [child], [], [NotSub(e.cls, child[0], origin), NotSub(child[0], e.cls, origin)])
            return e.cls, r, cr
        raise TypeError(f"not an expression: {e!r}")


def co_check_expr(e: Expr, fresh: Optional[FreshVars] = None, options: Optional[CheckerOptions] = None,
                  state: Optional[SolverState] = None) -> CoResult:
    """
    Type e without a context: returns its type, the solver state, and the
    requirements e has on variables (R) and on the class table (CR).

    Raises:
        FJTypeError: the constraints became unsatisfiable while checking e
    """
    options = options or CheckerOptions()
    fresh = fresh or FreshVars(options.fresh_seed)
    state = state if state is not None else SolverState()
    gen = _Generator(fresh, options, state)
    t, r, cr = gen.expr(e)
    cr = _settle(cr, state, options)
    if state.failed:
        raise solver_error(state.failure)
    sigma = state.sigma
    return CoResult(sigma.resolve(t), state, {x: sigma.resolve(u) for x, u in r.items()}, cr)


def _var_loc(e: Expr, name: str) -> Optional[Loc]:
    if isinstance(e, Var):
        return e.loc if e.name == name else None
    children: tuple = ()
    if isinstance(e, FieldAccess):
        children = (e.receiver,)
    elif isinstance(e, Invoke):
        children = (e.receiver,) + e.args
    elif isinstance(e, New):
        children = e.args
    elif isinstance(e, (UCast, DCast, SCast)):
        children = (e.expr,)
    for c in children:
        loc = _var_loc(c, name)
        if loc is not None:
            return loc
    return None


def co_check_method(method: MethodDecl, fresh: Optional[FreshVars] = None, options: Optional[CheckerOptions] = None,
                    state: Optional[SolverState] = None) -> tuple[ClassVar, CoResult]:
    """
    TC-Method: the enclosing class and its superclass are unknown, so both get
    fresh variables U_c and U_d. The override check becomes an optional method
    requirement on U_d.

    Returns:
        U_c (resolved) and the result of the body with the parameter and this
        requirements discharged
    """
    options = options or CheckerOptions()
    fresh = fresh or FreshVars(options.fresh_seed)
    state = state if state is not None else SolverState()
    gen = _Generator(fresh, options, state)
    body_type, r, cr = gen.expr(method.body)
    u_c, u_d = fresh(), fresh()
    origin = Origin("TC-Method", method.loc, method.name)
    constraints: list[Constraint] = []
    for ptype, pname in method.params:
        r, cs = remove_var_req(r, pname, ptype, origin)
        constraints += cs
    r, cs = remove_var_req(r, THIS, u_c, origin)
    constraints += cs
    if r:
        name = sorted(r)[0]
        raise FJTypeError("TC-Method", f"unbound variable {name}", _var_loc(method.body, name) or method.loc)
    constraints.append(Sub(body_type, method.return_type, Origin("TC-Method", method.loc, f"body of {method.name}")))
    gen.solve(constraints)
    own = class_reqs(
        ExtendsReq(u_c, u_d, method.loc),
        OptMethodReq(u_d, method.name, method.param_types, method.return_type, method.loc),
    )
    r, cr = gen.combine("TC-Method", method.loc, [(body_type, {}, cr)], [own], [])
    cr = _settle(cr, state, options)
    if state.failed:
        raise solver_error(state.failure)
    sigma = state.sigma
    return sigma.resolve(u_c), CoResult(sigma.resolve(body_type), state, {}, cr)


# Program nodes

@dataclass
class ClassFacts:
    """Ground signatures declared inside a subtree; Object is implicit."""
    supers: dict[ClassName, ClassName] = field(default_factory=dict)
    ctors: dict[ClassName, tuple[ClassName, ...]] = field(default_factory=dict)
    fields: dict[ClassName, tuple[Param, ...]] = field(default_factory=dict)
    methods: dict[ClassName, dict[str, Signature]] = field(default_factory=dict)

    @classmethod
    def of(cls, decl: ClassDecl) -> "ClassFacts":
        return cls(
            {decl.name: decl.super_name},
            {decl.name: decl.ctor.param_types},
            {decl.name: decl.fields},
            {decl.name: {m.name: (m.param_types, m.return_type) for m in decl.methods}},
        )

    @classmethod
    def union(cls, parts: Iterable["ClassFacts"]) -> "ClassFacts":
        facts = cls()
        for p in parts:
            facts.supers.update(p.supers)
            facts.ctors.update(p.ctors)
            facts.fields.update(p.fields)
            facts.methods.update(p.methods)
        return facts

    def declares(self, c: TypeRef) -> bool:
        return c in self.supers

    def __len__(self) -> int:
        return len(self.supers)


@dataclass
class NodeResult:
    """Output of one program node; the node-local substitution is already applied."""
    reqs: ClassReqs
    deferred: list[Constraint]
    facts: ClassFacts
    method_types: dict[tuple[ClassName, str], TypeRef]
    errors: list[FJTypeError]
    fresh_range: tuple[int, int]


def _discharge_ground(reqs: ClassReqs, state: SolverState, facts: ClassFacts, options: CheckerOptions) -> ClassReqs:
    """
    Discharge requirements whose receiver is a class declared in facts (or
    Object), following superclasses, until nothing changes.
    """
    # entries climb one superclass per pass
    for _ in range(len(facts) + 2):
        reqs = _settle(reqs, state, options)
        if state.failed:
            return reqs
        targets = sorted(
            c for c in reqs.ground_receivers()
            if facts.declares(c) or (c == OBJECT and _object_dischargeable(reqs))
        )
        if not targets:
            return reqs
        for c in targets:
            if c == OBJECT:
                reqs, cs = discharge_object(reqs, options)
            else:
                reqs, cs = remove_class(c, facts.supers[c], facts.ctors[c], facts.fields[c], facts.methods[c],
                                        reqs, options, only_receiver=True)
            solve_step(state, cs)
    return _settle(reqs, state, options)


def _object_dischargeable(reqs: ClassReqs) -> bool:
    return any(
        e.req.kind in ("ctor", OPT_METHOD) and not e.cond.unsatisfiable
        for e in reqs.with_receiver(OBJECT)
    )


def _close_node(reqs: ClassReqs, state: SolverState, facts: ClassFacts,
                method_types: dict, errors: list[FJTypeError], options: CheckerOptions,
                fresh_range: tuple[int, int], stats: CheckStats) -> NodeResult:
    stats.observe(reqs)
    reqs = _discharge_ground(reqs, state, facts, options)
    if state.failed:
        errors = errors + [solver_error(state.failure)]
    sigma = state.sigma
    return NodeResult(
        reqs,
        list(state.deferred),
        facts,
        {k: sigma.resolve(t) for k, t in method_types.items()},
        errors,
        fresh_range,
    )


def co_check_class(decl: ClassDecl, fresh: Optional[FreshVars] = None, options: Optional[CheckerOptions] = None,
                   stats: Optional[CheckStats] = None) -> NodeResult:
    """
    TC-Class: check every method, equate each method's U_c with the class,
    require the superclass constructor for the inherited fields, and discharge
    what the class itself declares.
    """
    options = options or CheckerOptions()
    fresh = fresh or FreshVars(options.fresh_seed)
    stats = stats or CheckStats()
    lo = fresh.next_id
    errors: list[FJTypeError] = []
    method_types: dict[tuple[ClassName, str], TypeRef] = {}
    k = decl.ctor
    if k.own_params != decl.fields:
        own = ", ".join(n for _, n in decl.fields) or "()"
        errors.append(FJTypeError("TC-Class", f"constructor of {decl.name} does not initialize its fields {own}", k.loc))
    hierarchy = {decl.name: decl.super_name}
    parts = [class_reqs(CtorReq(decl.super_name, tuple(t for t, _ in k.super_params), k.loc))]
    deferred: list[Constraint] = []
    for m in decl.methods:
        m_state = SolverState(hierarchy=dict(hierarchy))
        try:
            u_c, result = co_check_method(m, fresh, options, m_state)
            solve_step(m_state, [Eq(u_c, decl.name, Origin("TC-Class", m.loc, m.name))])
            cr = _settle(result.reqs, m_state, options)
            if m_state.failed:
                raise solver_error(m_state.failure)
        except FJTypeError as e:
            errors.append(e)
            continue
        method_types[(decl.name, m.name)] = m_state.sigma.resolve(result.type)
        parts.append(cr)
        deferred.extend(m_state.deferred)
    state = SolverState(hierarchy=hierarchy)
    reqs, cs = merge_cr(*parts, options=options, rule="TC-Class")
    solve_step(state, deferred + cs)
    return _close_node(reqs, state, ClassFacts.of(decl), method_types, errors, options, (lo, fresh.next_id), stats)


def check_group(children: list[NodeResult], fresh: FreshVars, options: CheckerOptions,
                stats: Optional[CheckStats] = None) -> NodeResult:
    """Merge sibling results; class facts of the siblings discharge each other's requirements."""
    stats = stats or CheckStats()
    facts = ClassFacts.union(c.facts for c in children)
    state = SolverState(hierarchy=dict(facts.supers))
    reqs, cs = merge_cr(*[c.reqs for c in children], options=options)
    solve_step(state, [d for c in children for d in c.deferred] + cs)
    method_types: dict = {}
    for c in children:
        method_types.update(c.method_types)
    errors = [e for c in children for e in c.errors]
    return _close_node(reqs, state, facts, method_types, errors, options, (fresh.next_id, fresh.next_id), stats)


def check_tree(node: ProgramNode, fresh: FreshVars, options: CheckerOptions,
               stats: Optional[CheckStats] = None, memo: Optional[dict] = None) -> NodeResult:
    """
    Check a program tree bottom-up. With a memo table, nodes whose structural key
    is cached are reused instead of rechecked.
    """
    stats = stats if stats is not None else CheckStats()
    if memo is not None:
        cached = memo.get(node.key)
        if cached is not None:
            stats.reused += 1
            return cached
    if isinstance(node, Leaf):
        result = co_check_class(node.decl, fresh, options, stats)
    else:
        result = check_group([check_tree(c, fresh, options, stats, memo) for c in node.children], fresh, options, stats)
    stats.recomputed += 1
    if memo is not None:
        memo[node.key] = result
    return result


# Program

@dataclass
class CoVerdict(Verdict):
    # ground body type per (class, method)
    method_types: dict[tuple[ClassName, str], TypeRef] = field(default_factory=dict)


def _removal_order(facts: ClassFacts, decls: list[ClassDecl]) -> list[ClassName]:
    """Subclasses before superclasses, declaration order otherwise."""
    def height(c: ClassName) -> int:
        n, seen = 0, set()
        while c in facts.supers and c not in seen:
            seen.add(c)
            c = facts.supers[c]
            n += 1
        return n
    names = [d.name for d in decls]
    return sorted(names, key=height, reverse=True)


def finish_program(root: ProgramNode, result: NodeResult, options: CheckerOptions) -> CoVerdict:
    """
    TC-Program at the root: remove every declaration from the remaining
    requirements, reject residual requirements that may still be live, then
    decide the deferred constraints with the complete subclass relation.
    """
    decls = class_decls(root)
    errors = list(result.errors)
    try:
        check_well_formed(decls)
    except ClassTableError as e:
        return CoVerdict.reject(errors + [FJTypeError("TC-Program", str(e))])
    facts = result.facts
    # open until the residual check, so undeclared classes surface as residual requirements
    state = SolverState(hierarchy=dict(facts.supers))
    solve_step(state, result.deferred)
    reqs = result.reqs
    for name in _removal_order(facts, decls):
        if not reqs or state.failed:
            break
        reqs = _settle(reqs, state, options)
        reqs, cs = remove_class(name, facts.supers[name], facts.ctors[name], facts.fields[name],
                                facts.methods[name], reqs, options)
        solve_step(state, cs)
    reqs = _discharge_ground(reqs, state, facts, options)
    if state.failed:
        errors.append(solver_error(state.failure))
    else:
        residual = []
        for e in reqs:
            if e.req.kind == OPT_METHOD:
                continue
            truth = evaluate_condition(e.cond, state.sigma)
            if truth is Truth.FAILS:
                continue
            when = "" if truth is Truth.HOLDS else f" if {e.cond}"
            residual.append(FJTypeError("TC-Program", f"unsatisfied requirement {e.req}{when}", e.req.loc))
        errors.extend(sorted(residual, key=str))
        if not residual:
            solution = finalize(state, facts.supers)
            if not solution.ok:
                errors.append(solver_error(solution.failure))
    sigma = state.sigma
    method_types = {k: sigma.resolve(t) for k, t in result.method_types.items()}
    if errors:
        logger.debug(f"Co-contextual check rejected with {len(errors)} errors")
        return CoVerdict(False, errors, method_types)
    return CoVerdict(True, [], method_types)


def co_check_program(program: Union[ProgramNode, list[ClassDecl]], options: Optional[CheckerOptions] = None,
                     stats: Optional[CheckStats] = None, fresh: Optional[FreshVars] = None) -> CoVerdict:
    """
    Check a whole program co-contextually.

    Args:
        program: Program tree, or a list of declarations to balance first
        options: Checker switches, read from the environment when omitted
        stats: Instrumentation counters to update
        fresh: Class-variable supply to draw from

    Returns:
        Verdict with the ground body type of every method
    """
    options = options or CheckerOptions.from_env()
    root = program if isinstance(program, (Group, Leaf)) else balance(list(program))
    fresh = fresh or FreshVars(options.fresh_seed)
    result = check_tree(root, fresh, options, stats)
    return finish_program(root, result, options)
