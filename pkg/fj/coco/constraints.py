"""
Constraint language of the co-contextual checker: class (in)equations, subtype
constraints, conditional equations guarded by normalized conditions, a union-find
substitution and a solver that runs continuously as constraints are generated.
"""
import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

from fj.errors import Loc
from fj.syntax import OBJECT, ClassName, ClassVar, TypeRef, is_ground

logger = logging.getLogger(__name__)


class Truth(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDED = "undecided"


# Conditions

@dataclass(frozen=True)
class Condition:
    """
    Normalized conjunction of (in)equations over a single receiver type.

    True iff the receiver differs from every type in not_ground and not_var, equals
    every variable in same_var, and, when same_ground_alternatives is non-empty,
    equals one of its members.
    """
    receiver: TypeRef
    not_ground: frozenset[ClassName] = frozenset()
    not_var: frozenset[ClassVar] = frozenset()
    same_var: frozenset[ClassVar] = frozenset()
    same_ground_alternatives: frozenset[ClassName] = frozenset()
    unsatisfiable: bool = False

    @property
    def irrefutable(self) -> bool:
        return not self.unsatisfiable and not (
            self.not_ground or self.not_var or self.same_var or self.same_ground_alternatives
        )

    def contradiction(self) -> "Condition":
        return Condition(self.receiver, unsatisfiable=True)

    def add_eq(self, t: TypeRef) -> "Condition":
        """Conjoin `receiver = t`."""
        if self.unsatisfiable or t == self.receiver:
            return self
        r = self.receiver
        if is_ground(r) and is_ground(t):
            return self.contradiction()
        if not is_ground(t):
            if t in self.not_var:
                return self.contradiction()
            return replace(self, same_var=self.same_var | {t})
        if t in self.not_ground:
            return self.contradiction()
        if self.same_ground_alternatives and t not in self.same_ground_alternatives:
            return self.contradiction()
        return replace(self, not_ground=frozenset(), same_ground_alternatives=frozenset({t}))

    def add_neq(self, t: TypeRef) -> "Condition":
        """Conjoin `receiver ≠ t`."""
        if self.unsatisfiable:
            return self
        r = self.receiver
        if t == r:
            return self.contradiction()
        if is_ground(r) and is_ground(t):
            return self
        if not is_ground(t):
            if t in self.same_var:
                return self.contradiction()
            return replace(self, not_var=self.not_var | {t})
        if self.same_ground_alternatives:
            remaining = self.same_ground_alternatives - {t}
            if not remaining:
                return self.contradiction()
            return replace(self, same_ground_alternatives=remaining)
        return replace(self, not_ground=self.not_ground | {t})

    def restrict_alternatives(self, alternatives: Iterable[ClassName]) -> "Condition":
        """Conjoin `receiver ∈ alternatives`."""
        alternatives = frozenset(alternatives)
        if self.unsatisfiable or not alternatives:
            return self
        r = self.receiver
        if is_ground(r):
            return self if r in alternatives else self.contradiction()
        if self.same_ground_alternatives:
            remaining = self.same_ground_alternatives & alternatives
        else:
            remaining = alternatives - self.not_ground
        if not remaining:
            return self.contradiction()
        return replace(self, not_ground=frozenset(), same_ground_alternatives=remaining)

    def conjoin(self, other: "Condition") -> Optional["Condition"]:
        """
        self ∧ other, or None when the result would talk about two receivers.
        """
        if self.unsatisfiable:
            return self
        if other.unsatisfiable:
            return self.contradiction()
        if other.irrefutable:
            return self
        if self.irrefutable:
            return other
        if other.receiver != self.receiver:
            return None
        cond = self
        for g in other.not_ground:
            cond = cond.add_neq(g)
        for v in other.not_var:
            cond = cond.add_neq(v)
        for v in other.same_var:
            cond = cond.add_eq(v)
        return cond.restrict_alternatives(other.same_ground_alternatives)

    def same_up_to_alternatives(self, other: "Condition") -> bool:
        return (
            self.receiver == other.receiver
            and self.unsatisfiable == other.unsatisfiable
            and self.not_ground == other.not_ground
            and self.not_var == other.not_var
            and self.same_var == other.same_var
        )

    def union_alternatives(self, other: "Condition") -> "Condition":
        # an empty alternative set means no restriction, which absorbs the other side
        if not self.same_ground_alternatives or not other.same_ground_alternatives:
            return replace(self, same_ground_alternatives=frozenset())
        return replace(self, same_ground_alternatives=self.same_ground_alternatives | other.same_ground_alternatives)

    def substitute(self, sigma: "Substitution") -> "Condition":
        if self.unsatisfiable:
            return Condition(sigma.resolve(self.receiver), unsatisfiable=True)
        if self.irrefutable:
            return Condition(sigma.resolve(self.receiver))
        cond = Condition(sigma.resolve(self.receiver))
        cond = cond.restrict_alternatives(self.same_ground_alternatives)
        for g in self.not_ground:
            cond = cond.add_neq(g)
        for v in self.not_var:
            cond = cond.add_neq(sigma.resolve(v))
        for v in self.same_var:
            cond = cond.add_eq(sigma.resolve(v))
        return cond

    def mentions(self) -> set[ClassVar]:
        found = set(self.not_var) | set(self.same_var)
        if not is_ground(self.receiver):
            found.add(self.receiver)
        return found

    def check_normalized(self):
        """Assert the normalization invariants of a satisfiable condition."""
        if self.unsatisfiable:
            return
        r = self.receiver
        assert r not in self.not_ground and r not in self.not_var and r not in self.same_var
        assert not (is_ground(r) and (self.not_ground or self.same_ground_alternatives))
        assert not self.same_ground_alternatives or not self.not_ground
        assert not (self.not_var & self.same_var)

    def __str__(self) -> str:
        if self.unsatisfiable:
            return "false"
        r = self.receiver
        parts = [f"{r}≠{g}" for g in sorted(self.not_ground)]
        parts += [f"{r}≠{v}" for v in sorted(self.not_var)]
        parts += [f"{r}={v}" for v in sorted(self.same_var)]
        if self.same_ground_alternatives:
            parts.append(f"{r}∈{{{', '.join(sorted(self.same_ground_alternatives))}}}")
            if len(self.same_ground_alternatives) == 1:
                parts[-1] = f"{r}={next(iter(self.same_ground_alternatives))}"
        return " ∧ ".join(parts) if parts else "true"


TRUE = Condition(OBJECT)


def condition_add_eq(cond: Condition, t: TypeRef) -> Condition:
    return cond.add_eq(t)


def condition_add_neq(cond: Condition, t: TypeRef) -> Condition:
    return cond.add_neq(t)


def refine(cond: Condition, lhs: TypeRef, rhs: TypeRef, equal: bool, prefer: Optional[TypeRef] = None) -> Optional[Condition]:
    """
    Conjoin `lhs = rhs` (or `lhs ≠ rhs`) to cond.

    Returns None when the conjunct talks about a receiver other than cond's.
    An irrefutable cond is re-rooted at a variable side, `prefer` first.
    """
    if cond.unsatisfiable:
        return cond
    if is_ground(lhs) and is_ground(rhs):
        return cond if (lhs == rhs) == equal else cond.contradiction()
    if cond.irrefutable:
        sides = [s for s in (prefer, lhs, rhs) if s is not None and s in (lhs, rhs) and not is_ground(s)]
        subject = sides[0]
        cond = Condition(subject)
    if cond.receiver == lhs:
        other = rhs
    elif cond.receiver == rhs:
        other = lhs
    else:
        return None
    return cond.add_eq(other) if equal else cond.add_neq(other)


def equation(lhs: TypeRef, rhs: TypeRef, prefer: Optional[TypeRef] = None) -> Condition:
    """The condition `lhs = rhs` on its own."""
    return refine(Condition(lhs), lhs, rhs, True, prefer)


def evaluate_condition(cond: Condition, sigma: "Substitution") -> Truth:
    resolved = cond.substitute(sigma)
    if resolved.unsatisfiable:
        return Truth.FAILS
    if resolved.irrefutable:
        return Truth.HOLDS
    return Truth.UNDECIDED


# Constraints

@dataclass(frozen=True)
class Origin:
    rule: str
    loc: Optional[Loc] = None
    note: str = ""


@dataclass(frozen=True)
class Eq:
    left: TypeRef
    right: TypeRef
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class Neq:
    left: TypeRef
    right: TypeRef
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.left} ≠ {self.right}"


@dataclass(frozen=True)
class Sub:
    left: TypeRef
    right: TypeRef
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.left} <: {self.right}"


@dataclass(frozen=True)
class NotSub:
    left: TypeRef
    right: TypeRef
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.left} ⊀ {self.right}"


@dataclass(frozen=True)
class CondEq:
    left: TypeRef
    right: TypeRef
    guard: Condition
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.left} = {self.right} if {self.guard}"


@dataclass(frozen=True)
class Conflict:
    """Contradiction that applies only when its guard holds (arity mismatches)."""
    guard: Condition
    reason: str
    origin: Optional[Origin] = field(default=None, compare=False)

    def __str__(self):
        return f"{self.reason} if {self.guard}"


Constraint = Union[Eq, Neq, Sub, NotSub, CondEq, Conflict]


def cond_eq(left: TypeRef, right: TypeRef, guard: Condition, origin: Optional[Origin] = None) -> Optional[Constraint]:
    """Guarded equation, degenerating to Eq or to nothing per the guard."""
    if guard.unsatisfiable:
        return None
    if guard.irrefutable:
        return Eq(left, right, origin)
    return CondEq(left, right, guard, origin)


# Substitution

class Substitution:
    """
    Union-find over class variables; a class anchors its set when one is bound.
    """

    def __init__(self, bindings: Optional[Mapping[ClassVar, TypeRef]] = None):
        self._parent: dict[ClassVar, TypeRef] = {}
        for var, t in (bindings or {}).items():
            if not self.unify(var, t):
                raise ValueError(f"inconsistent bindings for {var}")

    def resolve(self, t: TypeRef) -> TypeRef:
        if is_ground(t):
            return t
        path = []
        while not is_ground(t) and t in self._parent:
            path.append(t)
            t = self._parent[t]
        for v in path[:-1]:
            self._parent[v] = t
        return t

    def unify(self, a: TypeRef, b: TypeRef) -> bool:
        ra, rb = self.resolve(a), self.resolve(b)
        if ra == rb:
            return True
        if is_ground(ra) and is_ground(rb):
            return False
        if is_ground(ra):
            ra, rb = rb, ra
        elif not is_ground(rb) and rb.id > ra.id:
            ra, rb = rb, ra
        self._parent[ra] = rb
        return True

    def as_dict(self) -> dict[ClassVar, TypeRef]:
        return {v: self.resolve(v) for v in self._parent if self.resolve(v) != v}

    def copy(self) -> "Substitution":
        clone = Substitution()
        clone._parent = dict(self._parent)
        return clone

    def __len__(self) -> int:
        return len(self._parent)

    def __contains__(self, var: ClassVar) -> bool:
        return var in self._parent


def apply_subst(sigma: Substitution, x):
    """Homomorphic application of sigma to a type, constraint, condition or requirement set."""
    if isinstance(x, (str, ClassVar)):
        return sigma.resolve(x)
    if isinstance(x, Condition):
        return x.substitute(sigma)
    if isinstance(x, (Eq, Neq, Sub, NotSub)):
        return replace(x, left=sigma.resolve(x.left), right=sigma.resolve(x.right))
    if isinstance(x, CondEq):
        return replace(x, left=sigma.resolve(x.left), right=sigma.resolve(x.right), guard=x.guard.substitute(sigma))
    if isinstance(x, Conflict):
        return replace(x, guard=x.guard.substitute(sigma))
    if hasattr(x, "substitute"):
        return x.substitute(sigma)
    if isinstance(x, (list, tuple)):
        return type(x)(apply_subst(sigma, item) for item in x)
    raise TypeError(f"cannot substitute into {x!r}")


# Solver

@dataclass
class SolverState:
    sigma: Substitution = field(default_factory=Substitution)
    deferred: list[Constraint] = field(default_factory=list)
    failure: Optional[Constraint] = None
    # partial Σ: class -> immediate superclass, as far as known
    hierarchy: dict[ClassName, ClassName] = field(default_factory=dict)
    closed: bool = False

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def copy(self) -> "SolverState":
        return SolverState(self.sigma.copy(), list(self.deferred), self.failure, dict(self.hierarchy), self.closed)


def subtype_known(hierarchy: Mapping[ClassName, ClassName], closed: bool, c: ClassName, d: ClassName) -> Optional[bool]:
    """c <: d if the ancestor chain of c is known far enough, None otherwise."""
    current, seen = c, set()
    while True:
        if current == d:
            return True
        if current == OBJECT or current in seen:
            return False
        seen.add(current)
        nxt = hierarchy.get(current)
        if nxt is None:
            return False if closed else None
        current = nxt


def _decide(state: SolverState, c: Constraint) -> tuple[Truth, bool]:
    """(outcome, whether sigma grew). UNDECIDED means defer."""
    sigma = state.sigma
    if isinstance(c, Eq):
        a, b = sigma.resolve(c.left), sigma.resolve(c.right)
        if a == b:
            return Truth.HOLDS, False
        return (Truth.HOLDS, True) if sigma.unify(a, b) else (Truth.FAILS, False)
    if isinstance(c, CondEq):
        verdict = evaluate_condition(c.guard, sigma)
        if verdict is Truth.HOLDS:
            return _decide(state, Eq(c.left, c.right, c.origin))
        return (Truth.HOLDS, False) if verdict is Truth.FAILS else (Truth.UNDECIDED, False)
    if isinstance(c, Conflict):
        verdict = evaluate_condition(c.guard, sigma)
        if verdict is Truth.HOLDS:
            return Truth.FAILS, False
        return (Truth.HOLDS, False) if verdict is Truth.FAILS else (Truth.UNDECIDED, False)
    a, b = sigma.resolve(c.left), sigma.resolve(c.right)
    if isinstance(c, Neq):
        if a == b:
            return Truth.FAILS, False
        return (Truth.HOLDS, False) if is_ground(a) and is_ground(b) else (Truth.UNDECIDED, False)
    if isinstance(c, Sub):
        if a == b:
            return Truth.HOLDS, False
        if not (is_ground(a) and is_ground(b)):
            return Truth.UNDECIDED, False
        known = subtype_known(state.hierarchy, state.closed, a, b)
        if known is None:
            return Truth.UNDECIDED, False
        return (Truth.HOLDS if known else Truth.FAILS), False
    if isinstance(c, NotSub):
        if a == b:
            return Truth.FAILS, False
        if not (is_ground(a) and is_ground(b)):
            return Truth.UNDECIDED, False
        known = subtype_known(state.hierarchy, state.closed, a, b)
        if known is None:
            return Truth.UNDECIDED, False
        return (Truth.FAILS if known else Truth.HOLDS), False
    raise TypeError(f"not a constraint: {c!r}")


def solve_step(state: SolverState, constraints: Iterable[Constraint]) -> SolverState:
    """
    Feed new constraints to the solver. Equations are unified right away,
    everything else waits in the deferred list until decidable. The first
    contradiction is recorded in state.failure. The state is updated in place.
    """
    if state.failed:
        return state
    pending = [c for c in constraints if c is not None] + state.deferred
    state.deferred = []
    while pending:
        grew = False
        waiting: list[Constraint] = []
        for c in pending:
            outcome, changed = _decide(state, c)
            if outcome is Truth.FAILS:
                state.failure = apply_subst(state.sigma, c)
                state.deferred = waiting + state.deferred
                return state
            if outcome is Truth.UNDECIDED:
                waiting.append(c)
            grew = grew or changed
        if not grew:
            state.deferred.extend(waiting)
            break
        pending = waiting
    state.deferred = [apply_subst(state.sigma, c) for c in state.deferred]
    return state


@dataclass
class Solution:
    ok: bool
    sigma: dict[ClassVar, TypeRef]
    failure: Optional[Constraint] = None
    reason: str = ""


def finalize(state: SolverState, hierarchy: Optional[Mapping[ClassName, ClassName]] = None) -> Solution:
    """
    Decide every deferred constraint with the complete subclass relation.
    Guarded constraints whose guard can no longer be decided are dropped;
    undecidable subtype and inequality constraints reject.
    """
    if hierarchy is not None:
        state.hierarchy = dict(hierarchy)
    state.closed = True
    solve_step(state, [])
    if state.failed:
        return Solution(False, state.sigma.as_dict(), state.failure, f"unsatisfiable constraint {state.failure}")
    for c in state.deferred:
        if isinstance(c, (CondEq, Conflict)):
            continue
        return Solution(False, state.sigma.as_dict(), c, f"unresolved constraint {c}")
    state.deferred = []
    return Solution(True, state.sigma.as_dict())


def dump_state(state: SolverState) -> str:
    lines = sorted(f"{v} := {t}" for v, t in state.sigma.as_dict().items())
    lines += sorted(f"deferred {c}" for c in state.deferred)
    if state.failure is not None:
        lines.append(f"failure {state.failure}")
    return "\n".join(lines)
