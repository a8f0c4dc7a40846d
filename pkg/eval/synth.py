import json
import random
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Union

from fj.class_table import build_class_table, mtype_lookup, table_is_subtype
from fj.contextual import check_expr
from fj.syntax import (
    OBJECT,
    ClassDecl,
    CtorDecl,
    DCast,
    Expr,
    FieldAccess,
    Group,
    Invoke,
    MethodDecl,
    New,
    ProgramNode,
    SCast,
    This,
    UCast,
    Var,
    balance,
    class_decls,
    render,
)

SCHEMES = ("AccumSuper", "AccumPrev", "AccumPrevSuper")
NAMINGS = ("Unique", "Mirrored", "Override", "MirOver")
MUTATION_KINDS = ("wrong_return", "delete_method", "ctor_arity", "bad_override", "unbound_var", "bad_upcast", "identity")
NAT_CLASSES = ("Nat", "Zero", "Succ")
NAT = "Nat"


@dataclass(frozen=True)
class SynthConfig:
    scheme: str = "AccumSuper"
    naming: str = "Unique"
    k: int = 1
    height: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.naming not in NAMINGS:
            raise ValueError(f"Unknown naming {self.naming!r}, expected one of {NAMINGS}")
        if self.k < 1 or self.height < 1:
            raise ValueError(f"k and height must be positive, got k={self.k} height={self.height}")

    @property
    def class_count(self) -> int:
        return self.k * (2 ** self.height - 1) + len(NAT_CLASSES)

    @property
    def name(self) -> str:
        return f"{self.scheme}-{self.naming}-k{self.k}-h{self.height}"


def _this_field(name: str) -> Expr:
    return FieldAccess(This(), name)


def nat_classes() -> list[ClassDecl]:
    other = ((NAT, "other"),)
    plus_id = MethodDecl(NAT, "plus", other, Var("other"))
    succ_plus = MethodDecl(NAT, "plus", other, New("Succ", (Invoke(_this_field("val"), "plus", (Var("other"),)),)))
    return [
        ClassDecl("Nat", OBJECT, (), CtorDecl("Nat"), (plus_id,)),
        ClassDecl("Zero", "Nat", (), CtorDecl("Zero"), (plus_id,)),
        ClassDecl("Succ", "Nat", ((NAT, "val"),), CtorDecl("Succ", (), ((NAT, "val"),)), (succ_plus,)),
    ]


class _Names:
    """Field and method names of hierarchy i, heap position p."""

    def __init__(self, naming: str):
        self.naming = naming

    def member(self, prefix: str, i: int, p: int) -> str:
        level = p.bit_length()
        if self.naming == "Unique":
            return f"{prefix}{i}_{p}"
        if self.naming == "Mirrored":
            return f"{prefix}{p}"
        if self.naming == "Override":
            return f"{prefix}{i}_{level}"
        return f"{prefix}{level}"

    def field(self, i: int, p: int) -> str:
        return self.member("f", i, p)

    def cross_field(self, i: int, p: int) -> str:
        return self.member("x", i, p)

    def method(self, i: int, p: int) -> str:
        if self.naming == "Unique":
            return f"m{i}_{p}"
        if self.naming == "Mirrored":
            return f"m{p}"
        if self.naming == "Override":
            return f"m{i}"
        return "m"


def _class_name(i: int, p: int) -> str:
    return f"C{i}_{p}"


def _hierarchy(config: SynthConfig, i: int, names: _Names) -> Iterator[ClassDecl]:
    size = 2 ** config.height - 1
    own_fields: dict[int, tuple] = {}
    uses_prev = config.scheme in ("AccumPrev", "AccumPrevSuper") and i > 1
    uses_super = config.scheme in ("AccumSuper", "AccumPrevSuper")
    for p in range(1, size + 1):
        fields = [(NAT, names.field(i, p))]
        if uses_prev:
            fields.append((_class_name(i - 1, p), names.cross_field(i, p)))
        own_fields[p] = tuple(fields)
        inherited: list = []
        q = p // 2
        chain = []
        while q >= 1:
            chain.append(q)
            q //= 2
        for q in reversed(chain):
            inherited.extend(own_fields[q])
        body: Expr = _this_field(names.field(i, p))
        if uses_prev:
            prev = Invoke(_this_field(names.cross_field(i, p)), names.method(i - 1, p))
            body = Invoke(body, "plus", (prev,))
        if uses_super and p > 1:
            body = Invoke(body, "plus", (Invoke(This(), names.method(i, p // 2)),))
        super_name = OBJECT if p == 1 else _class_name(i, p // 2)
        yield ClassDecl(
            _class_name(i, p),
            super_name,
            own_fields[p],
            CtorDecl(_class_name(i, p), tuple(inherited), own_fields[p]),
            (MethodDecl(NAT, names.method(i, p), (), body),),
        )


def synthesize_decls(config: SynthConfig) -> list[ClassDecl]:
    names = _Names(config.naming)
    decls = nat_classes()
    for i in range(1, config.k + 1):
        decls.extend(_hierarchy(config, i, names))
    return decls


def synthesize(config: SynthConfig, arity: int = 2, layout: str = "even") -> Group:
    """
    Build a well-typed program: the Nat classes followed by k binary inheritance
    trees of the given height.

    Args:
        config: Scheme, naming, number of root classes k and tree height
        arity: Branching factor of the balanced program tree
        layout: Balancing layout, see fj.syntax.balance

    Returns:
        Balanced program of config.class_count classes

    Examples:
        >>> len(class_decls(synthesize(SynthConfig("AccumSuper", "Unique", 40, 5))))
        1243
    """
    return balance(synthesize_decls(config), arity, layout)


# Mutation

@dataclass
class Mutant:
    program: Group
    expected_ok: bool
    kind: str
    note: str = ""


def _walk(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, FieldAccess):
        yield from _walk(e.receiver)
    elif isinstance(e, Invoke):
        yield from _walk(e.receiver)
        for a in e.args:
            yield from _walk(a)
    elif isinstance(e, New):
        for a in e.args:
            yield from _walk(a)
    elif isinstance(e, (UCast, DCast, SCast)):
        yield from _walk(e.expr)


def _map_expr(e: Expr, fn) -> Expr:
    """Rebuild e bottom-up, applying fn to every node."""
    if isinstance(e, FieldAccess):
        e = replace(e, receiver=_map_expr(e.receiver, fn))
    elif isinstance(e, Invoke):
        e = replace(e, receiver=_map_expr(e.receiver, fn), args=tuple(_map_expr(a, fn) for a in e.args))
    elif isinstance(e, New):
        e = replace(e, args=tuple(_map_expr(a, fn) for a in e.args))
    elif isinstance(e, (UCast, DCast, SCast)):
        e = replace(e, expr=_map_expr(e.expr, fn))
    return fn(e)


def _with_method(decls: list[ClassDecl], ci: int, mi: int, method: Optional[MethodDecl]) -> list[ClassDecl]:
    decl = decls[ci]
    methods = list(decl.methods)
    if method is None:
        del methods[mi]
    elif mi < len(methods):
        methods[mi] = method
    else:
        methods.append(method)
    out = list(decls)
    out[ci] = replace(decl, methods=tuple(methods))
    return out


def _fresh_name(decls: list[ClassDecl], base: str) -> str:
    taken = {d.name for d in decls}
    for d in decls:
        taken.update(n for _, n in d.fields)
        for m in d.methods:
            taken.update(n for _, n in m.params)
    n = 0
    while f"{base}{n}" in taken:
        n += 1
    return f"{base}{n}"


def _methods(decls: list[ClassDecl]) -> list[tuple[int, int]]:
    return [(ci, mi) for ci, d in enumerate(decls) for mi in range(len(d.methods))]


def _wrong_return(decls, rng):
    ci, mi = rng.choice(_methods(decls))
    m = decls[ci].methods[mi]
    missing = _fresh_name(decls, "Missing")
    return _with_method(decls, ci, mi, replace(m, return_type=missing)), f"{decls[ci].name}.{m.name} returns {missing}"


def _delete_method(decls, rng):
    # only names still invoked after the deletion guarantee a rejection
    invoked = sorted({
        e.method for d in decls for m in d.methods for e in _walk(m.body)
        if isinstance(e, Invoke) and e.method != m.name
    })
    if not invoked:
        return None
    name = rng.choice(invoked)
    out = [replace(d, methods=tuple(m for m in d.methods if m.name != name)) for d in decls]
    return out, f"every {name} deleted"


def _ctor_arity(decls, rng):
    sites = [(ci, mi) for ci, mi in _methods(decls)
             if any(isinstance(e, New) for e in _walk(decls[ci].methods[mi].body))]
    if not sites:
        return None
    ci, mi = rng.choice(sites)
    m = decls[ci].methods[mi]
    done = []

    def extend(e):
        if isinstance(e, New) and not done:
            done.append(e.cls)
            return replace(e, args=e.args + (New(e.cls, e.args),))
        return e
    body = _map_expr(m.body, extend)
    return _with_method(decls, ci, mi, replace(m, body=body)), f"new {done[0]} with an extra argument in {decls[ci].name}.{m.name}"


def _bad_override(decls, rng):
    table = build_class_table(decls)
    sites = []
    for ci, d in enumerate(decls):
        for mi, m in enumerate(d.methods):
            if d.super_name != OBJECT and mtype_lookup(m.name, d.super_name, table) is not None:
                sites.append((ci, mi))
    if not sites:
        return None
    ci, mi = rng.choice(sites)
    m = decls[ci].methods[mi]
    extra = (NAT, _fresh_name(decls, "extra"))
    return _with_method(decls, ci, mi, replace(m, params=m.params + (extra,))), f"{decls[ci].name}.{m.name} takes an extra parameter"


def _unbound_var(decls, rng):
    ci, mi = rng.choice(_methods(decls))
    m = decls[ci].methods[mi]
    name = _fresh_name(decls, "unbound")
    return _with_method(decls, ci, mi, replace(m, body=Var(name))), f"{decls[ci].name}.{m.name} returns {name}"


def _bad_upcast(decls, rng):
    table = build_class_table(decls)
    ci, mi = rng.choice(_methods(decls))
    d, m = decls[ci], decls[ci].methods[mi]
    gamma = {n: t for t, n in m.params}
    gamma["this"] = d.name
    body_type = check_expr(gamma, table, m.body)
    targets = [c.name for c in decls if not table_is_subtype(table, body_type, c.name)]
    if not targets:
        return None
    target = rng.choice(targets)
    return _with_method(decls, ci, mi, replace(m, body=UCast(target, m.body))), f"body of {d.name}.{m.name} upcast to {target}"


_MUTATORS = {
    "wrong_return": _wrong_return,
    "delete_method": _delete_method,
    "ctor_arity": _ctor_arity,
    "bad_override": _bad_override,
    "unbound_var": _unbound_var,
    "bad_upcast": _bad_upcast,
}


def mutate(program: Union[ProgramNode, list[ClassDecl]], seed: int = 42, kind: Optional[str] = None,
           arity: int = 2, layout: str = "even") -> Mutant:
    """
    Inject one fault into a well-typed program.

    Every fault kind except identity is built so that the result must be
    rejected. A kind that does not apply to the program falls back to the
    next applicable one.

    Args:
        program: Program accepted by the contextual checker
        seed: Random seed; the same seed picks the same fault
        kind: Force a fault kind instead of drawing one
    """
    decls = list(program) if isinstance(program, list) else class_decls(program)
    rng = random.Random(seed)
    if kind is None:
        kind = rng.choice(MUTATION_KINDS)
    if kind not in MUTATION_KINDS:
        raise ValueError(f"Unknown mutation {kind!r}")
    if kind == "identity" or not decls or not _methods(decls):
        return Mutant(balance(decls, arity, layout), True, "identity")
    order = list(_MUTATORS)
    start = order.index(kind)
    for name in order[start:] + order[:start]:
        outcome = _MUTATORS[name](decls, rng)
        if outcome is not None:
            mutated, note = outcome
            return Mutant(balance(mutated, arity, layout), False, name, note)
    return Mutant(balance(decls, arity, layout), True, "identity")


def all_configs(ks=(2, 4), heights=(2, 3)) -> list[SynthConfig]:
    return [
        SynthConfig(scheme, naming, k, h)
        for scheme in SCHEMES for naming in NAMINGS for k in ks for h in heights
    ]


def write_corpus(out_dir: Union[str, Path], configs: list[SynthConfig], mutants: int = 1, seed: int = 42) -> Path:
    """
    Write every synthesized program and `mutants` single-fault variants of it as
    .fj files, plus a manifest.jsonl with the expected verdicts.

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    written = 0
    with open(manifest, "w") as f:
        for ci, config in enumerate(configs):
            program = synthesize(config)
            path = out_dir / f"{config.name}.fj"
            path.write_text(render(program) + "\n")
            f.write(json.dumps({"file": path.name, "config": config.name, "kind": "original", "expected": "accept"}) + "\n")
            written += 1
            for j in range(mutants):
                mutant = mutate(program, seed=seed + ci * max(mutants, 1) + j)
                mpath = out_dir / f"{config.name}.mut{j}.{mutant.kind}.fj"
                mpath.write_text(render(mutant.program) + "\n")
                record = {
                    "file": mpath.name,
                    "config": config.name,
                    "kind": mutant.kind,
                    "note": mutant.note,
                    "expected": "accept" if mutant.expected_ok else "reject",
                }
                f.write(json.dumps(record) + "\n")
                written += 1
    print(f"✓ Wrote {written} programs to {out_dir}")
    return manifest


def main():
    """Same as `cocofj synth`."""
    from fj.cli import main as cli_main

    sys.exit(cli_main(["synth", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
