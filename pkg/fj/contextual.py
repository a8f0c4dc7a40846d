import logging
from typing import Mapping, Union

from fj.class_table import (
    ClassTable,
    check_well_formed,
    field_lookup,
    field_names,
    fields_lookup,
    mtype_lookup,
    table_is_subtype,
)
from fj.errors import ClassTableError, FJTypeError, Verdict
from fj.syntax import (
    OBJECT,
    THIS,
    ClassDecl,
    ClassName,
    DCast,
    Expr,
    FieldAccess,
    Invoke,
    MethodDecl,
    New,
    ProgramNode,
    SCast,
    This,
    UCast,
    Var,
    class_decls,
)

logger = logging.getLogger(__name__)

TypingContext = Mapping[str, ClassName]


def check_expr(gamma: TypingContext, table: ClassTable, e: Expr) -> ClassName:
    """
    Type e under gamma and the class table.

    Raises:
        FJTypeError: first violated rule, with the offending node's location
    """
    if isinstance(e, Var):
        if e.name not in gamma:
            raise FJTypeError("T-Var", f"unbound variable {e.name}", e.loc)
        return gamma[e.name]
    if isinstance(e, This):
        if THIS not in gamma:
            raise FJTypeError("T-Var", "unbound variable this", e.loc)
        return gamma[THIS]
    if isinstance(e, FieldAccess):
        receiver = check_expr(gamma, table, e.receiver)
        try:
            return field_lookup(e.field, receiver, table)
        except KeyError:
            raise FJTypeError("T-Field", f"field {e.field} not found in {receiver}", e.loc) from None
    if isinstance(e, Invoke):
        receiver = check_expr(gamma, table, e.receiver)
        sig = mtype_lookup(e.method, receiver, table)
        if sig is None:
            raise FJTypeError("T-Invk", f"method {e.method} not found in {receiver}", e.loc)
        params, ret = sig
        _check_args(gamma, table, e.args, params, "T-Invk", f"{receiver}.{e.method}", e.loc)
        return ret
    if isinstance(e, New):
        try:
            params = fields_lookup(e.cls, table)
        except KeyError:
            raise FJTypeError("T-New", f"undeclared class {e.cls}", e.loc) from None
        _check_args(gamma, table, e.args, params, "T-New", f"{e.cls}.init", e.loc)
        return e.cls
    if isinstance(e, UCast):
        inner = check_expr(gamma, table, e.expr)
        if not table_is_subtype(table, inner, e.cls):
            raise FJTypeError("T-UCast", f"{inner} is not a subtype of {e.cls}", e.loc)
        return e.cls
    if isinstance(e, DCast):
        inner = check_expr(gamma, table, e.expr)
        if e.cls == inner or not table_is_subtype(table, e.cls, inner):
            raise FJTypeError("T-DCast", f"{e.cls} is not a proper subtype of {inner}", e.loc)
        return e.cls
    if isinstance(e, SCast):
        inner = check_expr(gamma, table, e.expr)
        if table_is_subtype(table, e.cls, inner) or table_is_subtype(table, inner, e.cls):
            raise FJTypeError("T-SCast", f"{e.cls} and {inner} are related", e.loc)
        return e.cls
    raise TypeError(f"not an expression: {e!r}")


def _check_args(gamma, table, args, params, rule, what, loc):
    if len(args) != len(params):
        raise FJTypeError(rule, f"{what} expects {len(params)} arguments, got {len(args)}", loc)
    for arg, param in zip(args, params):
        actual = check_expr(gamma, table, arg)
        if not table_is_subtype(table, actual, param):
            raise FJTypeError(rule, f"argument of type {actual} is not a subtype of {param} in {what}", arg.loc or loc)


def check_method(cls: ClassName, table: ClassTable, method: MethodDecl, super_name: ClassName = None):
    """T-Method: body type below the declared return type, overrides keep the signature."""
    gamma = {name: t for t, name in method.params}
    gamma[THIS] = cls
    body = check_expr(gamma, table, method.body)
    if not table_is_subtype(table, body, method.return_type):
        raise FJTypeError(
            "T-Method",
            f"body of {cls}.{method.name} has type {body}, not a subtype of {method.return_type}",
            method.loc,
        )
    if super_name is None:
        super_name = table._extends.get(cls, OBJECT)
    inherited = mtype_lookup(method.name, super_name, table)
    if inherited is not None and inherited != (method.param_types, method.return_type):
        raise FJTypeError("T-Method", f"{cls}.{method.name} overrides {super_name}.{method.name} with a different signature", method.loc)


def check_class(table: ClassTable, decl: ClassDecl) -> list[FJTypeError]:
    """T-Class; collects one error per failing member."""
    errors: list[FJTypeError] = []
    own_names = tuple(n for _, n in decl.fields)
    own_types = tuple(t for t, _ in decl.fields)
    k = decl.ctor
    if tuple(n for _, n in k.own_params) != own_names or tuple(t for t, _ in k.own_params) != own_types:
        errors.append(FJTypeError("T-Class", f"constructor of {decl.name} does not initialize its fields {', '.join(own_names) or '()'}", k.loc))
    try:
        inherited = fields_lookup(decl.super_name, table)
    except KeyError:
        errors.append(FJTypeError("T-Class", f"undeclared superclass {decl.super_name}", decl.loc))
    else:
        if tuple(t for t, _ in k.super_params) != inherited:
            expected = ", ".join(field_names(decl.super_name, table))
            errors.append(FJTypeError("T-Class", f"constructor of {decl.name} must take the inherited fields ({expected}) first", k.loc))
    for method in decl.methods:
        try:
            check_method(decl.name, table, method, decl.super_name)
        except FJTypeError as e:
            errors.append(e)
    return errors


def check_program(program: Union[ProgramNode, list[ClassDecl]]) -> Verdict:
    """T-Program: build the class table, then check every class independently."""
    decls = program if isinstance(program, list) else class_decls(program)
    try:
        table = check_well_formed(decls)
    except ClassTableError as e:
        return Verdict.reject([FJTypeError("T-Program", str(e))])
    errors: list[FJTypeError] = []
    for decl in decls:
        errors.extend(check_class(table, decl))
    if errors:
        logger.debug(f"Contextual check rejected with {len(errors)} errors")
        return Verdict.reject(errors)
    return Verdict.accept()
