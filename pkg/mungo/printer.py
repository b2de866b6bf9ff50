"""Rendering of programs, usages, types and run-time expressions as text.

Source forms print in the concrete syntax accepted by :mod:`mungo.parser`,
so that parsing a printed program yields an equal program. Run-time forms
(object identities, ``return{...}`` and tagged switches) print in a
readable notation used by traces and diagnostics only.
"""

from mungo.syntax import (
    Assign,
    BaseType,
    BoolValue,
    Bottom,
    Branch,
    Call,
    Choice,
    ClassDecl,
    ClassRef,
    ClassVar,
    Continue,
    DeclaredType,
    End,
    EnumDecl,
    Expr,
    GenericVar,
    If,
    Labelled,
    LabelValue,
    Lit,
    MethodDecl,
    New,
    NewGen,
    NullValue,
    ObjectRef,
    Program,
    Ref,
    Return,
    Seq,
    Switch,
    TopUsage,
    TypeExpr,
    Typestate,
    UnitValue,
    Usage,
    UsageBody,
    UsageVar,
    Value,
)

INDENT = "  "


def format_usage_body(body: UsageBody) -> str:
    match body:
        case Branch(methods):
            inner = " ".join(f"{m}; {format_usage_body(w)}" for m, w in methods)
            return "{" + inner + "}"
        case Choice(labels):
            inner = " ".join(f"{lbl}: {format_usage_body(u)}" for lbl, u in labels)
            return "<" + inner + ">"
        case UsageVar(name):
            return name
        case End():
            return "end"
        case TopUsage():
            return "⊤"


def format_usage(usage: Usage) -> str:
    text = format_usage_body(usage.body)
    if usage.equations:
        eqs = " ".join(f"{x} = {format_usage_body(u)}" for x, u in usage.equations)
        text += f"[{eqs}]"
    return text


def format_type(t: TypeExpr) -> str:
    match t:
        case BaseType(name):
            return name
        case Bottom():
            return "⊥"
        case GenericVar(cvar, uvar):
            return f"{cvar}[{uvar}]"
        case Typestate(name, arg, usage):
            generic = "" if isinstance(arg, Bottom) else f"<{format_type(arg)}>"
            return f"{name}{generic}[{format_usage(usage)}]"


def format_declared(t: DeclaredType) -> str:
    match t:
        case BaseType(name) | ClassVar(name):
            return name
        case ClassRef(name, arg):
            if isinstance(arg, Bottom):
                return name
            return f"{name}<{format_type(arg)}>"


def format_value(v: Value) -> str:
    match v:
        case UnitValue():
            return "unit"
        case BoolValue(flag):
            return "true" if flag else "false"
        case NullValue():
            return "null"
        case LabelValue(label):
            return label
        case ObjectRef(oid):
            return oid


def _term(e: Expr) -> str:
    """Print ``e`` where only a single term is allowed."""
    if isinstance(e, Seq):
        return f"({format_expr(e)})"
    return format_expr(e)


def format_expr(e: Expr) -> str:
    match e:
        case Lit(value):
            return format_value(value)
        case Ref(name, _):
            return name
        case New(cls):
            return f"new {cls}"
        case NewGen(cls, arg):
            return f"new {cls}<{format_type(arg)}>"
        case Assign(name, value):
            return f"{name} = {_term(value)}"
        case Call(target, method, arg):
            return f"{target.name}.{method}({format_expr(arg)})"
        case Seq(first, second):
            return f"{_term(first)}; {format_expr(second)}"
        case If(cond, then, orelse):
            return (
                f"if ({format_expr(cond)}) {{ {format_expr(then)} }} "
                f"else {{ {format_expr(orelse)} }}"
            )
        case Switch(target, method, scrutinee, branches):
            arms = " ".join(f"{lbl}: {format_expr(b)}" for lbl, b in branches)
            if (
                isinstance(scrutinee, Call)
                and scrutinee.target == target
                and scrutinee.method == method
            ):
                return f"switch ({format_expr(scrutinee)}) {{ {arms} }}"
            return (
                f"switch[{target.name}.{method}] ({format_expr(scrutinee)}) "
                f"{{ {arms} }}"
            )
        case Labelled(label, body):
            return f"{label}: {_term(body)}"
        case Continue(label):
            return f"continue {label}"
        case Return(body):
            return f"return{{{format_expr(body)}}}"


def expr_head(e: Expr) -> str:
    """One-word description of the outermost form of ``e``."""
    match e:
        case Lit(value):
            return format_value(value)
        case Ref(name, _):
            return name
        case Call(target, method, _):
            return f"{target.name}.{method}(..)"
        case Switch(target, method, _, _):
            return f"switch[{target.name}.{method}]"
        case Labelled(label, _):
            return f"{label}:"
        case Continue(label):
            return f"continue {label}"
        case Return():
            return "return{..}"
        case Assign(name, _):
            return f"{name} = .."
        case Seq():
            return ".. ; .."
        case If():
            return "if"
        case New(cls) | NewGen(cls, _):
            return f"new {cls}"


def _format_enum(decl: EnumDecl) -> str:
    return f"enum {decl.name} {{ {' '.join(decl.labels)} }}"


def _format_method(method: MethodDecl) -> str:
    return (
        f"{INDENT}{format_type(method.return_type)} {method.name}"
        f"({format_type(method.param_type)} {method.param_name}) "
        f"{{ {format_expr(method.body)} }}"
    )


def _format_class(decl: ClassDecl) -> str:
    header = "class"
    if decl.generic is not None:
        header += f"<{decl.generic[0]}[{decl.generic[1]}]>"
    lines = [f"{header} {decl.name} {{", INDENT + format_usage(decl.usage)]
    lines.extend(f"{INDENT}{format_declared(f.type)} {f.name}" for f in decl.fields)
    lines.extend(_format_method(m) for m in decl.methods)
    lines.append("}")
    return "\n".join(lines)


def print_program(program: Program) -> str:
    """Render ``program`` in the concrete syntax."""
    blocks = [_format_enum(e) for e in program.enums]
    blocks.extend(_format_class(c) for c in program.classes)
    return "\n\n".join(blocks) + "\n" if blocks else ""
