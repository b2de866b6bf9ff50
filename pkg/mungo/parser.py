"""Recursive descent parser for Mungo source text.

The surface syntax follows the implementation notation for usages,
``u[X1 = u1 ... Xn = un]``, accepts ``⟨``/``⟩`` as well as ``<``/``>``, and
supports ``//`` line comments. Parsing stops at the first syntax error;
name-resolution and well-formedness problems are collected so a single run
reports all of them.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

from mungo.config import KEYWORDS, MAIN_CLASS, MAIN_METHOD, SOURCE_ENCODING
from mungo.errors import (
    Diagnostic,
    DiagnosticCode,
    DiagnosticError,
    SourceSpan,
    UnboundUsageVariableError,
    UnfoldCycleError,
    sort_diagnostics,
)
from mungo.syntax import (
    BOOL,
    BOTTOM,
    END,
    FALSE,
    NULL,
    TRUE,
    UNIT,
    VOID,
    Assign,
    BaseType,
    Bottom,
    Branch,
    Call,
    Choice,
    ClassDecl,
    ClassRef,
    ClassVar,
    Continue,
    DeclaredType,
    EnumDecl,
    Expr,
    FieldDecl,
    GenericVar,
    If,
    Labelled,
    LabelValue,
    Lit,
    MethodDecl,
    New,
    NewGen,
    Program,
    Ref,
    RefKind,
    Seq,
    Switch,
    TypeExpr,
    Typestate,
    Usage,
    UsageBody,
    UsageVar,
    free_usage_vars,
    walk,
)
from mungo.usages import unfold

logger = logging.getLogger(__name__)

PUNCTUATION = frozenset("{}()[]<>;:=.,")
BRACKET_ALIASES = {"⟨": "<", "⟩": ">"}


@dataclass(frozen=True)
class Token:
    """A lexical token.

    Attributes:
        kind: ``ident``, ``keyword``, ``punct`` or ``eof``
        text: The token text (aliases already normalised)
        line: Line of the first character
        col: Column of the first character
        end_line: Line just past the token
        end_col: Column just past the token
    """

    kind: str
    text: str
    line: int
    col: int
    end_line: int
    end_col: int


class _SyntaxFailure(Exception):
    def __init__(self, diagnostic: Diagnostic) -> None:
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    """Split ``text`` into tokens, dropping whitespace and ``//`` comments.

    Raises:
        DiagnosticError: On a character that starts no token
    """
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            col, i = col + 1, i + 1
            continue
        if text.startswith("//", i):
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, line, col, line, col + len(word)))
            col, i = col + len(word), j
            continue
        symbol = BRACKET_ALIASES.get(ch, ch)
        if symbol in PUNCTUATION:
            tokens.append(Token("punct", symbol, line, col, line, col + 1))
            col, i = col + 1, i + 1
            continue
        span = SourceSpan(file, line, col, line, col + 1)
        raise DiagnosticError(
            [
                Diagnostic.error(
                    DiagnosticCode.SYNTAX_ERROR, f"unexpected character {ch!r}", span
                )
            ]
        )
    tokens.append(Token("eof", "", line, col, line, col))
    return tokens


@dataclass
class _RawType:
    """A type as written, before it is known whether a usage is required."""

    name: str
    arg: TypeExpr
    usage: Usage | None
    span: SourceSpan


@dataclass
class _MethodHeader:
    name: str
    param_name: str
    param_type: TypeExpr
    return_type: TypeExpr
    body_start: int
    span: SourceSpan


class Parser:
    """Parser over a token list for one source file."""

    def __init__(self, text: str, file: str = "<input>") -> None:
        self.file = file
        self.tokens = tokenize(text, file)
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []
        self.enum_names = {
            self.tokens[i + 1].text
            for i, tok in enumerate(self.tokens[:-1])
            if tok.kind == "keyword"
            and tok.text == "enum"
            and self.tokens[i + 1].kind == "ident"
        }
        self.labels = self._scan_labels()
        self.class_var: tuple[str, str] | None = None

    def _scan_labels(self) -> set[str]:
        """Enum labels anywhere in the file, so bodies may precede the enum."""
        labels: set[str] = set()
        for i, tok in enumerate(self.tokens):
            if tok.kind != "keyword" or tok.text != "enum":
                continue
            if i + 2 >= len(self.tokens) or self.tokens[i + 2].text != "{":
                continue
            j = i + 3
            while j < len(self.tokens) and self.tokens[j].kind == "ident":
                labels.add(self.tokens[j].text)
                j += 1
                if self.tokens[j].text == ",":
                    j += 1
        return labels

    # -- token helpers -----------------------------------------------------

    def _peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def _at(self, text: str, offset: int = 0) -> bool:
        tok = self._peek(offset)
        return tok.kind != "eof" and tok.text == text

    def _span(self, start: Token, end: Token | None = None) -> SourceSpan:
        last = end or self.tokens[max(self.pos - 1, 0)]
        if (last.end_line, last.end_col) < (start.line, start.col):
            last = start
        return SourceSpan(self.file, start.line, start.col, last.end_line, last.end_col)

    def _fail(self, message: str, tok: Token | None = None) -> _SyntaxFailure:
        tok = tok or self._peek()
        span = SourceSpan(self.file, tok.line, tok.col, tok.end_line, tok.end_col)
        return _SyntaxFailure(
            Diagnostic.error(DiagnosticCode.SYNTAX_ERROR, message, span)
        )

    def _expect(self, text: str) -> Token:
        tok = self._peek()
        if tok.kind == "eof" or tok.text != text:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self._fail(f"expected {text!r}, found {found}")
        return self._advance()

    def _ident(self, what: str = "identifier") -> Token:
        tok = self._peek()
        if tok.kind != "ident":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self._fail(f"expected {what}, found {found}")
        return self._advance()

    def _report(self, code: DiagnosticCode, message: str, span: SourceSpan) -> None:
        self.diagnostics.append(Diagnostic.error(code, message, span))

    # -- usages ------------------------------------------------------------

    def parse_usage(self) -> Usage:
        """``cont ('[' (X '=' body)* ']')?``"""
        body = self._parse_cont()
        equations: list[tuple[str, UsageBody]] = []
        if self._at("["):
            self._advance()
            seen: set[str] = set()
            while not self._at("]"):
                var = self._ident("usage variable")
                self._expect("=")
                if var.text in seen:
                    self._report(
                        DiagnosticCode.DUPLICATE_NAME,
                        f"usage variable '{var.text}' is defined twice",
                        self._span(var),
                    )
                seen.add(var.text)
                equations.append((var.text, self._parse_cont()))
            self._expect("]")
        return Usage(body, tuple(equations))

    def _parse_cont(self) -> UsageBody:
        if self._at("<"):
            self._advance()
            labels: list[tuple[str, UsageBody]] = []
            while not self._at(">"):
                label = self._ident("label")
                self._expect(":")
                labels.append((label.text, self._parse_usage_body()))
            self._expect(">")
            return Choice(tuple(labels))
        return self._parse_usage_body()

    def _parse_usage_body(self) -> UsageBody:
        tok = self._peek()
        if tok.text == "end" and tok.kind == "keyword":
            self._advance()
            return END
        if tok.text == "{":
            self._advance()
            methods: list[tuple[str, UsageBody]] = []
            while not self._at("}"):
                method = self._ident("method name")
                self._expect(";")
                methods.append((method.text, self._parse_cont()))
            self._expect("}")
            return Branch(tuple(methods))
        if tok.kind == "ident":
            self._advance()
            return UsageVar(tok.text)
        raise self._fail(f"expected a usage, found {tok.text or 'end of input'!r}")

    # -- types -------------------------------------------------------------

    def _parse_raw_type(self) -> _RawType:
        start = self._peek()
        if start.text in ("void", "bool") and start.kind == "keyword":
            self._advance()
            return _RawType(start.text, BOTTOM, None, self._span(start))
        name = self._ident("type")
        arg: TypeExpr = BOTTOM
        if self._at("<"):
            self._advance()
            arg = self._parse_instantiation()
            self._expect(">")
        usage = None
        if self._at("["):
            self._advance()
            usage = self.parse_usage()
            self._expect("]")
        return _RawType(name.text, arg, usage, self._span(start))

    def _parse_instantiation(self) -> TypeExpr:
        raw = self._parse_raw_type()
        if raw.usage is None:
            raise self._fail(
                f"type argument '{raw.name}' needs a usage in brackets", self._peek()
            )
        return self._as_type(raw)

    def _as_type(self, raw: _RawType) -> TypeExpr:
        """Interpret ``raw`` as a parameter, return or argument type."""
        if raw.usage is None:
            if raw.name == "void":
                return VOID
            if raw.name == "bool":
                return BOOL
            if raw.name in self.enum_names:
                return BaseType(raw.name)
            if self.class_var is not None and raw.name == self.class_var[0]:
                raise _SyntaxFailure(
                    Diagnostic.error(
                        DiagnosticCode.SYNTAX_ERROR,
                        f"class parameter '{raw.name}' needs its usage parameter",
                        raw.span,
                    )
                )
            raise _SyntaxFailure(
                Diagnostic.error(
                    DiagnosticCode.SYNTAX_ERROR,
                    f"class type '{raw.name}' needs a usage in brackets",
                    raw.span,
                )
            )
        if self.class_var is not None and raw.name == self.class_var[0]:
            body = raw.usage.body
            if isinstance(body, UsageVar) and not raw.usage.equations:
                if body.name != self.class_var[1]:
                    self._report(
                        DiagnosticCode.UNDECLARED_NAME,
                        f"usage parameter '{body.name}' is not declared",
                        raw.span,
                    )
                return GenericVar(raw.name, body.name)
        return Typestate(raw.name, raw.arg, raw.usage)

    def _as_declared(self, raw: _RawType) -> DeclaredType:
        if raw.usage is not None:
            raise _SyntaxFailure(
                Diagnostic.error(
                    DiagnosticCode.SYNTAX_ERROR,
                    f"field type '{raw.name}' cannot carry a usage",
                    raw.span,
                )
            )
        if raw.name == "void":
            return VOID
        if raw.name == "bool":
            return BOOL
        if raw.name in self.enum_names:
            return BaseType(raw.name)
        if self.class_var is not None and raw.name == self.class_var[0]:
            return ClassVar(raw.name)
        return ClassRef(raw.name, raw.arg)

    # -- declarations ------------------------------------------------------

    def parse_program(self) -> Program:
        start = self._peek()
        enums: list[EnumDecl] = []
        classes: list[ClassDecl] = []
        while self._peek().kind != "eof":
            if self._at("enum"):
                enums.append(self._parse_enum())
            elif self._at("class"):
                classes.append(self._parse_class())
            else:
                raise self._fail(
                    f"expected 'enum' or 'class', found {self._peek().text!r}"
                )
        return Program(tuple(enums), tuple(classes), span=self._span(start))

    def _parse_enum(self) -> EnumDecl:
        start = self._expect("enum")
        name = self._ident("enum name")
        self._expect("{")
        labels: list[str] = []
        while not self._at("}"):
            labels.append(self._ident("label").text)
            if self._at(","):
                self._advance()
        self._expect("}")
        return EnumDecl(name.text, tuple(labels), span=self._span(start))

    def _parse_class(self) -> ClassDecl:
        start = self._expect("class")
        generic: tuple[str, str] | None = None
        if self._at("<"):
            self._advance()
            cvar = self._ident("class parameter")
            self._expect("[")
            uvar = self._ident("usage parameter")
            self._expect("]")
            self._expect(">")
            generic = (cvar.text, uvar.text)
        name = self._ident("class name")
        self.class_var = generic
        self._expect("{")
        usage = self.parse_usage()
        fields: list[FieldDecl] = []
        headers: list[_MethodHeader] = []
        while not self._at("}"):
            member_start = self._peek()
            raw = self._parse_raw_type()
            member = self._ident("member name")
            if self._at("("):
                headers.append(self._parse_method_header(raw, member, member_start))
            else:
                fields.append(
                    FieldDecl(
                        member.text, self._as_declared(raw), span=self._span(member_start)
                    )
                )
        end = self._expect("}")
        resume = self.pos
        field_names = {f.name for f in fields}
        methods = [self._parse_method_body(h, field_names) for h in headers]
        self.pos = resume
        self.class_var = None
        return ClassDecl(
            name.text,
            generic,
            usage,
            tuple(fields),
            tuple(methods),
            span=self._span(start, end),
        )

    def _parse_method_header(
        self, raw: _RawType, member: Token, start: Token
    ) -> _MethodHeader:
        return_type = self._as_type(raw)
        self._expect("(")
        if self._at(")"):
            param_type: TypeExpr = VOID
            param_name = "x"
        else:
            param_type = self._as_type(self._parse_raw_type())
            param_name = self._ident("parameter name").text
        self._expect(")")
        brace = self._expect("{")
        body_start = self.pos
        depth = 1
        while depth:
            tok = self._advance()
            if tok.kind == "eof":
                raise self._fail("unterminated method body", brace)
            if tok.text == "{" and tok.kind == "punct":
                depth += 1
            elif tok.text == "}" and tok.kind == "punct":
                depth -= 1
        return _MethodHeader(
            member.text, param_name, param_type, return_type, body_start, self._span(start)
        )

    def _parse_method_body(
        self, header: _MethodHeader, field_names: set[str]
    ) -> MethodDecl:
        self.pos = header.body_start
        scope = _Scope(header.param_name, field_names, self.labels)
        body = self.parse_expression(scope)
        self._expect("}")
        return MethodDecl(
            header.name,
            header.param_name,
            header.param_type,
            header.return_type,
            body,
            span=header.span,
        )

    # -- expressions -------------------------------------------------------

    def parse_expression(self, scope: "_Scope") -> Expr:
        """``term (';' expr)?``"""
        start = self._peek()
        first = self._parse_term(scope)
        if self._at(";"):
            self._advance()
            second = self.parse_expression(scope)
            return Seq(first, second, span=self._span(start))
        return first

    def _parse_term(self, scope: "_Scope") -> Expr:
        start = self._peek()
        text = start.text
        if start.kind == "punct" and text == "(":
            self._advance()
            inner = self.parse_expression(scope)
            self._expect(")")
            return inner
        if start.kind == "keyword":
            return self._parse_keyword_term(start, scope)
        if start.kind != "ident":
            raise self._fail(
                f"expected an expression, found {text or 'end of input'!r}"
            )
        if self._at(":", 1):
            return self._parse_labelled(scope)
        if self._at("=", 1):
            self._advance()
            self._advance()
            if text not in scope.fields:
                self._report(
                    DiagnosticCode.UNDECLARED_NAME,
                    f"'{text}' is not a field of this class",
                    self._span(start, start),
                )
            value = self._parse_term(scope)
            return Assign(text, value, span=self._span(start))
        if self._at(".", 1):
            return self._parse_call(scope)
        self._advance()
        span = self._span(start, start)
        if text == scope.param:
            return Ref(text, RefKind.PARAM, span=span)
        if text in scope.fields:
            return Ref(text, RefKind.FIELD, span=span)
        if text in scope.labels:
            return Lit(LabelValue(text), span=span)
        self._report(DiagnosticCode.UNDECLARED_NAME, f"'{text}' is not declared", span)
        return Ref(text, RefKind.FIELD, span=span)

    def _parse_keyword_term(self, start: Token, scope: "_Scope") -> Expr:
        literals = {"unit": UNIT, "true": TRUE, "false": FALSE, "null": NULL}
        text = start.text
        if text in literals:
            self._advance()
            return Lit(literals[text], span=self._span(start, start))
        if text == "new":
            self._advance()
            cls = self._ident("class name")
            if self._at("<"):
                self._advance()
                arg = self._parse_instantiation()
                self._expect(">")
                return NewGen(cls.text, arg, span=self._span(start))
            return New(cls.text, span=self._span(start))
        if text == "if":
            self._advance()
            self._expect("(")
            cond = self.parse_expression(scope)
            self._expect(")")
            self._expect("{")
            then = self.parse_expression(scope)
            self._expect("}")
            self._expect("else")
            self._expect("{")
            orelse = self.parse_expression(scope)
            self._expect("}")
            return If(cond, then, orelse, span=self._span(start))
        if text == "switch":
            return self._parse_switch(scope)
        if text == "continue":
            self._advance()
            label = self._ident("loop label")
            if label.text not in scope.loops:
                self._report(
                    DiagnosticCode.UNDECLARED_LOOP_LABEL,
                    f"'continue {label.text}' is not inside loop '{label.text}'",
                    self._span(start),
                )
            return Continue(label.text, span=self._span(start))
        raise self._fail(f"unexpected keyword {text!r}")

    def _parse_labelled(self, scope: "_Scope") -> Expr:
        start = self._advance()
        self._expect(":")
        if start.text in scope.used_loops:
            self._report(
                DiagnosticCode.DUPLICATE_LOOP_LABEL,
                f"loop label '{start.text}' is used twice in this method",
                self._span(start, start),
            )
        scope.used_loops.add(start.text)
        scope.loops.append(start.text)
        try:
            body = self._parse_term(scope)
        finally:
            scope.loops.pop()
        return Labelled(start.text, body, span=self._span(start))

    def _parse_target(self, scope: "_Scope") -> Ref:
        tok = self._ident("receiver")
        span = self._span(tok, tok)
        if tok.text == scope.param:
            return Ref(tok.text, RefKind.PARAM, span=span)
        if tok.text not in scope.fields:
            self._report(
                DiagnosticCode.UNDECLARED_NAME,
                f"receiver '{tok.text}' is neither the parameter nor a field",
                span,
            )
        return Ref(tok.text, RefKind.FIELD, span=span)

    def _parse_call(self, scope: "_Scope") -> Call:
        start = self._peek()
        target = self._parse_target(scope)
        self._expect(".")
        method = self._ident("method name")
        self._expect("(")
        if self._at(")"):
            arg: Expr = Lit(UNIT, span=self._span(self._peek(), self._peek()))
        else:
            arg = self.parse_expression(scope)
        self._expect(")")
        return Call(target, method.text, arg, span=self._span(start))

    def _parse_switch(self, scope: "_Scope") -> Switch:
        start = self._expect("switch")
        self._expect("(")
        if not (self._peek().kind == "ident" and self._at(".", 1)):
            raise self._fail("switch must scrutinise a method call 'r.m(e)'")
        scrutinee = self._parse_call(scope)
        self._expect(")")
        self._expect("{")
        branches: list[tuple[str, Expr]] = []
        seen: set[str] = set()
        while not self._at("}"):
            label = self._ident("switch label")
            self._expect(":")
            if label.text not in scope.labels:
                self._report(
                    DiagnosticCode.UNDECLARED_NAME,
                    f"label '{label.text}' is not declared",
                    self._span(label, label),
                )
            if label.text in seen:
                self._report(
                    DiagnosticCode.DUPLICATE_NAME,
                    f"switch label '{label.text}' appears twice",
                    self._span(label, label),
                )
            seen.add(label.text)
            branches.append((label.text, self.parse_expression(scope)))
        self._expect("}")
        if not branches:
            raise self._fail("switch needs at least one branch", start)
        return Switch(
            scrutinee.target,
            scrutinee.method,
            scrutinee,
            tuple(branches),
            span=self._span(start),
        )


@dataclass
class _Scope:
    """Names visible inside one method body."""

    param: str
    fields: set[str]
    labels: set[str]

    def __post_init__(self) -> None:
        self.loops: list[str] = []
        self.used_loops: set[str] = set()


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


class _Validator:
    """Checks the structural invariants of a parsed program."""

    def __init__(self, program: Program, file: str) -> None:
        self.program = program
        self.file = file
        self.diagnostics: list[Diagnostic] = []

    def _report(
        self, code: DiagnosticCode, message: str, span: SourceSpan | None
    ) -> None:
        self.diagnostics.append(Diagnostic.error(code, message, span))

    def run(self) -> list[Diagnostic]:
        self._check_names()
        for decl in self.program.classes:
            self._check_class(decl)
        self._check_main()
        return self.diagnostics

    def _check_names(self) -> None:
        seen: dict[str, str] = {}
        for decl in (*self.program.enums, *self.program.classes):
            kind = "enum" if isinstance(decl, EnumDecl) else "class"
            if decl.name in seen:
                self._report(
                    DiagnosticCode.DUPLICATE_NAME,
                    f"{kind} '{decl.name}' clashes with {seen[decl.name]} '{decl.name}'",
                    decl.span,
                )
            seen[decl.name] = kind
        owners: dict[str, str] = {}
        for enum in self.program.enums:
            if not enum.labels:
                self._report(
                    DiagnosticCode.EMPTY_ENUM, f"enum '{enum.name}' has no labels", enum.span
                )
            for label in enum.labels:
                if label in owners:
                    self._report(
                        DiagnosticCode.DUPLICATE_NAME,
                        f"label '{label}' is declared by both '{owners[label]}' and '{enum.name}'",
                        enum.span,
                    )
                owners.setdefault(label, enum.name)

    def _check_class(self, decl: ClassDecl) -> None:
        names: set[str] = set()
        for f in decl.fields:
            if f.name in names:
                self._report(
                    DiagnosticCode.DUPLICATE_NAME,
                    f"field '{f.name}' is declared twice in '{decl.name}'",
                    f.span,
                )
            names.add(f.name)
            self._check_declared(f.type, f.span)
            if isinstance(f.type, BaseType) and self.program.is_enum(f.type.name):
                self._report(
                    DiagnosticCode.ENUM_FIELD,
                    f"field '{f.name}' has enum type '{f.type.name}', which has no initial value",
                    f.span,
                )
        methods: set[str] = set()
        for m in decl.methods:
            if m.name in methods:
                self._report(
                    DiagnosticCode.DUPLICATE_NAME,
                    f"method '{m.name}' is declared twice in '{decl.name}'",
                    m.span,
                )
            methods.add(m.name)
            self._check_type(m.param_type, m.span)
            self._check_type(m.return_type, m.span)
            self._check_body(m)
        if isinstance(decl.usage.body, Choice):
            self._report(
                DiagnosticCode.INVALID_CHOICE,
                f"the usage of '{decl.name}' must start with a method branch",
                decl.span,
            )
        self._check_usage(decl.usage, decl.name, decl.span)

    def _check_declared(self, t: DeclaredType, span: SourceSpan | None) -> None:
        if isinstance(t, ClassRef):
            self._check_class_use(t.name, t.arg, span)
            self._check_type(t.arg, span)

    def _check_type(self, t: TypeExpr, span: SourceSpan | None) -> None:
        match t:
            case BaseType(name):
                if name not in ("void", "bool") and not self.program.is_enum(name):
                    self._report(
                        DiagnosticCode.UNDECLARED_NAME, f"type '{name}' is not declared", span
                    )
            case Typestate(name, arg, usage):
                if self._check_class_use(name, arg, span):
                    self._check_usage(usage, name, span)
                self._check_type(arg, span)
            case _:
                pass

    def _check_class_use(self, name: str, arg: TypeExpr, span: SourceSpan | None) -> bool:
        decl = self.program.class_map.get(name)
        if decl is None:
            self._report(
                DiagnosticCode.UNDECLARED_NAME, f"class '{name}' is not declared", span
            )
            return False
        if decl.is_generic == isinstance(arg, Bottom):
            expected = "a type argument" if decl.is_generic else "no type argument"
            self._report(
                DiagnosticCode.ARITY_MISMATCH, f"class '{name}' expects {expected}", span
            )
        return True

    def _check_usage(self, usage: Usage, class_name: str, span: SourceSpan | None) -> None:
        bound = usage.equation_map
        bodies = [usage.body, *bound.values()]
        for var in sorted({v for b in bodies for v in free_usage_vars(b)}):
            if var not in bound:
                self._report(
                    DiagnosticCode.UNBOUND_USAGE_VARIABLE,
                    f"usage variable '{var}' has no equation",
                    span,
                )
                return
        for var in bound:
            try:
                unfold(usage.with_body(UsageVar(var)))
            except UnfoldCycleError as e:
                self._report(DiagnosticCode.UNFOLD_CYCLE, str(e), span)
                return
            except UnboundUsageVariableError as e:  # pragma: no cover
                self._report(DiagnosticCode.UNBOUND_USAGE_VARIABLE, str(e), span)
                return
        decl = self.program.class_map.get(class_name)
        for body in bodies:
            self._check_usage_body(body, decl, span)

    def _check_usage_body(
        self, body: UsageBody, decl: ClassDecl | None, span: SourceSpan | None
    ) -> None:
        match body:
            case Branch(methods):
                for name, cont in methods:
                    if decl is not None and name not in decl.method_map:
                        self._report(
                            DiagnosticCode.UNDECLARED_METHOD_IN_USAGE,
                            f"usage of '{decl.name}' mentions undeclared method '{name}'",
                            span,
                        )
                    self._check_usage_body(cont, decl, span)
            case Choice(labels):
                owners = {self.program.label_owner.get(lbl) for lbl, _ in labels}
                if None in owners or len(owners) != 1:
                    self._report(
                        DiagnosticCode.INVALID_CHOICE,
                        "choice labels must be declared by a single enum",
                        span,
                    )
                for _, cont in labels:
                    self._check_usage_body(cont, decl, span)
            case _:
                pass

    def _check_body(self, method: MethodDecl) -> None:
        for sub in walk(method.body):
            match sub:
                case New(cls):
                    self._check_class_use(cls, BOTTOM, sub.span)
                case NewGen(cls, arg):
                    if self._check_class_use(cls, arg, sub.span):
                        self._check_type(arg, sub.span)
                case _:
                    pass

    def _check_main(self) -> None:
        main = self.program.class_map.get(MAIN_CLASS)
        end = SourceSpan(self.file, 1, 1, 1, 1)
        if main is None:
            self._report(
                DiagnosticCode.MISSING_MAIN_CLASS,
                f"program has no class named '{MAIN_CLASS}'",
                self.program.span or end,
            )
            return
        expected = Usage(Branch(((MAIN_METHOD, END),)))
        method = main.method_map.get(MAIN_METHOD)
        if (
            main.is_generic
            or main.usage != expected
            or method is None
            or method.param_type != VOID
            or method.return_type != VOID
        ):
            self._report(
                DiagnosticCode.INVALID_MAIN,
                f"class '{MAIN_CLASS}' must have usage {{{MAIN_METHOD}; end}} "
                f"and a method 'void {MAIN_METHOD}(void x)'",
                main.span,
            )


def parse_program(text: str, file: str = "<input>") -> Program:
    """Parse and validate a complete program.

    Args:
        text: Source text
        file: Name used in diagnostic spans

    Returns:
        The program, satisfying every structural invariant

    Raises:
        DiagnosticError: With the syntax error, or with every structural
            problem found, in deterministic order
    """
    try:
        parser = Parser(text, file)
        program = parser.parse_program()
        if parser.pos < len(parser.tokens) - 1:  # pragma: no cover
            raise parser._fail("unexpected trailing input")
    except _SyntaxFailure as failure:
        raise DiagnosticError([failure.diagnostic]) from None
    diagnostics = parser.diagnostics + _Validator(program, file).run()
    if diagnostics:
        logger.debug("%s: %d structural diagnostics", file, len(diagnostics))
        raise DiagnosticError(sort_diagnostics(diagnostics))
    return program


def parse_file(path: Path) -> Program:
    """Read and parse a ``.mungo`` file.

    Raises:
        DiagnosticError: On I/O failure (``IoError``) or any parse problem
    """
    try:
        text = path.read_text(encoding=SOURCE_ENCODING)
    except (OSError, UnicodeDecodeError) as e:
        raise DiagnosticError(
            [Diagnostic.error(DiagnosticCode.IO_ERROR, f"cannot read {path}: {e}")]
        ) from e
    return parse_program(text, str(path))


def parse_usage(text: str) -> Usage:
    """Parse a standalone usage such as ``{open; X}[X = {close; end}]``."""
    try:
        parser = Parser(text)
        usage = parser.parse_usage()
        if parser._peek().kind != "eof":
            raise parser._fail("unexpected input after usage")
    except _SyntaxFailure as failure:
        raise DiagnosticError([failure.diagnostic]) from None
    return usage
