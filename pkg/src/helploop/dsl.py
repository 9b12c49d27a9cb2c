"""Plan-call language: the textual function calls a planner emits and the world executes.

Grammar::

    call     := IDENT "(" [args] ")"
    args     := arg ("," arg)*
    arg      := kwarg | value
    kwarg    := IDENT "=" value
    value    := IDENT | NUMBER | STRING | "[" [NUMBER ("," NUMBER)*] "]"

Keyword arguments may only follow positional ones. Function names are
lowercased on parse; every other identifier keeps its case.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterator, Protocol, Union

__all__ = [
    "Ident",
    "Num",
    "Str",
    "NumList",
    "Kw",
    "PlanCall",
    "PlanSyntaxError",
    "Role",
    "Signature",
    "FunctionRegistry",
    "Violation",
    "default_registry",
    "parse_call",
    "parse_program",
    "render",
    "render_arg",
    "validate",
]


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class NumList:
    values: tuple


@dataclass(frozen=True)
class Kw:
    key: str
    value: "Value"


Value = Union[Ident, Num, Str, NumList]
Arg = Union[Value, Kw]


@dataclass(frozen=True)
class PlanCall:
    name: str
    args: tuple = ()
    source_text: str = field(default="", compare=False)
    line: int | None = field(default=None, compare=False)

    @property
    def positional(self) -> tuple:
        return tuple(a for a in self.args if not isinstance(a, Kw))

    @property
    def keywords(self) -> dict:
        return {a.key: a.value for a in self.args if isinstance(a, Kw)}

    def __str__(self) -> str:
        return render(self)


class PlanSyntaxError(SyntaxError):
    """Malformed plan text. ``offset`` is 0-based into the line, ``lineno`` 1-based."""

    def __init__(self, message: str, offset: int = 0, expected: str | None = None, lineno: int = 1):
        super().__init__(message)
        self.msg = message
        self.offset = offset
        self.expected = expected
        self.lineno = lineno

    def __str__(self) -> str:
        where = f"line {self.lineno}, offset {self.offset}"
        if self.expected:
            return f"{self.msg} ({where}; expected {self.expected})"
        return f"{self.msg} ({where})"


# ------------------------------------------------------------------------ lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>")
  | (?P<punct>[(),=\[\]])
    """,
    re.VERBOSE | re.ASCII,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r", "/": "/"}
_FUNC_NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


@dataclass
class _Tok:
    kind: str
    text: str
    value: object
    pos: int


def _read_string(text: str, start: int) -> tuple[str, int]:
    # start points just past the opening quote
    out = []
    i = start
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= n:
                break
            esc = text[i + 1]
            if esc in _ESCAPES:
                out.append(_ESCAPES[esc])
                i += 2
                continue
            if esc == "u":
                digits = text[i + 2 : i + 6]
                if len(digits) == 4 and all(c in "0123456789abcdefABCDEF" for c in digits):
                    out.append(chr(int(digits, 16)))
                    i += 6
                    continue
                raise PlanSyntaxError("bad \\u escape", i, "4 hex digits")
            raise PlanSyntaxError(f"unknown escape \\{esc}", i)
        if ch == "\n":
            raise PlanSyntaxError("newline in string literal", i, '"')
        out.append(ch)
        i += 1
    raise PlanSyntaxError("unterminated string literal", start - 1, '"')


def _tokenize(text: str) -> Iterator[_Tok]:
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PlanSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind == "ws":
            pos = m.end()
            continue
        if kind == "string":
            value, end = _read_string(text, m.end())
            yield _Tok("string", text[pos:end], value, pos)
            pos = end
            continue
        if kind == "number":
            raw = m.group()
            # "1foo" must not lex as number + ident
            if m.end() < n and (text[m.end()].isalpha() or text[m.end()] == "_"):
                raise PlanSyntaxError(f"malformed number {raw + text[m.end()]!r}", pos)
            value = float(raw) if "." in raw else int(raw)
            yield _Tok("number", raw, value, pos)
        elif kind == "ident":
            yield _Tok("ident", m.group(), m.group(), pos)
        else:
            yield _Tok(m.group(), m.group(), None, pos)
        pos = m.end()
    yield _Tok("eof", "", None, n)


# ----------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = list(_tokenize(text))
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> _Tok:
        tok = self.tok
        if tok.kind != kind:
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise PlanSyntaxError(f"unexpected {got}", tok.pos, what or repr(kind))
        return self.advance()

    def call(self) -> PlanCall:
        name_tok = self.expect("ident", "function name")
        name = name_tok.text.lower()
        if not _FUNC_NAME_RE.match(name):
            raise PlanSyntaxError(f"invalid function name {name_tok.text!r}", name_tok.pos, "name starting with a letter")
        self.expect("(", "'('")
        args: list = []
        seen_kw: set[str] = set()
        if self.tok.kind != ")":
            while True:
                arg = self.arg()
                if isinstance(arg, Kw):
                    key = arg.key.lower()
                    if key in seen_kw:
                        raise PlanSyntaxError(f"duplicate keyword {arg.key!r}", self.toks[self.i - 1].pos)
                    seen_kw.add(key)
                elif seen_kw:
                    raise PlanSyntaxError("positional argument after keyword argument", self.toks[self.i - 1].pos)
                args.append(arg)
                if self.tok.kind == ",":
                    self.advance()
                    continue
                break
        self.expect(")", "',' or ')'")
        self.expect("eof", "end of call")
        return PlanCall(name, tuple(args), source_text=self.text)

    def arg(self) -> Arg:
        tok = self.tok
        if tok.kind == "ident" and self.toks[self.i + 1].kind == "=":
            self.advance()
            self.advance()
            return Kw(tok.text, self.value())
        return self.value()

    def value(self) -> Value:
        tok = self.tok
        if tok.kind == "ident":
            self.advance()
            return Ident(tok.text)
        if tok.kind == "number":
            self.advance()
            return Num(tok.value)
        if tok.kind == "string":
            self.advance()
            return Str(tok.value)
        if tok.kind == "[":
            self.advance()
            values = []
            if self.tok.kind != "]":
                while True:
                    values.append(self.expect("number", "number").value)
                    if self.tok.kind == ",":
                        self.advance()
                        continue
                    break
            self.expect("]", "',' or ']'")
            return NumList(tuple(values))
        got = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise PlanSyntaxError(f"unexpected {got}", tok.pos, "argument")


def parse_call(text: str) -> PlanCall:
    """Parse one call expression. Surrounding whitespace is ignored."""
    if not isinstance(text, str):
        raise TypeError("parse_call expects str")
    stripped = text.strip()
    if not stripped:
        raise PlanSyntaxError("empty input", 0, "function name")
    return _Parser(stripped).call()


def parse_program(text: str) -> list[PlanCall]:
    calls = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            call = parse_call(stripped)
        except PlanSyntaxError as exc:
            indent = len(line) - len(line.lstrip())
            raise PlanSyntaxError(exc.msg, exc.offset + indent, exc.expected, lineno) from None
        calls.append(PlanCall(call.name, call.args, source_text=call.source_text, line=lineno))
    return calls


# --------------------------------------------------------------------- renderer


def _render_number(value) -> str:
    if isinstance(value, bool):
        raise TypeError("bool is not a plan number")
    if isinstance(value, int):
        return str(value)
    text = format(Decimal(repr(value)), "f")
    if "." not in text:
        text += ".0"
    return text


def _render_string(value: str) -> str:
    out = ['"']
    for ch in value:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20 or 0xD800 <= ord(ch) <= 0xDFFF:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def render_arg(arg: Arg) -> str:
    if isinstance(arg, Ident):
        return arg.name
    if isinstance(arg, Num):
        return _render_number(arg.value)
    if isinstance(arg, Str):
        return _render_string(arg.value)
    if isinstance(arg, NumList):
        return "[" + ", ".join(_render_number(v) for v in arg.values) + "]"
    if isinstance(arg, Kw):
        return f"{arg.key}={render_arg(arg.value)}"
    raise TypeError(f"not a plan argument: {arg!r}")


def render(call: PlanCall) -> str:
    return f"{call.name}(" + ", ".join(render_arg(a) for a in call.args) + ")"


# --------------------------------------------------------------------- registry


class Role(str, Enum):
    OBJECT = "object-ref"
    POSE = "pose-ref"
    POSITION = "position"
    SCALAR = "scalar"
    TEXT = "text"


@dataclass(frozen=True)
class Signature:
    name: str
    forms: tuple  # tuple of role tuples, one per accepted arity
    keywords: tuple = ()  # (lowercase key, Role) pairs

    @property
    def min_arity(self) -> int:
        return min(len(f) for f in self.forms)

    @property
    def max_arity(self) -> int:
        return max(len(f) for f in self.forms)

    def form_for(self, arity: int) -> tuple | None:
        for form in self.forms:
            if len(form) == arity:
                return form
        return None

    def keyword_role(self, key: str) -> Role | None:
        return dict(self.keywords).get(key.lower())


O, P, X, S, T = Role.OBJECT, Role.POSE, Role.POSITION, Role.SCALAR, Role.TEXT

_BUILTIN_SIGNATURES = (
    Signature("pick", ((O, P, O),)),
    Signature("place", ((O, P, O),)),
    Signature("hold", ((O, P, O),)),
    Signature("release", ((O, P, O),)),
    # the function list gives rotation(angle); the exemplars use rotation(handle, angle)
    Signature("rotation", ((S,), (O, S))),
    Signature("wait", ((S,),)),
    Signature("phone_dial", ((T,),)),
    Signature("say", ((O, T),)),
    Signature("receive_info", ((),)),
    Signature("stop", ((),)),
    Signature("move", ((X,),), keywords=(("position", X),)),
    Signature("move_base", ((X,),), keywords=(("position", X),)),
    Signature("move_arm", ((P,),)),
)


class FunctionRegistry:
    """Name -> Signature map. Extensions may add names but never replace one."""

    def __init__(self, signatures=_BUILTIN_SIGNATURES):
        self._entries: dict[str, Signature] = {}
        for sig in signatures:
            self.register(sig)

    def register(self, sig: Signature) -> None:
        key = sig.name.lower()
        if key in self._entries:
            raise ValueError(f"function {sig.name!r} already registered")
        if not _FUNC_NAME_RE.match(key):
            raise ValueError(f"function name {sig.name!r} is not parseable")
        self._entries[key] = sig

    def get(self, name: str) -> Signature | None:
        return self._entries.get(name.lower())

    def __contains__(self, name: str) -> bool:
        return name.lower() in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)


def default_registry() -> FunctionRegistry:
    return FunctionRegistry()


# ------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    kind: str  # unknown_function | arity_mismatch | type_mismatch | unknown_object | unknown_keyword
    detail: str
    index: int | None = None


class SymbolTable(Protocol):
    def has_symbol(self, name: str) -> bool: ...


def _role_accepts(role: Role, value: Value) -> bool:
    if isinstance(value, Ident):
        return True
    if role is Role.OBJECT:
        return False
    if role is Role.SCALAR:
        return isinstance(value, Num)
    if role is Role.TEXT:
        return isinstance(value, (Str, Num))
    if role is Role.POSITION:
        return isinstance(value, NumList) and len(value.values) in (2, 3)
    if role is Role.POSE:
        return isinstance(value, NumList) and len(value.values) in (3, 7)
    return False


def validate(call: PlanCall, registry: FunctionRegistry, state: SymbolTable | None = None) -> list[Violation]:
    """Static admissibility: known function, arity, argument kinds, resolvable objects.

    Object identifiers are only checked when ``state`` is given.
    """
    sig = registry.get(call.name)
    if sig is None:
        return [Violation("unknown_function", f"no function named {call.name!r}")]
    violations = []
    positional = call.positional
    form = sig.form_for(len(positional))
    if form is None:
        arities = sorted({len(f) for f in sig.forms})
        violations.append(
            Violation("arity_mismatch", f"{call.name} takes {'/'.join(map(str, arities))} arguments, got {len(positional)}")
        )
    else:
        for i, (role, value) in enumerate(zip(form, positional)):
            if not _role_accepts(role, value):
                violations.append(Violation("type_mismatch", f"argument {i + 1} must be {role.value}", i))
            elif role is Role.OBJECT and state is not None and not state.has_symbol(value.name):
                violations.append(Violation("unknown_object", f"unknown object {value.name!r}", i))
    for key, value in call.keywords.items():
        role = sig.keyword_role(key)
        if role is None:
            violations.append(Violation("unknown_keyword", f"{call.name} has no keyword {key!r}"))
        elif not _role_accepts(role, value):
            violations.append(Violation("type_mismatch", f"keyword {key} must be {role.value}"))
    return violations
