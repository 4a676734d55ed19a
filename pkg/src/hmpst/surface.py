"""Concrete syntax for hybrid types (.hmpst) and build manifests.

The type grammar:

    type     := "end" | TypeVar | "rec" TypeVar "." type
              | "(" type "|" type ")" | interaction
    interaction := role op role branches
    op       := "->" | "!" | "?"
    branches := ":" branch | "{" branch ("," branch)* "}"
    branch   := label payload? "." type
    payload  := "(" sort ")"
    sort     := "unit" | "nat" | "int" | "bool"
              | "(" sort "+" sort ")" | "(" sort "*" sort ")"

Roles and labels start lowercase, type variables start uppercase, "#"
comments run to end of line. The printer emits the canonical form:
branches label-sorted, single branches with the ":" shorthand, unit
payloads omitted, two-space indentation. parse_type(print_type(h))
returns h exactly.

Manifests (.hmanifest) are line oriented: `compat <path>`,
`component <path> roles <role>...`, `mode standard|optimised` and
`compat-roles <role>...`, with paths resolved against the manifest's
directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .compose import Component, CompositionSpec
from .kernel import (
    BaseSort,
    Branch,
    Diagnostic,
    End,
    END,
    HybridType,
    Msg,
    Par,
    ProductSort,
    Rec,
    Recv,
    Send,
    Sort,
    SumSort,
    UNIT,
    Undefined,
    Var,
)

__all__ = [
    "SourceSpan",
    "ParseError",
    "parse_type",
    "print_type",
    "parse_manifest",
    "load_manifest",
]


@dataclass(frozen=True)
class SourceSpan:
    """Half-open character range with the 1-based line/column of its start."""

    start: int
    end: int
    line: int
    column: int


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"line {span.line}, column {span.column}: {message}")
        self.message = message
        self.span = span


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>->)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<tvar>[A-Z][A-Za-z0-9_]*)
  | (?P<punct>[!?:.,{}()|*+])
    """,
    re.VERBOSE,
)

_KEYWORDS = ("end", "rec")
_BASE_SORT_NAMES = ("unit", "nat", "int", "bool")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'ident' | 'tvar' | 'arrow' | punctuation itself | 'eof'
    text: str
    span: SourceSpan


def _lex(text: str) -> list[_Token]:
    out: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            span = SourceSpan(pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        value = m.group()
        if kind in ("ws", "comment"):
            nl = value.count("\n")
            if nl:
                line += nl
                line_start = m.start() + value.rindex("\n") + 1
            pos = m.end()
            continue
        span = SourceSpan(m.start(), m.end(), line, m.start() - line_start + 1)
        if kind == "punct":
            out.append(_Token(value, value, span))
        else:
            out.append(_Token(kind, value, span))
        pos = m.end()
    out.append(_Token("eof", "", SourceSpan(pos, pos, line, pos - line_start + 1)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, what: str) -> _Token:
        t = self.next()
        if t.kind != kind:
            raise ParseError(f"expected {what}, found {t.text or 'end of input'!r}", t.span)
        return t

    def bad(self, message: str) -> ParseError:
        return ParseError(message, self.peek().span)

    # type := end | TVar | rec TVar . type | ( type | type ) | interaction
    def parse_type(self, bound: frozenset[str]) -> HybridType:
        t = self.peek()
        if t.kind == "ident" and t.text == "end":
            self.next()
            return END
        if t.kind == "ident" and t.text == "rec":
            self.next()
            var = self.expect("tvar", "a recursion variable")
            self.expect(".", "'.'")
            body = self.parse_type(bound | {var.text})
            return Rec(var.text, body)
        if t.kind == "tvar":
            self.next()
            return Var(t.text)
        if t.kind == "(":
            self.next()
            left = self.parse_type(bound)
            self.expect("|", "'|'")
            right = self.parse_type(bound)
            self.expect(")", "')'")
            return Par(left, right)
        if t.kind == "ident":
            return self.parse_interaction(bound)
        raise self.bad(f"expected a type, found {t.text or 'end of input'!r}")

    def parse_interaction(self, bound: frozenset[str]) -> HybridType:
        src = self.expect("ident", "a role")
        if src.text in _KEYWORDS:
            raise ParseError(f"{src.text!r} is reserved", src.span)
        opt = self.next()
        if opt.kind == "arrow":
            cls = Msg
        elif opt.kind == "!":
            cls = Send
        elif opt.kind == "?":
            cls = Recv
        else:
            raise ParseError(
                f"expected '->', '!' or '?', found {opt.text or 'end of input'!r}", opt.span
            )
        dst = self.expect("ident", "a role")
        if dst.text in _KEYWORDS:
            raise ParseError(f"{dst.text!r} is reserved", dst.span)
        sep = self.next()
        branches: list[Branch] = []
        spans: list[SourceSpan] = []
        if sep.kind == ":":
            b, sp = self.parse_branch(bound)
            branches.append(b)
            spans.append(sp)
        elif sep.kind == "{":
            while True:
                b, sp = self.parse_branch(bound)
                branches.append(b)
                spans.append(sp)
                t = self.next()
                if t.kind == ",":
                    continue
                if t.kind == "}":
                    break
                raise ParseError(
                    f"expected ',' or '}}', found {t.text or 'end of input'!r}", t.span
                )
        else:
            raise ParseError(
                f"expected ':' or '{{', found {sep.text or 'end of input'!r}", sep.span
            )
        seen: dict[str, SourceSpan] = {}
        for b, sp in zip(branches, spans):
            if b.label in seen:
                raise Undefined(
                    Diagnostic(
                        "duplicate-label",
                        (),
                        f"line {sp.line}, column {sp.column}: label {b.label!r} repeated",
                    )
                )
            seen[b.label] = sp
        if src.text == dst.text:
            raise Undefined(
                Diagnostic(
                    "self-message",
                    (),
                    f"line {src.span.line}, column {src.span.column}: "
                    f"role {src.text!r} interacts with itself",
                )
            )
        return cls(src.text, dst.text, tuple(branches))

    def parse_branch(self, bound: frozenset[str]) -> tuple[Branch, SourceSpan]:
        lbl = self.expect("ident", "a label")
        if lbl.text in _KEYWORDS:
            raise ParseError(f"{lbl.text!r} is reserved", lbl.span)
        payload: Sort = UNIT
        if self.peek().kind == "(":
            self.next()
            payload = self.parse_sort()
            self.expect(")", "')'")
        self.expect(".", "'.'")
        cont = self.parse_type(bound)
        return Branch(lbl.text, cont, payload), lbl.span

    def parse_sort(self) -> Sort:
        t = self.next()
        if t.kind == "ident" and t.text in _BASE_SORT_NAMES:
            return BaseSort(t.text)
        if t.kind == "(":
            left = self.parse_sort()
            op = self.next()
            if op.kind not in ("+", "*"):
                raise ParseError(f"expected '+' or '*', found {op.text or 'end of input'!r}", op.span)
            right = self.parse_sort()
            self.expect(")", "')'")
            return SumSort(left, right) if op.kind == "+" else ProductSort(left, right)
        raise ParseError(f"expected a sort, found {t.text or 'end of input'!r}", t.span)


def parse_type(text: str) -> HybridType:
    """Parse a single type, requiring the whole input to be consumed.

    Syntax problems raise ParseError; semantically malformed syntax
    (duplicate labels, self-messaging) raises Undefined.
    """
    p = _Parser(text)
    h = p.parse_type(frozenset())
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"unexpected trailing input {t.text!r}", t.span)
    return h


def _sort_text(s: Sort) -> str:
    if isinstance(s, BaseSort):
        return s.name
    op = "+" if isinstance(s, SumSort) else "*"
    return f"({_sort_text(s.left)} {op} {_sort_text(s.right)})"


def _branch_text(b: Branch, indent: int) -> str:
    payload = "" if b.payload == UNIT else f"({_sort_text(b.payload)})"
    return f"{b.label}{payload} . {_fmt(b.continuation, indent)}"


def _fmt(h: HybridType, indent: int) -> str:
    pad = " " * indent
    inner = " " * (indent + 2)
    if isinstance(h, End):
        return "end"
    if isinstance(h, Var):
        return h.name
    if isinstance(h, Rec):
        return f"rec {h.var} . {_fmt(h.body, indent)}"
    if isinstance(h, Par):
        return (
            "(\n"
            + inner
            + _fmt(h.left, indent + 2)
            + "\n"
            + pad
            + "|\n"
            + inner
            + _fmt(h.right, indent + 2)
            + "\n"
            + pad
            + ")"
        )
    op = {"Msg": "->", "Send": "!", "Recv": "?"}[type(h).__name__]
    head = f"{h.src} {op} {h.dst}"
    if len(h.branches) == 1:
        return f"{head} : {_branch_text(h.branches[0], indent)}"
    body = ",\n".join(inner + _branch_text(b, indent + 2) for b in h.branches)
    return f"{head} {{\n{body}\n{pad}}}"


def print_type(h: HybridType) -> str:
    """Canonical rendering, without a trailing newline."""
    return _fmt(h, 0)


def _manifest_error(message: str, line_no: int, text_line: str) -> ParseError:
    span = SourceSpan(0, len(text_line), line_no, 1)
    return ParseError(message, span)


def _load_type(path: Path, line_no: int) -> HybridType:
    try:
        src = path.read_text()
    except FileNotFoundError:
        raise Undefined(
            Diagnostic("missing-file", (), f"line {line_no}: no such file: {path}")
        ) from None
    return parse_type(src)


def parse_manifest(text: str, base_dir: Union[str, Path]) -> CompositionSpec:
    """Parse a manifest and load every referenced type file.

    Manifest syntax problems raise ParseError; problems with the loaded
    contents (missing files, role discipline violations) raise
    Undefined.
    """
    base = Path(base_dir)
    compat: HybridType | None = None
    components: list[Component] = []
    mode: str | None = None
    compat_roles: list[str] | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        key = words[0]
        if key == "compat":
            if len(words) != 2:
                raise _manifest_error("compat takes exactly one path", line_no, raw)
            if compat is not None:
                raise _manifest_error("duplicate compat line", line_no, raw)
            compat = _load_type(base / words[1], line_no)
        elif key == "component":
            if len(words) < 4 or words[2] != "roles":
                raise _manifest_error(
                    "component line must be: component <path> roles <role>...", line_no, raw
                )
            roles = words[3:]
            for r in roles:
                if not r[0].islower():
                    raise _manifest_error(f"role must start lowercase: {r!r}", line_no, raw)
            if len(set(roles)) != len(roles):
                raise _manifest_error("component repeats a role", line_no, raw)
            protocol = _load_type(base / words[1], line_no)
            try:
                components.append(Component(protocol, frozenset(roles)))
            except ValueError as ex:
                raise Undefined(
                    Diagnostic("manifest-component", (), f"line {line_no}: {ex}")
                ) from None
        elif key == "mode":
            if mode is not None:
                raise _manifest_error("duplicate mode line", line_no, raw)
            if len(words) != 2 or words[1] not in ("standard", "optimised"):
                raise _manifest_error("mode must be 'standard' or 'optimised'", line_no, raw)
            mode = words[1]
        elif key == "compat-roles":
            if compat_roles is not None:
                raise _manifest_error("duplicate compat-roles line", line_no, raw)
            if len(words) < 2:
                raise _manifest_error("compat-roles needs at least one role", line_no, raw)
            for r in words[1:]:
                if not r[0].islower():
                    raise _manifest_error(f"role must start lowercase: {r!r}", line_no, raw)
            compat_roles = words[1:]
        else:
            raise _manifest_error(f"unknown directive {key!r}", line_no, raw)
    if compat is None:
        raise _manifest_error("manifest has no compat line", 1, "")
    mode = mode or "standard"
    if mode == "standard" and compat_roles is not None:
        raise _manifest_error("compat-roles is only valid in optimised mode", 1, "")
    if mode == "optimised" and compat_roles is None:
        raise _manifest_error("optimised mode requires a compat-roles line", 1, "")
    try:
        return CompositionSpec(
            compat, tuple(components), mode, frozenset(compat_roles or ())
        )
    except ValueError as ex:
        raise Undefined(Diagnostic("manifest-invalid", (), str(ex))) from None


def load_manifest(path: Union[str, Path]) -> CompositionSpec:
    p = Path(path)
    return parse_manifest(p.read_text(), p.parent)
