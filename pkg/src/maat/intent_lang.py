"""Intent DSL: tokenizer, recursive-descent parser, AST and canonical renderer.

An intent sentence is written ``<verb, object, modifiers..., subject>`` where
the subject may itself be a sentence::

    <allocate, ip_multicast, (ttl=32,essential),
      <discover, GoogleDocs, (userID=92cd701c0be,essential), NULL>>

Grammar (whitespace between tokens is insignificant)::

    intent    ::= '<' verb ',' object (',' element)* '>'
    element   ::= modclause | subject      ; last element is the subject
    subject   ::= 'NULL' | atom | intent
    modclause ::= 'NULL' | mod ('&' mod)*
    mod       ::= '(' key cmp value (',' tag)? ')'
    cmp       ::= '=' | '<' | '>' | '<=' | '>='
    tag       ::= 'essential' | 'desirable'

Comparators only split atoms inside a modifier, and only once per modifier,
so URLs and query strings survive as single atoms.
"""
from __future__ import annotations

import enum
import ipaddress
import math
import re
import unicodedata
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, NamedTuple, Union

DEFAULT_MAX_DEPTH = 8

COMPARATORS = ("=", "<", ">", "<=", ">=")

VERB_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*\Z")
_NUMBER_RE = re.compile(r"([+-]?\d+(?:\.\d+)?)([A-Za-z%]*)\Z")

# Atom runs stop at delimiters, whitespace and control characters (category Cc);
# before the comparator of a modifier they also stop at '='.
_ATOM_RUN = re.compile(r"[^<>(),&\s\x00-\x1f\x7f-\x9f]+")
_KEY_RUN = re.compile(r"[^<>(),&=\s\x00-\x1f\x7f-\x9f]+")
_SPACE_RUN = re.compile(r"\s+")

# Units recognised on quantities, with a factor to the dimension's base unit.
# Anything else after a number (e.g. a hex user id "92cd701c0be") is text.
UNITS: dict[str, tuple[str, Decimal]] = {
    "": ("scalar", Decimal(1)),
    "ns": ("time", Decimal("0.000001")),
    "us": ("time", Decimal("0.001")),
    "ms": ("time", Decimal(1)),
    "s": ("time", Decimal(1000)),
    "min": ("time", Decimal(60000)),
    "h": ("time", Decimal(3600000)),
    "bps": ("rate", Decimal(1)),
    "kbps": ("rate", Decimal(10) ** 3),
    "mbps": ("rate", Decimal(10) ** 6),
    "gbps": ("rate", Decimal(10) ** 9),
    "b": ("size", Decimal(1)),
    "kb": ("size", Decimal(10) ** 3),
    "mb": ("size", Decimal(10) ** 6),
    "gb": ("size", Decimal(10) ** 9),
    "%": ("percent", Decimal(1)),
    "hops": ("hops", Decimal(1)),
}


# --------------------------------------------------------------------------
# Diagnostics

@dataclass(frozen=True)
class ParseDiagnostic:
    offset: int  # byte offset into the UTF-8 source
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class IntentSyntaxError(ValueError):
    """Raised when source text is not a well-formed intent."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class UnterminatedInput(IntentSyntaxError):
    pass


class IllegalCharacter(IntentSyntaxError):
    pass


class DepthExceeded(IntentSyntaxError):
    pass


def _diagnostic(source: str, pos: int, message: str) -> ParseDiagnostic:
    pos = max(0, min(pos, len(source)))
    prefix = source[:pos]
    line = prefix.count("\n") + 1
    column = pos - (prefix.rfind("\n") + 1) + 1
    offset = len(prefix.encode("utf-8", "surrogatepass"))
    return ParseDiagnostic(offset, line, column, message)


# --------------------------------------------------------------------------
# Values

@dataclass(frozen=True)
class Quantity:
    number: int | float
    unit: str = ""

    def __post_init__(self):
        if isinstance(self.number, bool) or not isinstance(self.number, (int, float)):
            raise TypeError(f"quantity number must be int or float, got {self.number!r}")
        if not math.isfinite(self.number):
            raise ValueError("quantity must be finite")
        if self.unit.lower() not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")

    @property
    def dimension(self) -> str:
        return UNITS[self.unit.lower()][0]

    def base(self) -> Decimal:
        """Magnitude in the base unit of its dimension (ms for time)."""
        return Decimal(repr(self.number) if isinstance(self.number, float) else self.number) * UNITS[self.unit.lower()][1]


@dataclass(frozen=True)
class Cidr:
    address: str
    prefix: int

    def __post_init__(self):
        addr = ipaddress.ip_address(self.address)
        if isinstance(self.prefix, bool) or not isinstance(self.prefix, int):
            raise TypeError("prefix must be an int")
        if not 0 <= self.prefix <= addr.max_prefixlen:
            raise ValueError(f"prefix /{self.prefix} out of range for {addr}")
        object.__setattr__(self, "address", str(addr))

    @property
    def network(self) -> ipaddress.IPv4Network | ipaddress.IPv6Network:
        return ipaddress.ip_network(f"{self.address}/{self.prefix}", strict=False)


@dataclass(frozen=True)
class Text:
    text: str

    def __post_init__(self):
        if not isinstance(parse_value(self.text), Text):
            raise ValueError(f"{self.text!r} reads as a number or CIDR, not text")


TypedValue = Union[Quantity, Cidr, Text]


def _format_number(x: int | float) -> str:
    if isinstance(x, int):
        return str(x)
    r = repr(x)
    if "e" in r or "E" in r:
        r = format(Decimal(r), "f")
        if "." not in r:
            r += ".0"
    return r


def render_value(v: TypedValue) -> str:
    if isinstance(v, Quantity):
        return _format_number(v.number) + v.unit
    if isinstance(v, Cidr):
        return f"{v.address}/{v.prefix}"
    return v.text


def parse_value(raw: str) -> TypedValue:
    """Classify a modifier value atom as a quantity, CIDR block or text."""
    if not raw:
        raise ValueError("empty value")
    m = _NUMBER_RE.match(raw)
    if m and m.group(2).lower() in UNITS:
        num = m.group(1)
        number: int | float = float(num) if "." in num else int(num)
        return Quantity(number, m.group(2))
    if raw.count("/") == 1:
        addr, _, plen = raw.partition("/")
        if plen.isascii() and plen.isdigit():
            try:
                return Cidr(addr, int(plen))
            except ValueError:
                pass
    # bypass Text validation, which calls back in here
    t = Text.__new__(Text)
    object.__setattr__(t, "text", raw)
    return t


def value_to_json(v: TypedValue) -> dict[str, Any]:
    if isinstance(v, Quantity):
        return {"kind": "quantity", "number": v.number, "unit": v.unit}
    if isinstance(v, Cidr):
        return {"kind": "cidr", "address": v.address, "prefix": v.prefix}
    return {"kind": "text", "text": v.text}


def value_from_json(doc: dict[str, Any]) -> TypedValue:
    kind = doc.get("kind")
    if kind == "quantity":
        return Quantity(doc["number"], doc.get("unit", ""))
    if kind == "cidr":
        return Cidr(doc["address"], doc["prefix"])
    if kind == "text":
        return Text(doc["text"])
    raise ValueError(f"unknown value kind {kind!r}")


# --------------------------------------------------------------------------
# AST

class Priority(enum.Enum):
    ESSENTIAL = "essential"
    DESIRABLE = "desirable"


def _is_atom(text: str, *, in_modifier: bool = False) -> bool:
    if text == "NULL" and not in_modifier:
        return False
    return (_KEY_RUN if in_modifier else _ATOM_RUN).fullmatch(text) is not None


def _is_value_atom(text: str) -> bool:
    return _ATOM_RUN.fullmatch(text) is not None


@dataclass(frozen=True)
class ModifierAtom:
    key: str
    comparator: str
    value: TypedValue
    priority: Priority = Priority.ESSENTIAL

    def __post_init__(self):
        if not _is_atom(self.key, in_modifier=True):
            raise ValueError(f"invalid modifier key {self.key!r}")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"invalid comparator {self.comparator!r}")
        rendered = render_value(self.value)
        if not _is_value_atom(rendered):
            raise ValueError(f"value {self.value!r} cannot be written as an atom")
        if self.comparator in ("<", ">") and rendered.startswith("="):
            # would re-read as '<=' / '>='
            raise ValueError(f"value {rendered!r} is ambiguous after {self.comparator!r}")
        if not isinstance(self.priority, Priority):
            object.__setattr__(self, "priority", Priority(str(self.priority).lower()))


@dataclass(frozen=True)
class ModifierClause:
    atoms: tuple[ModifierAtom, ...]

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.atoms:
            raise ValueError("a modifier clause needs at least one atom")


Subject = Union[None, str, "IntentExpr"]


@dataclass(frozen=True)
class IntentExpr:
    verb: str
    object: str
    modifiers: tuple[ModifierClause, ...] = ()
    subject: Subject = None

    def __post_init__(self):
        if not isinstance(self.verb, str) or not VERB_RE.match(self.verb):
            raise ValueError(f"invalid verb {self.verb!r}")
        object.__setattr__(self, "verb", self.verb.lower())
        if not _is_atom(self.object):
            raise ValueError(f"invalid object {self.object!r}")
        object.__setattr__(self, "modifiers", tuple(self.modifiers))
        if isinstance(self.subject, str) and not _is_atom(self.subject):
            raise ValueError(f"invalid subject identifier {self.subject!r}")
        if self.subject is not None and not isinstance(self.subject, (str, IntentExpr)):
            raise TypeError(f"bad subject {self.subject!r}")

    def sentences(self) -> list[IntentExpr]:
        """All sentences from the outermost inwards."""
        out: list[IntentExpr] = []
        node: Subject = self
        while isinstance(node, IntentExpr):
            out.append(node)
            node = node.subject
        return out

    @property
    def depth(self) -> int:
        return len(self.sentences())

    def atoms(self) -> list[ModifierAtom]:
        return [a for clause in self.modifiers for a in clause.atoms]


# --------------------------------------------------------------------------
# Tokenizer

class TokenKind(enum.Enum):
    LT = "<"
    GT = ">"
    LPAREN = "("
    RPAREN = ")"
    COMMA = ","
    AMP = "&"
    NULL = "NULL"
    CMP = "cmp"
    ATOM = "atom"
    EOF = "eof"


_PUNCT = {
    "<": TokenKind.LT, ">": TokenKind.GT, "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN, ",": TokenKind.COMMA, "&": TokenKind.AMP,
}


class Token(NamedTuple):
    kind: TokenKind
    text: str
    pos: int  # character index

    def __str__(self) -> str:
        return self.text


def _illegal(ch: str) -> bool:
    return unicodedata.category(ch) == "Cc" and not ch.isspace()


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(source)
    paren_at = -1  # position of the open '(' or -1
    seen_cmp = False
    while i < n:
        ch = source[i]
        if ch.isspace():
            i = _SPACE_RUN.match(source, i).end()
            continue
        if _illegal(ch):
            raise IllegalCharacter([_diagnostic(source, i, f"illegal character U+{ord(ch):04X}")])
        if paren_at >= 0 and (ch in "<>" or ch == "=" and not seen_cmp):
            if i + 1 < n and source[i + 1] == "=" and ch != "=":
                tokens.append(Token(TokenKind.CMP, ch + "=", i))
                i += 2
            else:
                tokens.append(Token(TokenKind.CMP, ch, i))
                i += 1
            seen_cmp = True
            continue
        if ch in _PUNCT:
            kind = _PUNCT[ch]
            if kind is TokenKind.LPAREN:
                if paren_at >= 0:
                    raise IntentSyntaxError([_diagnostic(source, i, "nested '(' inside a modifier")])
                paren_at, seen_cmp = i, False
            elif kind is TokenKind.RPAREN:
                paren_at = -1
            tokens.append(Token(kind, ch, i))
            i += 1
            continue
        start = i
        if paren_at >= 0:
            i = (_ATOM_RUN if seen_cmp else _KEY_RUN).match(source, i).end()
            tokens.append(Token(TokenKind.ATOM, source[start:i], start))
        else:
            i = _ATOM_RUN.match(source, i).end()
            text = source[start:i]
            tokens.append(Token(TokenKind.NULL if text == "NULL" else TokenKind.ATOM, text, start))
    if paren_at >= 0:
        raise UnterminatedInput([_diagnostic(source, paren_at, "unclosed '('")])
    tokens.append(Token(TokenKind.EOF, "", n))
    return tokens


# --------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, source: str, max_depth: int):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0
        self.max_depth = max_depth

    def error(self, tok: Token, message: str, cls=IntentSyntaxError):
        if tok.kind is TokenKind.EOF and cls is IntentSyntaxError:
            cls = UnterminatedInput
            message = f"unexpected end of input: {message}"
        raise cls([_diagnostic(self.source, tok.pos, message)])

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind is not TokenKind.EOF:
            self.i += 1
        return tok

    def expect(self, kind: TokenKind, what: str) -> Token:
        tok = self.peek()
        if tok.kind is not kind:
            found = "end of input" if tok.kind is TokenKind.EOF else repr(tok.text)
            self.error(tok, f"expected {what}, found {found}")
        return self.take()

    def parse(self) -> IntentExpr:
        intent = self.intent(1)
        tok = self.peek()
        if tok.kind is not TokenKind.EOF:
            self.error(tok, f"trailing input after intent: {tok.text!r}")
        return intent

    def intent(self, depth: int) -> IntentExpr:
        lt = self.expect(TokenKind.LT, "'<'")
        if depth > self.max_depth:
            self.error(lt, f"nesting deeper than {self.max_depth}", DepthExceeded)
        verb = self.expect(TokenKind.ATOM, "verb")
        if not VERB_RE.match(verb.text):
            self.error(verb, f"invalid verb {verb.text!r}")
        self.expect(TokenKind.COMMA, "','")
        obj = self.expect(TokenKind.ATOM, "object")
        elements: list[tuple[str, Token, Any]] = []
        while self.peek().kind is TokenKind.COMMA:
            self.take()
            elements.append(self.element(depth))
        self.expect(TokenKind.GT, "',' or '>'")

        modifiers: list[ModifierClause] = []
        subject: Subject = None
        for idx, (kind, tok, payload) in enumerate(elements):
            last = idx == len(elements) - 1
            if last:
                if kind == "clause":
                    self.error(tok, "last element must be a subject (NULL, identifier or intent)")
                subject = payload
            elif kind == "clause":
                modifiers.append(payload)
            elif kind != "null":
                self.error(tok, "only the last element may be a subject; expected a modifier clause")
        return IntentExpr(verb.text, obj.text, tuple(modifiers), subject)

    def element(self, depth: int) -> tuple[str, Token, Any]:
        tok = self.peek()
        if tok.kind is TokenKind.NULL:
            self.take()
            return "null", tok, None
        if tok.kind is TokenKind.ATOM:
            self.take()
            return "atom", tok, tok.text
        if tok.kind is TokenKind.LT:
            return "intent", tok, self.intent(depth + 1)
        if tok.kind is TokenKind.LPAREN:
            atoms = [self.modifier()]
            while self.peek().kind is TokenKind.AMP:
                self.take()
                atoms.append(self.modifier())
            return "clause", tok, ModifierClause(tuple(atoms))
        found = "end of input" if tok.kind is TokenKind.EOF else repr(tok.text)
        self.error(tok, f"expected modifier, NULL, identifier or intent, found {found}")
        raise AssertionError  # unreachable

    def modifier(self) -> ModifierAtom:
        self.expect(TokenKind.LPAREN, "'('")
        key = self.expect(TokenKind.ATOM, "modifier key")
        cmp = self.expect(TokenKind.CMP, "comparator")
        value = self.expect(TokenKind.ATOM, "modifier value")
        priority = Priority.ESSENTIAL
        if self.peek().kind is TokenKind.COMMA:
            self.take()
            tag = self.expect(TokenKind.ATOM, "'essential' or 'desirable'")
            try:
                priority = Priority(tag.text.lower())
            except ValueError:
                self.error(tag, f"unknown priority tag {tag.text!r}")
        self.expect(TokenKind.RPAREN, "')'")
        return ModifierAtom(key.text, cmp.text, parse_value(value.text), priority)


def parse(source: str | bytes, *, max_depth: int = DEFAULT_MAX_DEPTH) -> IntentExpr:
    """Parse intent source text. Raises IntentSyntaxError with diagnostics."""
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IllegalCharacter([ParseDiagnostic(exc.start, 1, 1, "input is not valid UTF-8")]) from None
    return _Parser(source, max_depth).parse()


# --------------------------------------------------------------------------
# Rendering and JSON

def render_atom(a: ModifierAtom) -> str:
    return f"({a.key}{a.comparator}{render_value(a.value)},{a.priority.value})"


def render_clause(c: ModifierClause) -> str:
    return " & ".join(render_atom(a) for a in c.atoms)


def render(intent: IntentExpr) -> str:
    parts = [intent.verb, intent.object]
    parts += [render_clause(c) for c in intent.modifiers]
    s = intent.subject
    parts.append("NULL" if s is None else s if isinstance(s, str) else render(s))
    return "<" + ", ".join(parts) + ">"


def intent_to_json(intent: IntentExpr) -> dict[str, Any]:
    s = intent.subject
    return {
        "verb": intent.verb,
        "object": intent.object,
        "modifiers": [
            [
                {"key": a.key, "comparator": a.comparator, "value": value_to_json(a.value),
                 "priority": a.priority.value}
                for a in clause.atoms
            ]
            for clause in intent.modifiers
        ],
        "subject": s if s is None or isinstance(s, str) else intent_to_json(s),
    }


def intent_from_json(doc: dict[str, Any]) -> IntentExpr:
    s = doc.get("subject")
    return IntentExpr(
        doc["verb"],
        doc["object"],
        tuple(
            ModifierClause(tuple(
                ModifierAtom(a["key"], a["comparator"], value_from_json(a["value"]),
                             Priority(a.get("priority", "essential")))
                for a in clause
            ))
            for clause in doc.get("modifiers", [])
        ),
        s if s is None or isinstance(s, str) else intent_from_json(s),
    )
