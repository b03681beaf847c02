"""Many-sorted term algebra for Diffie-Hellman protocol messages.

Terms live over a fixed signature: an abelian group sort G, an exponent
ring sort E with a non-zero subsort NZE, and free message constructors
(concatenation, encryption, hashing) on top.  Three operators are
associative-commutative (group product, sum, product); their arguments
are kept flattened and sorted under a global term order, so structural
identity coincides with equality modulo AC.

All terms are interned: constructing the same term twice yields the same
object, and equality is pointer identity.  Terms are immutable.
"""

from __future__ import annotations

import enum
import re
from typing import Iterable, Optional


class SortError(Exception):
    """An operator was applied to arguments of the wrong sort."""


class ParseError(Exception):
    """Raised on malformed concrete syntax, with a position."""

    def __init__(self, message, pos=None):
        super().__init__(message if pos is None else f"{message} (at offset {pos})")
        self.pos = pos


class Sort(enum.Enum):
    G = "G"
    E = "E"
    NZE = "NZE"
    MSG = "Msg"
    NAME = "Name"
    KEY = "Key"

    def __le__(self, other: "Sort") -> bool:
        if self is other or other is Sort.MSG:
            return True
        return self is Sort.NZE and other is Sort.E

    def __str__(self):
        return self.value


class Op:
    """An operator of the signature."""

    __slots__ = ("name", "arg_sorts", "result_sort", "ac")

    def __init__(self, name, arg_sorts, result_sort, ac=False):
        self.name = name
        self.arg_sorts = tuple(arg_sorts)
        self.result_sort = result_sort
        self.ac = ac

    def __repr__(self):
        return f"Op({self.name})"


GOP = Op("gop", (Sort.G, Sort.G), Sort.G, ac=True)
ADD = Op("+", (Sort.E, Sort.E), Sort.E, ac=True)
MUL = Op("*", (Sort.E, Sort.E), Sort.E, ac=True)
EXP = Op("exp", (Sort.G, Sort.E), Sort.G)
INV = Op("inv", (Sort.G,), Sort.G)
NEG = Op("neg", (Sort.E,), Sort.E)
INVE = Op("i", (Sort.NZE,), Sort.NZE)
STAR2 = Op("**", (Sort.NZE, Sort.NZE), Sort.NZE)
BOX = Op("box", (Sort.G,), Sort.NZE)
CONCAT = Op("concat", (Sort.MSG, Sort.MSG), Sort.MSG)
ENC = Op("enc", (Sort.MSG, Sort.MSG), Sort.MSG)
HASH = Op("h", (Sort.MSG,), Sort.MSG)
SK = Op("sk", (Sort.NAME,), Sort.KEY)

OPS = {
    op.name: op
    for op in (GOP, ADD, MUL, EXP, INV, NEG, INVE, STAR2, BOX, CONCAT, ENC, HASH, SK)
}

AC_OPS = (GOP, ADD, MUL)


class Term:
    """Base class; instances are interned, equality is identity."""

    __slots__ = ("sort", "size", "_key", "_hashv")

    def __hash__(self):
        return self._hashv

    def __repr__(self):
        return pretty(self)

    def key(self):
        """Global term order key: constants < variables < applications."""
        return self._key


class Const(Term):
    __slots__ = ("name",)

    def __repr__(self):
        return self.name


class Var(Term):
    __slots__ = ("name",)

    def __repr__(self):
        return self.name


class App(Term):
    __slots__ = ("op", "args")


_interned: dict = {}


def _intern(kind, key, build):
    hit = _interned.get((kind, key))
    if hit is None:
        hit = build()
        _interned[(kind, key)] = hit
    return hit


def const(name: str, sort: Sort) -> Const:
    def build():
        t = Const()
        t.name = name
        t.sort = sort
        t.size = 1
        t._key = (0, name)
        t._hashv = hash((0, name, sort))
        return t

    t = _intern("c", name, build)
    if t.sort is not sort:
        raise SortError(f"constant {name} already declared with sort {t.sort}")
    return t


def var(name: str, sort: Sort) -> Var:
    def build():
        t = Var()
        t.name = name
        t.sort = sort
        t.size = 1
        t._key = (1, name)
        t._hashv = hash((1, name, sort))
        return t

    t = _intern("v", (name, sort), build)
    return t


GID = const("1g", Sort.G)
ZERO = const("0", Sort.E)
ONE = const("1", Sort.NZE)
TAG_CERT = const("cert", Sort.MSG)
TAG_KEYREC = const("keyrec", Sort.MSG)
TAG_CERTREQ = const("cert_req", Sort.MSG)


def name_const(name: str) -> Const:
    return const(name, Sort.NAME)


def _app(op: Op, args: tuple) -> App:
    def build():
        t = App()
        t.op = op
        t.args = args
        t.sort = _result_sort(op, args)
        t.size = 1 + sum(a.size for a in args)
        t._key = (2, op.name) + tuple(a._key for a in args)
        t._hashv = hash((2, op.name, args))
        return t

    return _intern("a", (op.name, args), build)


def _result_sort(op: Op, args: tuple) -> Sort:
    if op is MUL and all(a.sort is Sort.NZE for a in args):
        return Sort.NZE  # NZE is closed under multiplication
    return op.result_sort


def _check_arg(op: Op, want: Sort, got: Term):
    if not got.sort <= want:
        raise SortError(f"{op.name} expects {want}, got {got.sort} term {pretty(got)}")


def app(op: Op, *args: Term) -> Term:
    """Build an application, flattening and sorting AC arguments."""
    if op.ac:
        flat = []
        for a in args:
            _check_arg(op, op.arg_sorts[0], a)
            if isinstance(a, App) and a.op is op:
                flat.extend(a.args)
            else:
                flat.append(a)
        if len(flat) == 1:
            return flat[0]
        flat.sort(key=Term.key)
        return _app(op, tuple(flat))
    if len(args) != len(op.arg_sorts):
        raise SortError(f"{op.name} expects {len(op.arg_sorts)} arguments")
    for want, got in zip(op.arg_sorts, args):
        _check_arg(op, want, got)
    return _app(op, tuple(args))


def gop(*args):
    return app(GOP, *args)


def add(*args):
    return app(ADD, *args)


def mul(*args):
    return app(MUL, *args)


def exp(base, e):
    return app(EXP, base, e)


def inv(t):
    return app(INV, t)


def neg(e):
    return app(NEG, e)


def inve(e):
    return app(INVE, e)


def box(t):
    return app(BOX, t)


def concat(*parts):
    # right-associated pairing
    if not parts:
        raise SortError("concat needs at least one part")
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = app(CONCAT, p, out)
    return out


def enc(m, k):
    return app(ENC, m, k)


def hash_(m):
    return app(HASH, m)


def sk(principal):
    if isinstance(principal, str):
        principal = name_const(principal)
    return app(SK, principal)


def sign(m: Term, principal) -> Term:
    """Digital signature [[m]]_P, desugared to (m, {h(m)}sk(P))."""
    return concat(m, enc(hash_(m), sk(principal)))


def sort_of(t: Term) -> Sort:
    return t.sort


def ac_equal(s: Term, t: Term) -> bool:
    """Equality modulo AC only; canonical storage makes this identity."""
    return s is t


def is_basic(t: Term) -> bool:
    """Basic values: not built by a free message constructor."""
    return not (isinstance(t, App) and t.op in (CONCAT, ENC, HASH))


def subterms(t: Term):
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def vars_of(t: Term) -> frozenset:
    out = set()
    for s in subterms(t):
        if isinstance(s, Var):
            out.add(s)
    return frozenset(out)


def substitute(t: Term, subst: dict) -> Term:
    """Simultaneous sort-preserving substitution; result is AC-flattened."""
    for v, u in subst.items():
        if not u.sort <= v.sort:
            raise SortError(f"binding {v!r} := {u!r} violates sort {v.sort}")
    return _substitute(t, subst)


def _substitute(t: Term, subst: dict) -> Term:
    if isinstance(t, Var):
        return subst.get(t, t)
    if isinstance(t, App):
        args = tuple(_substitute(a, subst) for a in t.args)
        if args == t.args:
            return t
        return app(t.op, *args)
    return t


# ---------------------------------------------------------------------------
# Printing

_PREC_SUM, _PREC_MUL, _PREC_GPROD, _PREC_EXP, _PREC_ATOM = 1, 2, 3, 4, 5


def pretty(t: Term) -> str:
    return _pp(t, 0)


def _pp(t: Term, prec: int) -> str:
    if isinstance(t, (Const, Var)):
        return t.name
    op = t.op
    if op is ADD:
        s = " + ".join(_pp(a, _PREC_SUM + 1) for a in t.args)
        return f"({s})" if prec > _PREC_SUM else s
    if op is MUL:
        s = "*".join(_pp(a, _PREC_MUL + 1) for a in t.args)
        return f"({s})" if prec > _PREC_MUL else s
    if op is GOP:
        s = " . ".join(_pp(a, _PREC_GPROD + 1) for a in t.args)
        return f"({s})" if prec > _PREC_GPROD else s
    if op is EXP:
        base, e = t.args
        s = f"{_pp(base, _PREC_EXP + 1)}^{_pp(e, _PREC_ATOM)}"
        return f"({s})" if prec > _PREC_EXP else s
    if op is STAR2:
        u, v = t.args
        s = f"{_pp(u, _PREC_MUL + 1)} ** {_pp(v, _PREC_MUL + 1)}"
        return f"({s})" if prec > _PREC_MUL else s
    if op is NEG:
        return f"-({_pp(t.args[0], 0)})"
    if op is BOX:
        return f"[{_pp(t.args[0], 0)}]"
    if op is INV:
        return f"inv({_pp(t.args[0], 0)})"
    if op is INVE:
        return f"i({_pp(t.args[0], 0)})"
    if op is HASH:
        return f"h({_pp(t.args[0], 0)})"
    if op is SK:
        return f"sk({_pp(t.args[0], 0)})"
    if op is ENC:
        m, k = t.args
        return f"{{{_pp(m, 0)}}}{_pp(k, _PREC_ATOM)}"
    if op is CONCAT:
        parts = [t.args[0]]
        rest = t.args[1]
        while isinstance(rest, App) and rest.op is CONCAT:
            parts.append(rest.args[0])
            rest = rest.args[1]
        parts.append(rest)
        return "(" + ", ".join(_pp(p, 0) for p in parts) + ")"
    raise AssertionError(f"unprintable op {op.name}")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<gid>1g(?![A-Za-z0-9_']))
  | (?P<one>1)
  | (?P<zero>0)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>\*\*|[()\[\]{},;:.^+*-])
    """,
    re.VERBOSE,
)

_SORT_NAMES = {s.value: s for s in Sort}
_RESERVED = {"decl", "inv", "i", "h", "sk"}


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", pos)
            pos = m.end()
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), m.start()))
        self.toks.append(("eof", "", len(text)))
        self.idx = 0

    def peek(self):
        return self.toks[self.idx]

    def next(self):
        tok = self.toks[self.idx]
        self.idx += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.next()
        if text != value:
            raise ParseError(f"expected {value!r}, found {text!r}", pos)


class ParseContext:
    """Variable declarations in scope while parsing.

    With auto_declare (the CLI convention), `g` is a G-variable, other
    lowercase identifiers become NZE variables on first use, and
    capitalized identifiers are principal names.
    """

    def __init__(self, decls: Optional[dict] = None, auto_declare: bool = True):
        self.decls = dict(decls or {})
        self.auto_declare = auto_declare

    def declare(self, name: str, sort: Sort):
        old = self.decls.get(name)
        if old is not None and old is not sort:
            raise ParseError(f"{name} already declared with sort {old}")
        self.decls[name] = sort

    def resolve(self, name: str, pos) -> Term:
        sort = self.decls.get(name)
        if sort is None:
            if not self.auto_declare:
                raise ParseError(f"unknown identifier {name!r}", pos)
            if name == "g":
                sort = Sort.G
            elif name[0].isupper():
                sort = Sort.NAME
            else:
                sort = Sort.NZE
            self.decls[name] = sort
        if sort is Sort.NAME:
            return name_const(name)
        return var(name, sort)


class _Parser:
    def __init__(self, lexer: _Lexer, ctx: ParseContext):
        self.lx = lexer
        self.ctx = ctx

    def parse_decls(self):
        while self.lx.peek()[1] == "decl":
            self.lx.next()
            names = []
            while True:
                kind, text, pos = self.lx.next()
                if kind != "ident":
                    raise ParseError("expected variable name", pos)
                names.append(text)
                if self.lx.peek()[1] == ",":
                    self.lx.next()
                else:
                    break
            self.lx.expect(":")
            kind, text, pos = self.lx.next()
            sort = _SORT_NAMES.get(text)
            if sort is None:
                raise ParseError(f"unknown sort {text!r}", pos)
            self.lx.expect(";")
            for n in names:
                self.ctx.declare(n, sort)

    def expr(self) -> Term:
        return self.sum()

    def sum(self) -> Term:
        t = self.product()
        args = [t]
        while self.lx.peek()[1] == "+":
            self.lx.next()
            args.append(self.product())
        if len(args) == 1:
            return t
        _pos = self.lx.peek()[2]
        return self._mk(add, args, _pos)

    def product(self) -> Term:
        t = self.gprod()
        args = [t]
        while self.lx.peek()[1] == "*":
            self.lx.next()
            args.append(self.gprod())
        if len(args) == 1:
            return t
        return self._mk(mul, args, self.lx.peek()[2])

    def gprod(self) -> Term:
        t = self.power()
        args = [t]
        while self.lx.peek()[1] == ".":
            self.lx.next()
            args.append(self.power())
        if len(args) == 1:
            return t
        return self._mk(gop, args, self.lx.peek()[2])

    def power(self) -> Term:
        base = self.primary()
        if self.lx.peek()[1] == "^":
            self.lx.next()
            pos = self.lx.peek()[2]
            e = self.power()  # right-associative
            return self._mk(exp, [base, e], pos)
        return base

    def primary(self) -> Term:
        kind, text, pos = self.lx.next()
        if text == "-":
            self.lx.expect("(")
            e = self.expr()
            self.lx.expect(")")
            return self._mk(neg, [e], pos)
        if text == "(":
            parts = [self.expr()]
            while self.lx.peek()[1] == ",":
                self.lx.next()
                parts.append(self.expr())
            self.lx.expect(")")
            if len(parts) == 1:
                return parts[0]
            return self._mk(concat, parts, pos)
        if text == "[":
            t = self.expr()
            self.lx.expect("]")
            return self._mk(box, [t], pos)
        if text == "{":
            m = self.expr()
            self.lx.expect("}")
            k = self.power()
            return self._mk(enc, [m, k], pos)
        if kind == "gid":
            return GID
        if kind == "one":
            return ONE
        if kind == "zero":
            return ZERO
        if kind == "ident":
            if self.lx.peek()[1] == "(" and text in ("inv", "i", "h", "sk"):
                self.lx.next()
                arg = self.expr()
                self.lx.expect(")")
                fn = {"inv": inv, "i": inve, "h": hash_, "sk": sk}[text]
                return self._mk(fn, [arg], pos)
            if text in _RESERVED:
                raise ParseError(f"{text!r} is reserved", pos)
            if text in ("cert", "keyrec", "cert_req"):
                return const(text, Sort.MSG)
            if self.lx.peek()[1] == ":":
                self.lx.next()
                skind, stext, spos = self.lx.next()
                sort = _SORT_NAMES.get(stext)
                if sort is None:
                    raise ParseError(f"unknown sort {stext!r}", spos)
                self.ctx.declare(text, sort)
            return self.ctx.resolve(text, pos)
        raise ParseError(f"unexpected token {text!r}", pos)

    @staticmethod
    def _mk(fn, args, pos):
        try:
            return fn(*args)
        except SortError as err:
            raise ParseError(str(err), pos) from None


def parse(text: str, ctx: Optional[ParseContext] = None) -> Term:
    """Parse one expression, honoring leading `decl` lines."""
    ctx = ctx or ParseContext()
    lx = _Lexer(text)
    p = _Parser(lx, ctx)
    p.parse_decls()
    t = p.expr()
    kind, tok, pos = lx.peek()
    if kind != "eof":
        raise ParseError(f"trailing input {tok!r}", pos)
    return t


def parse_all(text: str, ctx: Optional[ParseContext] = None) -> list:
    """Parse a file of decl lines and `;`-or-newline separated expressions."""
    ctx = ctx or ParseContext()
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        lx = _Lexer(line)
        p = _Parser(lx, ctx)
        p.parse_decls()
        if lx.peek()[0] == "eof":
            continue
        out.append(p.expr())
        if lx.peek()[0] != "eof":
            raise ParseError(f"trailing input on line {line!r}", lx.peek()[2])
    return out
