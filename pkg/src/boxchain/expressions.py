"""Expression trees for branch functions, with interval evaluation.

The language covers rational constants, pi, variables x1..xr, + - * /,
integer powers, sin/cos/exp/ln/abs, and a guarded piecewise node keyed by
exact rational thresholds on one variable. Pointwise evaluation returns a
high-precision enclosure of the true value (exact when no transcendental or
rounded division is involved); box evaluation returns an interval extension
over the closed box, sound by construction.

Text grammar (EBNF):

    expr      = sum ;
    sum       = product { ("+" | "-") product } ;
    product   = unary { ("*" | "/") unary } ;
    unary     = "-" unary | power ;
    power     = atom [ "^" ["-"] integer ] ;
    atom      = number | "pi" | variable | call | "(" expr ")" | piecewise ;
    call      = ("sin" | "cos" | "exp" | "ln" | "abs") "(" expr ")" ;
    piecewise = "piecewise" "(" variable ";" piece { ";" piece } ")" ;
    piece     = bound ":" expr ;
    bound     = ("(" | "[") lowlit "," highlit (")" | "]") ;
    lowlit    = "-inf" | numlit ;  highlit = "inf" | numlit ;
    numlit    = ["-"] digits [ "/" digits | "." digits ] ;
    variable  = "x" digits ;

Pieces must partition the real line: consecutive bounds share their endpoint
with exactly one closed side, the first is open at -inf, the last at inf.
"""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from .rationals import Q, format_rational, parse_rational
from .boxes import RBox
from . import intervals as iv
from .intervals import DomainViolation, contexts

__all__ = [
    "Expr", "Const", "PiConst", "Var", "Neg", "Add", "Sub", "Mul", "Div",
    "Pow", "Sin", "Cos", "Exp", "Ln", "Abs", "Piece", "Piecewise",
    "Enclosure", "parse_expr", "eval_point", "eval_box",
    "eval_vector_point", "eval_vector_box", "DomainViolation",
]


class Expr:
    __slots__ = ()

    def ev(self, env, cd, cu):
        raise NotImplementedError

    def arity(self) -> int:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"<Expr {self.to_text()}>"


class Const(Expr):
    __slots__ = ("value", "_iv")

    def __init__(self, value):
        self.value = mpq(value)
        self._iv = (self.value, self.value)

    def ev(self, env, cd, cu):
        return self._iv

    def arity(self):
        return 0

    def to_text(self):
        q = self.value
        if q < 0:
            return f"(0 - {format_rational(-q)})"
        return format_rational(q)


class PiConst(Expr):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return (cd.const_pi(), cu.const_pi())

    def arity(self):
        return 0

    def to_text(self):
        return "pi"


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 0:
            raise ValueError("variable index must be >= 0")
        self.index = index

    def ev(self, env, cd, cu):
        return env[self.index]

    def arity(self):
        return self.index + 1

    def to_text(self):
        return f"x{self.index + 1}"


class _Unary(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg

    def arity(self):
        return self.arg.arity()


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def arity(self):
        return max(self.left.arity(), self.right.arity())


class Neg(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_neg(self.arg.ev(env, cd, cu))

    def to_text(self):
        return f"(0 - {self.arg.to_text()})"


class Add(_Binary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_add(self.left.ev(env, cd, cu), self.right.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"({self.left.to_text()} + {self.right.to_text()})"


class Sub(_Binary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_sub(self.left.ev(env, cd, cu), self.right.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"({self.left.to_text()} - {self.right.to_text()})"


class Mul(_Binary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_mul(self.left.ev(env, cd, cu), self.right.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"({self.left.to_text()} * {self.right.to_text()})"


class Div(_Binary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        try:
            return iv.iv_div(self.left.ev(env, cd, cu), self.right.ev(env, cd, cu), cd, cu)
        except DomainViolation as exc:
            raise DomainViolation(f"{exc} in {self.to_text()}") from None

    def to_text(self):
        return f"({self.left.to_text()} / {self.right.to_text()})"


class Pow(_Unary):
    __slots__ = ("exponent",)

    def __init__(self, arg: Expr, exponent: int):
        super().__init__(arg)
        self.exponent = int(exponent)

    def ev(self, env, cd, cu):
        try:
            return iv.iv_pow_int(self.arg.ev(env, cd, cu), self.exponent, cd, cu)
        except DomainViolation as exc:
            raise DomainViolation(f"{exc} in {self.to_text()}") from None

    def to_text(self):
        return f"({self.arg.to_text()} ^ {self.exponent})"


class Sin(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_sin(self.arg.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"sin({self.arg.to_text()})"


class Cos(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_cos(self.arg.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"cos({self.arg.to_text()})"


class Exp(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_exp(self.arg.ev(env, cd, cu), cd, cu)

    def to_text(self):
        return f"exp({self.arg.to_text()})"


class Ln(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        try:
            return iv.iv_ln(self.arg.ev(env, cd, cu), cd, cu)
        except DomainViolation as exc:
            raise DomainViolation(f"{exc} in {self.to_text()}") from None

    def to_text(self):
        return f"ln({self.arg.to_text()})"


class Abs(_Unary):
    __slots__ = ()

    def ev(self, env, cd, cu):
        return iv.iv_abs(self.arg.ev(env, cd, cu))

    def to_text(self):
        return f"abs({self.arg.to_text()})"


@dataclass(frozen=True)
class Piece:
    """One guard interval of a piecewise node; None bounds mean +-inf."""
    lo: object          # mpq or None
    hi: object          # mpq or None
    lo_open: bool
    hi_open: bool
    expr: Expr

    def admits(self, x) -> bool:
        if self.lo is not None and (x < self.lo or (x == self.lo and self.lo_open)):
            return False
        if self.hi is not None and (x > self.hi or (x == self.hi and self.hi_open)):
            return False
        return True

    def bound_text(self) -> str:
        lo = "-inf" if self.lo is None else format_rational(self.lo)
        hi = "inf" if self.hi is None else format_rational(self.hi)
        return f"{'(' if self.lo_open else '['}{lo},{hi}{')' if self.hi_open else ']'}"


class Piecewise(Expr):
    """Case split on one variable with exact rational thresholds.

    Pieces must partition the reals (checked at construction): consecutive
    pieces meet at a shared threshold with exactly one closed side.
    """

    __slots__ = ("var_index", "pieces")

    def __init__(self, var_index: int, pieces):
        self.var_index = int(var_index)
        self.pieces = tuple(pieces)
        self._validate()

    def _validate(self):
        ps = self.pieces
        if not ps:
            raise ValueError("piecewise needs at least one piece")
        if ps[0].lo is not None or not ps[0].lo_open:
            raise ValueError("first piece must start open at -inf")
        if ps[-1].hi is not None or not ps[-1].hi_open:
            raise ValueError("last piece must end open at +inf")
        for a, b in zip(ps, ps[1:]):
            if a.hi is None or b.lo is None or a.hi != b.lo:
                raise ValueError("pieces must be contiguous")
            if a.hi_open == b.lo_open:
                raise ValueError(f"threshold {format_rational(a.hi)} must belong "
                                 "to exactly one piece")

    def ev(self, env, cd, cu):
        x = env[self.var_index]
        lo, hi = mpq(x[0]), mpq(x[1])
        out = None
        for piece in self.pieces:
            # overlap of the closed query [lo, hi] with the piece's interval
            if piece.lo is not None and (hi < piece.lo or (hi == piece.lo and piece.lo_open)):
                continue
            if piece.hi is not None and (lo > piece.hi or (lo == piece.hi and piece.hi_open)):
                continue
            a = lo if piece.lo is None else max(lo, piece.lo)
            b = hi if piece.hi is None else min(hi, piece.hi)
            sub = list(env)
            sub[self.var_index] = (a, b)
            val = piece.expr.ev(tuple(sub), cd, cu)
            out = val if out is None else iv.iv_hull(out, val)
        if out is None:
            raise DomainViolation("piecewise query outside every piece")
        return out

    def arity(self):
        return max([self.var_index + 1] + [p.expr.arity() for p in self.pieces])

    def to_text(self):
        body = "; ".join(f"{p.bound_text()}: {p.expr.to_text()}" for p in self.pieces)
        return f"piecewise(x{self.var_index + 1}; {body})"


# ---------------------------------------------------------------------------
# Enclosures and evaluation entry points


@dataclass(frozen=True)
class Enclosure:
    """Per-component outward-rounded interval, exact rational endpoints."""

    los: tuple
    his: tuple
    precision: int

    @property
    def dims(self) -> int:
        return len(self.los)

    def widths(self):
        return tuple(b - a for a, b in zip(self.los, self.his))

    def diameter_sq(self):
        return sum(((b - a) ** 2 for a, b in zip(self.los, self.his)), mpq(0))

    def contains(self, values) -> bool:
        return all(a <= mpq(v) <= b
                   for a, v, b in zip(self.los, values, self.his))

    def midpoint(self):
        return tuple((a + b) / 2 for a, b in zip(self.los, self.his))

    def to_box(self, margin) -> RBox:
        """Open box strictly containing this enclosure.

        `margin` is one positive rational or a per-component sequence.
        """
        if isinstance(margin, (list, tuple)):
            ms = [mpq(m) for m in margin]
        else:
            ms = [mpq(margin)] * len(self.los)
        if any(m <= 0 for m in ms):
            raise ValueError("margin must be positive")
        return RBox([a - m for a, m in zip(self.los, ms)],
                    [b + m for b, m in zip(self.his, ms)])

    def hull(self, other: "Enclosure") -> "Enclosure":
        return Enclosure(
            tuple(min(a, c) for a, c in zip(self.los, other.los)),
            tuple(max(b, d) for b, d in zip(self.his, other.his)),
            min(self.precision, other.precision),
        )


_GUARD_BITS = 24


def _env_from_point(point):
    return tuple(iv.iv_point(p) for p in point)


def _env_from_box(box):
    if isinstance(box, RBox):
        if box.is_empty:
            raise ValueError("cannot evaluate over the empty box")
        return tuple((a, b) for a, b in zip(box.lo, box.hi))
    return tuple((mpq(a), mpq(b)) for a, b in box)


def eval_vector_point(exprs, point, precision: int = 128) -> Enclosure:
    cd, cu = contexts(precision + _GUARD_BITS)
    env = _env_from_point(point)
    vals = [iv.iv_to_q(e.ev(env, cd, cu)) for e in exprs]
    return Enclosure(tuple(v[0] for v in vals), tuple(v[1] for v in vals), precision)


def eval_vector_box(exprs, box, precision: int = 128) -> Enclosure:
    """Enclosure of the image of the *closed* box under the expression vector."""
    cd, cu = contexts(precision + _GUARD_BITS)
    env = _env_from_box(box)
    vals = [iv.iv_to_q(e.ev(env, cd, cu)) for e in exprs]
    return Enclosure(tuple(v[0] for v in vals), tuple(v[1] for v in vals), precision)


def eval_point(expr: Expr, point, precision: int = 128) -> Enclosure:
    """Evaluate at an exact rational point; interval is exact when possible."""
    return eval_vector_point((expr,), point, precision)


def eval_box(expr: Expr, box, precision: int = 128) -> Enclosure:
    return eval_vector_box((expr,), box, precision)


# ---------------------------------------------------------------------------
# Parser


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self._skip_ws()
        if self.pos >= len(self.text):
            return ""
        ch = self.text[self.pos]
        if ch.isalpha():
            j = self.pos
            while j < len(self.text) and self.text[j].isalnum():
                j += 1
            return self.text[self.pos:j]
        if ch.isdigit():
            j = self.pos
            while j < len(self.text) and (self.text[j].isdigit() or self.text[j] == "."):
                j += 1
            return self.text[self.pos:j]
        return ch

    def take(self, expected=None) -> str:
        tok = self.peek()
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r} at position {self.pos}, found {tok!r}")
        self.pos += len(tok)
        return tok

    def done(self) -> bool:
        return self.peek() == ""


_FUNCS = {"sin": Sin, "cos": Cos, "exp": Exp, "ln": Ln, "abs": Abs}


def parse_expr(text: str, arity: int | None = None) -> Expr:
    """Parse the documented infix grammar; optionally check variable arity."""
    toks = _Tokens(text)
    expr = _parse_sum(toks)
    if not toks.done():
        raise ValueError(f"trailing input at position {toks.pos}: {toks.peek()!r}")
    if arity is not None and expr.arity() > arity:
        raise ValueError(f"expression uses x{expr.arity()} but arity is {arity}")
    return expr


def _parse_sum(toks: _Tokens) -> Expr:
    node = _parse_product(toks)
    while toks.peek() in ("+", "-"):
        op = toks.take()
        rhs = _parse_product(toks)
        node = Add(node, rhs) if op == "+" else Sub(node, rhs)
    return node


def _parse_product(toks: _Tokens) -> Expr:
    node = _parse_unary(toks)
    while toks.peek() in ("*", "/"):
        op = toks.take()
        rhs = _parse_unary(toks)
        node = Mul(node, rhs) if op == "*" else Div(node, rhs)
    return node


def _parse_unary(toks: _Tokens) -> Expr:
    if toks.peek() == "-":
        toks.take()
        return Neg(_parse_unary(toks))
    return _parse_power(toks)


def _parse_power(toks: _Tokens) -> Expr:
    node = _parse_atom(toks)
    if toks.peek() == "^":
        toks.take()
        sign = 1
        if toks.peek() == "-":
            toks.take()
            sign = -1
        tok = toks.take()
        if not tok.isdigit():
            raise ValueError(f"integer exponent expected, found {tok!r}")
        node = Pow(node, sign * int(tok))
    return node


def _parse_atom(toks: _Tokens) -> Expr:
    tok = toks.peek()
    if tok == "(":
        toks.take()
        node = _parse_sum(toks)
        toks.take(")")
        return node
    if tok == "pi":
        toks.take()
        return PiConst()
    if tok == "piecewise":
        return _parse_piecewise(toks)
    if tok in _FUNCS:
        toks.take()
        toks.take("(")
        arg = _parse_sum(toks)
        toks.take(")")
        return _FUNCS[tok](arg)
    if tok.startswith("x") and tok[1:].isdigit():
        toks.take()
        return Var(int(tok[1:]) - 1)
    if tok and (tok[0].isdigit() or tok[0] == "."):
        toks.take()
        return Const(parse_rational(tok))
    raise ValueError(f"unexpected token {tok!r} at position {toks.pos}")


def _parse_bound_literal(toks: _Tokens):
    neg = False
    if toks.peek() == "-":
        toks.take()
        neg = True
    tok = toks.take()
    if tok == "inf":
        if not neg:
            return "inf"
        return "-inf"
    val = tok
    if toks.peek() == "/":
        toks.take()
        val = f"{val}/{toks.take()}"
    q = parse_rational(val)
    return -q if neg else q


def _parse_piecewise(toks: _Tokens) -> Expr:
    toks.take("piecewise")
    toks.take("(")
    var_tok = toks.take()
    if not (var_tok.startswith("x") and var_tok[1:].isdigit()):
        raise ValueError("piecewise needs a variable as its first argument")
    var_index = int(var_tok[1:]) - 1
    pieces = []
    while toks.peek() == ";":
        toks.take()
        opener = toks.take()
        if opener not in ("(", "["):
            raise ValueError(f"piece bound must open with ( or [, found {opener!r}")
        lo = _parse_bound_literal(toks)
        toks.take(",")
        hi = _parse_bound_literal(toks)
        closer = toks.take()
        if closer not in (")", "]"):
            raise ValueError(f"piece bound must close with ) or ], found {closer!r}")
        toks.take(":")
        body = _parse_sum(toks)
        pieces.append(Piece(
            lo=None if lo == "-inf" else lo,
            hi=None if hi == "inf" else hi,
            lo_open=(opener == "("),
            hi_open=(closer == ")"),
            expr=body,
        ))
    toks.take(")")
    return Piecewise(var_index, pieces)
