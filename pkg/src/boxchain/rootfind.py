"""Bracketed, sign-certified root refinement.

Target functions are callbacks `fn(x, precision) -> (lo, hi)` returning an
outward enclosure of f(x) at an exact rational x. A sign is certified when
the enclosure excludes zero, escalating precision as needed; bisection then
keeps certified opposite signs at both ends, so every returned interval
provably contains a sign change.
"""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from .rationals import Q, dyadic_round, floor_log2
from .expressions import Expr, eval_point


class SignCertificationError(RuntimeError):
    pass


class BracketNotFound(RuntimeError):
    """Distinct status for scans that found no certified sign change."""


@dataclass(frozen=True)
class Bracket:
    lo: object
    hi: object
    sign_lo: int
    sign_hi: int

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError("bracket endpoints out of order")
        if self.sign_lo * self.sign_hi != -1:
            raise ValueError("bracket requires certified opposite signs")

    def width(self):
        return self.hi - self.lo

    def midpoint(self):
        return (mpq(self.lo) + mpq(self.hi)) / 2


def expr_callback(expr: Expr):
    """Adapt a 1-variable expression into a root-finding callback."""
    def fn(x, precision):
        enc = eval_point(expr, (x,), precision)
        return enc.los[0], enc.his[0]
    return fn


def certified_sign(fn, x, precision: int = 128, max_precision: int = 1024) -> int:
    """+1/-1 when certifiable, 0 if the enclosure straddles zero at max
    precision."""
    prec = precision
    while True:
        lo, hi = fn(x, prec)
        if lo > 0:
            return 1
        if hi < 0:
            return -1
        if prec >= max_precision:
            return 0
        prec *= 2


def make_bracket(fn, lo, hi, precision: int = 128,
                 max_precision: int = 1024) -> Bracket:
    lo, hi = mpq(lo), mpq(hi)
    slo = certified_sign(fn, lo, precision, max_precision)
    shi = certified_sign(fn, hi, precision, max_precision)
    if slo == 0 or shi == 0:
        raise SignCertificationError("cannot certify endpoint signs")
    if slo == shi:
        raise BracketNotFound("no sign change across the given endpoints")
    return Bracket(lo, hi, slo, shi)


def bisect(fn, bracket: Bracket, tol, precision: int = 128,
           max_precision: int = 1024) -> Bracket:
    """Shrink a certified bracket to width <= tol by midpoint bisection.

    Midpoints are snapped to dyadics to keep rationals small; when a midpoint
    sign cannot be certified even at max precision, nearby off-center probes
    are tried before giving up.
    """
    tol = mpq(tol)
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    cur = bracket
    while cur.width() > tol:
        width = cur.width()
        bits = max(8, 4 - floor_log2(width) + 4)
        probes = [dyadic_round(cur.midpoint(), bits)]
        probes += [dyadic_round(cur.lo + width * Q(3, 8), bits + 2),
                   dyadic_round(cur.lo + width * Q(5, 8), bits + 2)]
        advanced = False
        for m in probes:
            if not (cur.lo < m < cur.hi):
                continue
            s = certified_sign(fn, m, precision, max_precision)
            if s == 0:
                continue
            if s == cur.sign_lo:
                cur = Bracket(m, cur.hi, s, cur.sign_hi)
            else:
                cur = Bracket(cur.lo, m, cur.sign_lo, s)
            advanced = True
            break
        if not advanced:
            raise SignCertificationError(
                "sign certification lost: every probe enclosure straddles "
                "zero at maximum precision")
    return cur


def refine_to_residual(fn, bracket: Bracket, residual_target,
                       precision: int = 128, max_precision: int = 1024,
                       max_rounds: int = 200) -> Bracket:
    """Refine until |f(midpoint)| is certifiably <= residual_target."""
    residual_target = mpq(residual_target)
    cur = bracket
    for _ in range(max_rounds):
        mid = dyadic_round(cur.midpoint(), max(16, 8 - floor_log2(cur.width()) + 8))
        lo, hi = fn(mid, precision)
        if max(abs(mpq(lo)), abs(mpq(hi))) <= residual_target:
            return cur
        cur = bisect(fn, cur, cur.width() / 4, precision, max_precision)
    raise SignCertificationError(
        f"residual target {residual_target} unreachable after {max_rounds} rounds")


def scan_bracket(fn, lo, hi, max_subdiv: int, reciprocal: bool = False,
                 precision: int = 128, max_precision: int = 512):
    """All certified sign-change cells over a scan of [lo, hi], in order.

    With `reciprocal`, sample points are uniform in 1/u, concentrating them
    toward lo — the right metric when roots accumulate there (as for the
    plateau-anchor equation). Points with uncertifiable signs are skipped.
    Returns [] when nothing certifies (distinct from an exception).
    """
    lo, hi = mpq(lo), mpq(hi)
    if not lo < hi:
        raise ValueError("scan needs lo < hi")
    if reciprocal:
        if lo <= 0:
            raise ValueError("reciprocal scan needs lo > 0")
        v0, v1 = 1 / hi, 1 / lo
        dv = (v1 - v0) / max_subdiv
        points = [1 / (v0 + dv * j) for j in range(max_subdiv + 1)]
        points.reverse()  # ascending in u
    else:
        du = (hi - lo) / max_subdiv
        points = [lo + du * j for j in range(max_subdiv + 1)]
    out = []
    prev_x = prev_s = None
    for x in points:
        s = certified_sign(fn, x, precision, max_precision)
        if s == 0:
            continue
        if prev_s is not None and s != prev_s:
            out.append(Bracket(prev_x, x, prev_s, s))
        prev_x, prev_s = x, s
    return out


def greatest_root_below(fn, hi, floor, step_recip, max_subdiv: int,
                        precision: int = 128, max_precision: int = 512) -> Bracket:
    """First certified bracket scanning downward from hi in the reciprocal
    metric (steps of `step_recip` in 1/u), i.e. the greatest root below hi.

    `floor` guards the scan: raises BracketNotFound when u would drop below
    it without a certified sign change.
    """
    hi = mpq(hi)
    floor = mpq(floor)
    v = 1 / hi
    prev_x = prev_s = None
    for _ in range(max_subdiv + 1):
        x = 1 / v
        if x < floor:
            break
        s = certified_sign(fn, x, precision, max_precision)
        if s != 0:
            if prev_s is not None and s != prev_s:
                return Bracket(x, prev_x, s, prev_s)
            prev_x, prev_s = x, s
        v += mpq(step_recip)
    raise BracketNotFound(
        f"no certified sign change scanning down from {hi} to {floor}")
