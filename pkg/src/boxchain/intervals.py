"""Directed-rounding interval arithmetic.

Intervals are (lo, hi) pairs whose endpoints are exact rationals (gmpy2.mpq)
or MPFR floats produced under explicit RoundDown/RoundUp contexts. Field
operations on rational endpoints stay exact; transcendental functions round
outward at the working precision, so every result interval contains the true
value set of its inputs. Inclusion isotonicity holds at every precision, and
lowering the precision only widens results — enclosures produced at 64 bits
contain the 128-bit ones.
"""

from __future__ import annotations

import functools
import math

import gmpy2
from gmpy2 import mpfr, mpq

from .rationals import Q


class DomainViolation(ArithmeticError):
    """Evaluation touched a singularity (1/0, ln of nonpositive, ...).

    For box evaluation this signals that the queried box straddles a point
    the current stratum's branch cannot cover: the caller needs a smaller box
    or a deeper stratum.
    """


@functools.lru_cache(maxsize=32)
def contexts(prec: int):
    cd = gmpy2.context(precision=prec, round=gmpy2.RoundDown)
    cu = gmpy2.context(precision=prec, round=gmpy2.RoundUp)
    return cd, cu


_MPFR_ZERO = mpfr(0)
_MONE = mpq(-1)
_ONE = mpq(1)


def to_mpfr_down(x, cd) -> mpfr:
    return cd.add(x, _MPFR_ZERO)


def to_mpfr_up(x, cu) -> mpfr:
    return cu.add(x, _MPFR_ZERO)


@functools.lru_cache(maxsize=32)
def pi_interval(prec: int):
    cd, cu = contexts(prec)
    return cd.const_pi(), cu.const_pi()


def iv_exact(x) -> bool:
    return isinstance(x[0], mpq) and isinstance(x[1], mpq)


def iv_point(q):
    q = mpq(q)
    return (q, q)


def iv_neg(x):
    return (-x[1], -x[0])


def iv_add(x, y, cd, cu):
    return (cd.add(x[0], y[0]), cu.add(x[1], y[1]))


def iv_sub(x, y, cd, cu):
    return (cd.sub(x[0], y[1]), cu.sub(x[1], y[0]))


def iv_mul(x, y, cd, cu):
    xl, xh = x
    yl, yh = y
    if isinstance(xl, mpq) and isinstance(xh, mpq) and \
       isinstance(yl, mpq) and isinstance(yh, mpq):
        p = (xl * yl, xl * yh, xh * yl, xh * yh)
        return (min(p), max(p))
    lo = min(cd.mul(xl, yl), cd.mul(xl, yh), cd.mul(xh, yl), cd.mul(xh, yh))
    hi = max(cu.mul(xl, yl), cu.mul(xl, yh), cu.mul(xh, yl), cu.mul(xh, yh))
    return (lo, hi)


def iv_div(x, y, cd, cu):
    yl, yh = y
    if yl <= 0 <= yh:
        raise DomainViolation("division by an interval containing zero")
    xl, xh = x
    if isinstance(xl, mpq) and isinstance(xh, mpq) and \
       isinstance(yl, mpq) and isinstance(yh, mpq):
        p = (xl / yl, xl / yh, xh / yl, xh / yh)
        return (min(p), max(p))
    lo = min(cd.div(xl, yl), cd.div(xl, yh), cd.div(xh, yl), cd.div(xh, yh))
    hi = max(cu.div(xl, yl), cu.div(xl, yh), cu.div(xh, yl), cu.div(xh, yh))
    return (lo, hi)


def iv_abs(x):
    xl, xh = x
    if xl >= 0:
        return x
    if xh <= 0:
        return (-xh, -xl)
    return (mpq(0), max(-xl, xh))


def iv_pow_int(x, n: int, cd, cu):
    if n == 0:
        return (_ONE, _ONE)
    if n < 0:
        return iv_div((_ONE, _ONE), iv_pow_int(x, -n, cd, cu), cd, cu)
    xl, xh = x
    exact = isinstance(xl, mpq) and isinstance(xh, mpq)
    if n % 2 == 1 or xl >= 0:
        if exact:
            return (xl ** n, xh ** n)
        return (cd.pow(xl, n), cu.pow(xh, n))
    if xh <= 0:
        if exact:
            return (xh ** n, xl ** n)
        return (cd.pow(xh, n), cu.pow(xl, n))
    m = max(-xl, xh)
    if exact:
        return (mpq(0), m ** n)
    return (mpfr(0), cu.pow(m, n))


def iv_exp(x, cd, cu):
    return (cd.exp(to_mpfr_down(x[0], cd)), cu.exp(to_mpfr_up(x[1], cu)))


def iv_ln(x, cd, cu):
    if x[0] <= 0:
        raise DomainViolation("ln of an interval reaching nonpositive values")
    return (cd.log(to_mpfr_down(x[0], cd)), cu.log(to_mpfr_up(x[1], cu)))


def _trig_extremum_hits(a, b, center_offset_num: int, cd, cu):
    """Integer k such that center_offset_num*(pi/2) + 2k*pi possibly lies in [a, b].

    Returns a list of certainties; conservative (may include near misses),
    never omits a true hit. Arguments too large for reliable float phase
    estimates make the caller fall back to [-1, 1].
    """
    fa, fb = float(a), float(b)
    two_pi = 2 * math.pi
    k_lo = math.floor((fa - center_offset_num * math.pi / 2) / two_pi) - 1
    k_hi = math.floor((fb - center_offset_num * math.pi / 2) / two_pi) + 1
    pid, piu = cd.const_pi(), cu.const_pi()
    hits = []
    for k in range(k_lo, k_hi + 1):
        m = center_offset_num + 4 * k  # extremum at m * (pi/2)
        if m >= 0:
            m_lo = cd.div(cd.mul(m, pid), 2)
            m_hi = cu.div(cu.mul(m, piu), 2)
        else:
            m_lo = cd.div(cd.mul(m, piu), 2)
            m_hi = cu.div(cu.mul(m, pid), 2)
        if m_hi >= a and m_lo <= b:
            hits.append(k)
    return hits


_TRIG_FLOAT_CAP = 1e14


def iv_sin(x, cd, cu):
    a = to_mpfr_down(x[0], cd)
    b = to_mpfr_up(x[1], cu)
    if not (abs(float(a)) < _TRIG_FLOAT_CAP and abs(float(b)) < _TRIG_FLOAT_CAP):
        return (_MONE, _ONE)
    if cu.sub(b, a) >= cu.mul(2, cu.const_pi()):
        return (_MONE, _ONE)
    lo_c = [cd.sin(a), cd.sin(b)]
    hi_c = [cu.sin(a), cu.sin(b)]
    if _trig_extremum_hits(a, b, 1, cd, cu):    # maxima at pi/2 + 2k pi
        hi_c.append(_ONE)
    if _trig_extremum_hits(a, b, -1, cd, cu):   # minima at -pi/2 + 2k pi
        lo_c.append(_MONE)
    return (max(min(lo_c), _MONE), min(max(hi_c), _ONE))


def iv_cos(x, cd, cu):
    a = to_mpfr_down(x[0], cd)
    b = to_mpfr_up(x[1], cu)
    if not (abs(float(a)) < _TRIG_FLOAT_CAP and abs(float(b)) < _TRIG_FLOAT_CAP):
        return (_MONE, _ONE)
    if cu.sub(b, a) >= cu.mul(2, cu.const_pi()):
        return (_MONE, _ONE)
    lo_c = [cd.cos(a), cd.cos(b)]
    hi_c = [cu.cos(a), cu.cos(b)]
    if _trig_extremum_hits(a, b, 0, cd, cu):    # maxima at 2k pi
        hi_c.append(_ONE)
    if _trig_extremum_hits(a, b, 2, cd, cu):    # minima at pi + 2k pi
        lo_c.append(_MONE)
    return (max(min(lo_c), _MONE), min(max(hi_c), _ONE))


def iv_hull(x, y):
    return (min(x[0], y[0]), max(x[1], y[1]))


def iv_width_q(x) -> mpq:
    return mpq(x[1]) - mpq(x[0])


def iv_to_q(x):
    """Exact rational endpoints (mpfr -> mpq conversion is exact)."""
    return (mpq(x[0]), mpq(x[1]))


def iv_contains(x, q) -> bool:
    return x[0] <= q <= x[1]
