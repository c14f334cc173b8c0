"""Exact rational scalars.

Rationals are gmpy2.mpq values: arbitrary precision, always stored in lowest
terms with positive denominator. This module adds the parsing/printing and
dyadic-rounding helpers the rest of the library needs; everything downstream
imports ``Q`` from here rather than touching gmpy2 directly.
"""

from __future__ import annotations

import gmpy2
from gmpy2 import mpq, mpz

Q = mpq

ZERO = mpq(0)
ONE = mpq(1)
TWO = mpq(2)
HALF = mpq(1, 2)


def to_q(value) -> mpq:
    """Coerce ints, strings ("p/q", "3", "1.25") or mpq to an exact rational.

    Floats are rejected: binary floats silently encode rounding and every
    entry point of this library is supposed to be exact.
    """
    if isinstance(value, mpq):
        return value
    if isinstance(value, (int, mpz)):
        return mpq(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"cannot coerce {type(value).__name__} to an exact rational")


def parse_rational(text: str) -> mpq:
    """Parse "p/q", integer, or decimal text into an exact rational."""
    s = text.strip()
    if not s:
        raise ValueError("empty rational literal")
    if "/" in s:
        num, _, den = s.partition("/")
        d = mpz(den.strip())
        if d == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return mpq(mpz(num.strip()), d)
    if "e" in s or "E" in s:
        mant, _, exp = s.replace("E", "e").partition("e")
        return parse_rational(mant) * mpq(10) ** int(exp)
    if "." in s:
        sign = -1 if s.lstrip().startswith("-") else 1
        s2 = s.lstrip("+-")
        whole, _, frac = s2.partition(".")
        scale = mpz(10) ** len(frac)
        return sign * mpq(mpz(whole or "0") * scale + mpz(frac or "0"), scale)
    return mpq(mpz(s))


def format_rational(q) -> str:
    """Render an exact rational as "p/q" (or "p" for integers)."""
    q = mpq(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def dyadic_floor(q, bits: int) -> mpq:
    """Largest multiple of 2**-bits that is <= q."""
    q = mpq(q)
    scaled = q * (mpz(1) << bits)
    return mpq(scaled.numerator // scaled.denominator, mpz(1) << bits)


def dyadic_ceil(q, bits: int) -> mpq:
    return -dyadic_floor(-mpq(q), bits)


def dyadic_round(q, bits: int) -> mpq:
    """Nearest multiple of 2**-bits (ties toward -inf; deterministic)."""
    return dyadic_floor(mpq(q) + mpq(1, mpz(1) << (bits + 1)), bits)


def floor_log2(q) -> int:
    """floor(log2(q)) for q > 0, exactly."""
    q = mpq(q)
    if q <= 0:
        raise ValueError("floor_log2 requires a positive rational")
    n, d = q.numerator, q.denominator
    e = n.bit_length() - d.bit_length()
    # 2**e <= n/d < 2**(e+2); fix up the off-by-one.
    if (n << max(0, -e)) < (d << max(0, e)):
        e -= 1
    return e


def isqrt_floor(n: mpz) -> mpz:
    return gmpy2.isqrt(n)


def sqrt_upper(q, bits: int = 64) -> mpq:
    """A rational upper bound on sqrt(q), within 2**-bits relative slack."""
    q = mpq(q)
    if q < 0:
        raise ValueError("sqrt of negative rational")
    if q == 0:
        return ZERO
    shift = mpz(1) << (2 * bits)
    # ceil(sqrt(n*shift^... )): sqrt(p/q) <= isqrt(p*s*s*q)/ (s*q) with s = 2**bits
    num = q.numerator * q.denominator * shift
    r = gmpy2.isqrt(num)
    if r * r < num:
        r += 1
    return mpq(r, q.denominator * (mpz(1) << bits))


def decimal_str(q, sig: int = 17) -> str:
    """Deterministic scientific rendering with `sig` significant digits.

    Exact integer arithmetic throughout; round-half-away-from-zero. Used for
    CSV output where byte-identical reruns matter.
    """
    q = mpq(q)
    if q == 0:
        return "0." + "0" * (sig - 1) + "e+00"
    sign = "-" if q < 0 else ""
    a = abs(q)
    # exponent e with 10^e <= a < 10^(e+1)
    e = 0
    n, d = a.numerator, a.denominator
    # crude scale by digit counts then correct
    e = len(str(n)) - len(str(d))
    while mpz(10) ** max(e, 0) * d > n * mpz(10) ** max(-e, 0):
        e -= 1
    while mpz(10) ** max(e + 1, 0) * d <= n * mpz(10) ** max(-(e + 1), 0):
        e += 1
    # digits = round(a / 10^(e - sig + 1))
    k = e - sig + 1
    if k <= 0:
        num, den = n * mpz(10) ** (-k), d
    else:
        num, den = n, d * mpz(10) ** k
    digits, rem = divmod(num, den)
    if 2 * rem >= den:
        digits += 1
    ds = str(digits)
    if len(ds) > sig:  # rounding bumped 999..9 to 1000..0
        ds = ds[:sig]
        e += 1
    exp = f"{'+' if e >= 0 else '-'}{abs(e):02d}"
    return f"{sign}{ds[0]}.{ds[1:]}e{exp}"
