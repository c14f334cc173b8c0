"""Computable enumerations feeding the halting-style gallery system.

An enumeration is an injective sequence h(0), h(1), ... of positive integers:
a closed form (successor), an explicit list, or the indices of programs of a
bundled toy register machine that halt on their own index within a step
bound — a genuinely computable stand-in with the same formal shape as a
halting-set enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from .rationals import Q
from .intervals import contexts


class EnumerationExhausted(IndexError):
    pass


# ---------------------------------------------------------------------------
# Toy register machine
#
# A program is decoded from the base-4 digits of its index e (least
# significant first; the empty program for e = 0):
#     0: HALT
#     1: INC  r0
#     2: DEC  r0   (floors at zero)
#     3: JNZ  r0 -> restart from instruction 0
# The machine runs the program with r0 = e; it halts when HALT executes or
# the program counter falls off the end.


def decode_program(e: int):
    digits = []
    n = e
    while n:
        digits.append(n % 4)
        n //= 4
    return digits


def machine_halts(e: int, step_bound: int) -> bool:
    prog = decode_program(e)
    if not prog:
        return True
    r0 = e
    pc = 0
    for _ in range(step_bound):
        if pc >= len(prog):
            return True
        op = prog[pc]
        if op == 0:
            return True
        if op == 1:
            r0 += 1
        elif op == 2:
            r0 = max(0, r0 - 1)
        elif op == 3 and r0 != 0:
            pc = 0
            continue
        pc += 1
    return False


def machine_halting_indices(step_bound: int, count: int):
    """First `count` indices e whose program halts on input e within the bound."""
    out = []
    e = 0
    while len(out) < count and e < 4 ** 12:
        if machine_halts(e, step_bound):
            out.append(e)
        e += 1
    return out


# ---------------------------------------------------------------------------


@dataclass
class EnumSpec:
    """Injective positive-integer enumeration with a finite usable prefix."""

    kind: str                  # "successor" | "explicit" | "machine"
    values: tuple = ()
    step_bound: int = 0
    i_max: int = 64

    def __post_init__(self):
        if self.kind == "explicit":
            vals = tuple(int(v) for v in self.values)
            if any(v <= 0 for v in vals):
                raise ValueError("enumeration values must be positive")
            if len(set(vals)) != len(vals):
                raise ValueError("enumeration must be injective")
            self.values = vals
            self.i_max = len(vals)
        elif self.kind == "machine":
            if self.step_bound <= 0:
                raise ValueError("machine enumeration needs a positive step bound")
            idx = machine_halting_indices(self.step_bound, self.i_max)
            self.values = tuple(e + 1 for e in idx)  # shift to positives
            self.i_max = len(self.values)
        elif self.kind != "successor":
            raise ValueError(f"unknown enumeration kind {self.kind!r}")

    def h(self, i: int) -> int:
        if i < 0 or i >= self.i_max:
            raise EnumerationExhausted(f"h({i}) beyond the enumerated prefix")
        if self.kind == "successor":
            return i + 1
        return self.values[i]

    def prefix(self, count: int):
        return [self.h(i) for i in range(count)]

    @classmethod
    def successor(cls, i_max: int = 1 << 20) -> "EnumSpec":
        return cls(kind="successor", i_max=i_max)

    @classmethod
    def explicit(cls, values) -> "EnumSpec":
        return cls(kind="explicit", values=tuple(values))

    @classmethod
    def machine(cls, step_bound: int, count: int = 64) -> "EnumSpec":
        return cls(kind="machine", step_bound=step_bound, i_max=count)

    @classmethod
    def from_cli(cls, text: str) -> "EnumSpec":
        if text == "successor":
            return cls.successor()
        if text.startswith("list:"):
            return cls.explicit(int(v) for v in text[5:].split(",") if v)
        if text.startswith("machine:"):
            return cls.machine(int(text[8:]))
        raise ValueError(f"unknown enumeration {text!r} "
                         "(use successor | list:a,b,... | machine:BOUND)")

    def to_json(self):
        data = {"kind": self.kind, "i_max": self.i_max}
        if self.kind == "explicit":
            data["values"] = list(self.values)
        if self.kind == "machine":
            data["step_bound"] = self.step_bound
            data["values"] = list(self.values)
        return data

    @classmethod
    def from_json(cls, data) -> "EnumSpec":
        if data["kind"] == "explicit":
            return cls.explicit(data["values"])
        if data["kind"] == "machine":
            return cls.machine(data["step_bound"], data["i_max"])
        return cls.successor(data.get("i_max", 1 << 20))


class RootTwoPower:
    """Exact representation of 2^(-m/2) for integer m >= 0."""

    __slots__ = ("m",)

    def __init__(self, m: int):
        if m < 0:
            raise ValueError("exponent must be nonnegative")
        self.m = int(m)

    def is_rational(self) -> bool:
        return self.m % 2 == 0

    def as_rational(self):
        if not self.is_rational():
            raise ValueError("2^(-m/2) is irrational for odd m")
        return Q(1, 1 << (self.m // 2))

    def interval(self, precision: int = 128):
        if self.is_rational():
            q = self.as_rational()
            return (q, q)
        cd, cu = contexts(precision)
        half = Q(1, 1 << ((self.m + 1) // 2))  # 2^(-m/2) = 2^(-(m+1)/2) * sqrt(2)
        lo = cd.mul(half, cd.sqrt(mpq(2)))
        hi = cu.mul(half, cu.sqrt(mpq(2)))
        return (mpq(lo), mpq(hi))

    def __float__(self):
        return 2.0 ** (-self.m / 2)

    def __repr__(self):
        return f"2^(-{self.m}/2)"

    def __eq__(self, other):
        if isinstance(other, RootTwoPower):
            return self.m == other.m
        if self.is_rational():
            return self.as_rational() == other
        return NotImplemented


def tau(i: int, enum: EnumSpec) -> RootTwoPower:
    """Per-step duration schedule: 2^(-h(i)/2) when h(i) < i, else 2^(-i/2)."""
    hi = enum.h(i)
    m = hi if hi < i else i
    return RootTwoPower(m)


def mu_of(enum: EnumSpec, terms: int):
    """Exact dyadic partial sum of sum_i 2^(-h(i))."""
    if terms > enum.i_max:
        raise EnumerationExhausted(f"only {enum.i_max} terms available")
    return sum((Q(1, 1 << enum.h(i)) for i in range(terms)), Q(0))
