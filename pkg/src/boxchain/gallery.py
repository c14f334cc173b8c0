"""Constructors for the concrete example systems.

Each constructor returns a GalleryProblem: the IVProblem itself, a reference
evaluator where a closed form (or a per-step identity table) exists, and the
frozen certified constants the construction needed (plateau anchors, transit
coefficients). Irrational constants are frozen as certified rational
approximations so that expression trees stay exact; references are defined
self-consistently from the frozen values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from gmpy2 import mpq

from .rationals import Q, dyadic_round, dyadic_ceil, format_rational
from .boxes import RBox
from .regions import AmbientRegion, Hyperplane, AxisIntervalUnion
from .expressions import (Expr, Const, PiConst, Var, Add, Sub, Mul, Div, Sin,
                          Cos, Neg, Piece, Piecewise, parse_expr,
                          eval_vector_box, eval_point, DomainViolation)
from .strata import (Stratum, StratifiedRHS, IVProblem, ConstantModulus,
                     LipschitzModulus, InverseDistanceModulus, DerivedModulus)
from . import intervals as iv
from .intervals import contexts
from .rootfind import (expr_callback, make_bracket, bisect, refine_to_residual,
                       greatest_root_below, BracketNotFound,
                       SignCertificationError)
from .enumerations import EnumSpec, RootTwoPower, tau, mu_of


class GalleryError(RuntimeError):
    pass


@dataclass
class GalleryProblem:
    problem: IVProblem
    reference: object = None       # callable (t, precision) -> per-component (lo, hi)
    solver_hints: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def name(self):
        return self.problem.name


# ---------------------------------------------------------------------------
# shared expression builders


def _osc_about(center) -> Expr:
    """2(x-c) sin(1/(x-c)) - cos(1/(x-c))  — derivative of (x-c)^2 sin(1/(x-c))."""
    c = mpq(center)
    u = Sub(Var(0), Const(c)) if c != 0 else Var(0)
    inv = Div(Const(1), u)
    return Sub(Mul(Mul(Const(2), u), Sin(inv)), Cos(inv))


def _osc_mirror_about(center) -> Expr:
    """-2(x-c) sin(1/(x-c)) + cos(1/(x-c)) — mirror-side derivative piece."""
    c = mpq(center)
    u = Sub(Var(0), Const(c)) if c != 0 else Var(0)
    inv = Div(Const(1), u)
    return Add(Mul(Mul(Const(-2), u), Sin(inv)), Cos(inv))


def _guarded_osc(center) -> Expr:
    """The oscillating derivative made total: value 0 exactly at its center."""
    c = mpq(center)
    return Piecewise(0, [
        Piece(None, c, True, True, _osc_about(c)),
        Piece(c, c, False, False, Const(0)),
        Piece(c, None, True, True, _osc_about(c)),
    ])


def _quad_sin_sq(t, center, prec):
    """Interval value of (t-c)^2 sin(1/(t-c)); exactly 0 at t = c."""
    t, c = mpq(t), mpq(center)
    if t == c:
        return (Q(0), Q(0))
    cd, cu = contexts(prec)
    u = (t - c, t - c)
    s = iv.iv_sin(iv.iv_div((Q(1), Q(1)), u, cd, cu), cd, cu)
    return iv.iv_to_q(iv.iv_mul(iv.iv_pow_int(u, 2, cd, cu), s, cd, cu))


# ---------------------------------------------------------------------------
# Example 1: unique solution crossing a discontinuity line


def make_firstex() -> GalleryProblem:
    """Plane system with f = (1, 2x sin(1/x) - cos(1/x)), constant (1,0) on
    the discontinuity line {x1 = 0}; solution (t-1, (t-1)^2 sin(1/(t-1)))."""
    ambient = RBox([-5, -15], [5, 15])
    f2 = _guarded_osc(0)
    strata = [
        Stratum(AmbientRegion(ambient), (Const(1), f2),
                InverseDistanceModulus(0, [0], 2, 2, 1)),
        Stratum(Hyperplane(0, 0), (Const(1), Const(0)), ConstantModulus(1)),
    ]
    rhs = StratifiedRHS(ambient, strata, K=16)
    y02 = _firstex_y0_second()
    problem = IVProblem(rhs, (Q(-3), y02), -2, 2, name="firstex")

    def reference(t, precision=128):
        t = mpq(t)
        return ((t - 1, t - 1), _quad_sin_sq(t, 1, precision))

    return GalleryProblem(problem, reference,
                          extras={"crossing_time": Q(1),
                                  "crossing_point": (Q(0), Q(0))})


def _firstex_y0_second():
    """Certified dyadic approximation of 9 sin(-1/3) (y0 must be rational)."""
    cd, cu = contexts(192)
    val = iv.iv_mul((Q(9), Q(9)),
                    iv.iv_sin((Q(-1, 3), Q(-1, 3)), cd, cu), cd, cu)
    mid = (mpq(val[0]) + mpq(val[1])) / 2
    return dyadic_round(mid, 72)


# ---------------------------------------------------------------------------
# Derivative-to-system adapter


def derivative_to_ivp(g0, gprime: Expr, a, b, K, extra_strata=None,
                      bound_check: bool = True, name: str = "derivative") -> IVProblem:
    """System (y1' = 1, y2' = g'(y1)) with y(a) = (a, g0) on [a, b].

    The ambient is padded slightly beyond [a, b] so open boxes can hold the
    endpoint anchors. With `bound_check` the branch is interval-checked to
    stay within [-K, K]; declared deeper strata suppress the check when the
    branch has (declared) singular points inside the window.
    """
    a, b, K, g0 = mpq(a), mpq(b), mpq(K), mpq(g0)
    if not a < b:
        raise ValueError("need a < b")
    pad = (b - a) / 16
    ambient = RBox([a - pad, -K], [b + pad, K])
    if bound_check:
        try:
            enc = eval_vector_box((gprime,), [(a - pad, b + pad), (-K, K)], 128)
            if enc.los[0] < -K or enc.his[0] > K:
                raise GalleryError(
                    f"derivative enclosure {enc.los[0]}..{enc.his[0]} exceeds K={K}")
        except DomainViolation:
            if not extra_strata:
                raise GalleryError(
                    "derivative has singularities in the window but no deeper "
                    "strata are declared") from None
    # K for the model must dominate the state-space norm and |f|
    norm_sq = max(abs(a - pad), abs(b + pad)) ** 2 + K * K
    K_model = dyadic_ceil(_sqrt_upper_q(norm_sq), 8) + 1
    strata = [Stratum(AmbientRegion(ambient), (Const(1), gprime), DerivedModulus())]
    strata.extend(extra_strata or [])
    rhs = StratifiedRHS(ambient, strata, K=K_model)
    return IVProblem(rhs, (a, g0), a, b, name=name)


def _sqrt_upper_q(q):
    from .rationals import sqrt_upper
    return sqrt_upper(q)


# ---------------------------------------------------------------------------
# Staircase constructions over (fat) middle-removed sets


@dataclass(frozen=True)
class CantorSpec:
    """Truncated middle-removal construction.

    `level` is the deepest removal step N (inclusive): levels n = 0..N
    contribute 2^n removed open intervals each. `fat` removes the middle
    1/(n+2) fraction at step n instead of the middle third.
    """

    level: int
    fat: bool = False

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.level > 12:
            raise ValueError("levels beyond 12 are impractical here")

    def removed_intervals(self):
        """[(a, b, n)] for all removal levels n <= level, sorted by a."""
        blocks = [(Q(0), Q(1))]
        out = []
        for n in range(self.level + 1):
            frac = Q(1, n + 2) if self.fat else Q(1, 3)
            nxt = []
            for (lo, hi) in blocks:
                w = hi - lo
                mid = (lo + hi) / 2
                half = w * frac / 2
                ra, rb = mid - half, mid + half
                out.append((ra, rb, n))
                nxt.append((lo, ra))
                nxt.append((rb, hi))
            blocks = nxt
        out.sort()
        return out, blocks


_ANCHOR_EQ = parse_expr("2*x1*sin(1/x1) - cos(1/x1)")
_ANCHOR_FN = expr_callback(_ANCHOR_EQ)


def plateau_anchor(length, residual_target=Q(1, 10 ** 10)):
    """Greatest u in (0, length/2) with 2u sin(1/u) = cos(1/u), frozen as a
    certified dyadic with defining-equation residual <= residual_target."""
    half = mpq(length) / 2
    bracket = greatest_root_below(_ANCHOR_FN, half, half / 50, Q(1, 4), 400)
    bracket = bisect(_ANCHOR_FN, bracket, bracket.width() / (1 << 20))
    bracket = refine_to_residual(_ANCHOR_FN, bracket, residual_target / 2)
    bits = 16
    w = bracket.width()
    while Q(1, 1 << bits) > w / 4:
        bits += 8
    u = dyadic_round(bracket.midpoint(), bits)
    if not bracket.lo < u < bracket.hi:
        u = bracket.midpoint()
    enc = eval_point(_ANCHOR_EQ, (u,), 256)
    residual = max(abs(enc.los[0]), abs(enc.his[0]))
    if residual > residual_target:
        raise GalleryError(f"anchor residual {float(residual)} above target")
    return u, residual


def _staircase_pieces(intervals_with_anchors, base_center=None):
    """Global piecewise for the truncated staircase derivative; optionally
    adds the extra oscillating term centered at `base_center` (rank-2 case
    handles that separately, so this builds only the staircase part)."""
    pieces = []
    prev_hi = None
    for (a, b, _n, u) in intervals_with_anchors:
        xhat = a + u
        c = a + b - xhat
        # gap piece carries the endpoint values g'(a) = g'(b) = 0
        pieces.append(Piece(prev_hi, a, prev_hi is None, False, Const(0)))
        pieces.append(Piece(a, xhat, True, False, _osc_about(a)))
        pieces.append(Piece(xhat, c, True, True, Const(0)))
        pieces.append(Piece(c, b, False, True, _osc_mirror_about(b)))
        prev_hi = b
    pieces.append(Piece(prev_hi, None, False, True, Const(0)))
    return Piecewise(0, pieces)


def _staircase_value(x, intervals_with_anchors, prec):
    """Interval value of the truncated series primitive g at rational x."""
    x = mpq(x)
    for (a, b, _n, u) in intervals_with_anchors:
        if not (a < x < b):
            continue
        xhat = a + u
        c = a + b - xhat
        if x <= xhat:
            return _quad_sin_sq(x, a, prec)
        if x < c:
            return _quad_sin_sq(xhat, a, prec)
        lo, hi = _quad_sin_sq(x, b, prec)
        return (-hi, -lo)
    return (Q(0), Q(0))


def make_cantor(spec: CantorSpec) -> GalleryProblem:
    """Staircase system whose declared discontinuity set is the truncated
    endpoint set of the middle-removal construction."""
    intervals, blocks = spec.removed_intervals()
    with_anchors = []
    anchors = {}
    for (a, b, n) in intervals:
        u, residual = plateau_anchor(b - a)
        with_anchors.append((a, b, n, u))
        anchors[(format_rational(a), format_rational(b))] = {
            "level": n, "u": u, "anchor": a + u, "residual": residual,
            "below_midpoint": a + u < (a + b) / 2}
    gp = _staircase_pieces(with_anchors)
    endpoints = []
    for (a, b, _n, _u) in with_anchors:
        endpoints.append((a, a))
        endpoints.append((b, b))
    extra = [Stratum(AxisIntervalUnion(0, endpoints), (Const(1), Const(0)),
                     ConstantModulus(1))]
    name = f"fatcantor:{spec.level}" if spec.fat else f"cantor:{spec.level}"
    problem = derivative_to_ivp(0, gp, 0, 1, K=2, extra_strata=extra,
                                bound_check=False, name=name)

    def reference(t, precision=128):
        t = mpq(t)
        return ((t, t), _staircase_value(t, with_anchors, precision))

    return GalleryProblem(problem, reference,
                          extras={"anchors": anchors,
                                  "intervals": with_anchors,
                                  "blocks": blocks,
                                  "spec": spec})


def make_rank2(spec: CantorSpec) -> GalleryProblem:
    """Staircase plus x^2 sin(1/x): three-level chain. The restriction of the
    derivative to the endpoint set is 2x sin(1/x) - cos(1/x), discontinuous
    only at 0, so E2 = {0}."""
    intervals, blocks = spec.removed_intervals()
    with_anchors = []
    for (a, b, n) in intervals:
        u, _residual = plateau_anchor(b - a)
        with_anchors.append((a, b, n, u))
    staircase = _staircase_pieces(with_anchors)
    base = _guarded_osc(0)
    gp = Add(base, staircase)
    endpoints = [(Q(0), Q(0))]
    for (a, b, _n, _u) in with_anchors:
        endpoints.append((a, a))
        endpoints.append((b, b))
    extra = [
        Stratum(AxisIntervalUnion(0, sorted(endpoints)), (Const(1), base),
                InverseDistanceModulus(0, [0], 2, 2, 1)),
        Stratum(Hyperplane(0, 0), (Const(1), Const(0)), ConstantModulus(1)),
    ]
    problem = derivative_to_ivp(0, gp, 0, 1, K=5, extra_strata=extra,
                                bound_check=False, name=f"rank2:{spec.level}")

    def reference(t, precision=128):
        t = mpq(t)
        cd, cu = contexts(precision)
        base_v = _quad_sin_sq(t, 0, precision)
        stair_v = _staircase_value(t, with_anchors, precision)
        return ((t, t), iv.iv_to_q(iv.iv_add(base_v, stair_v, cd, cu)))

    return GalleryProblem(problem, reference,
                          extras={"intervals": with_anchors, "spec": spec})


# ---------------------------------------------------------------------------
# The halting-style encoder


def transit_time(i: int, k, precision: int = 160):
    """Closed-form interval for the time the first component needs to cross
    band i = [-2^-i, -2^-(i+1)] under the tent field with coefficient k.

    Equals ln(k 2^i + 3/4)/(k 2^(i+2) - 1) + ln(k 2^(i+1) + 3/2)/(k 2^(i+2) + 1),
    with the exact limit value 2^(-i-2)/(4k) + second term when the first
    denominator vanishes.
    """
    k = mpq(k)
    if k <= 0:
        raise ValueError("transit coefficient must be positive")
    cd, cu = contexts(precision)
    a = k * (1 << (i + 2)) - 1
    arg1 = k * (1 << i) + Q(3, 4)
    arg2 = k * (1 << (i + 1)) + Q(3, 2)
    b = k * (1 << (i + 2)) + 1
    second = iv.iv_div(iv.iv_ln((arg2, arg2), cd, cu), (b, b), cd, cu)
    if a == 0:
        first = (Q(1, 4), Q(1, 4))
    else:
        first = iv.iv_div(iv.iv_ln((arg1, arg1), cd, cu), (a, a), cd, cu)
    return iv.iv_to_q(iv.iv_add(first, second, cd, cu))


def scaled_step_target(i: int, enum: EnumSpec, time_scale=Q(1),
                       paper_literal: bool = False, precision: int = 160):
    """Interval for the band-i duration target: tau(i) in paper-literal mode,
    else time_scale * (ln 2 / 2) * tau(i)."""
    t = tau(i, enum).interval(precision)
    if paper_literal:
        ts = mpq(time_scale)
        return (t[0] * ts, t[1] * ts)
    cd, cu = contexts(precision)
    ln2 = (cd.log(2), cu.log(2))
    val = iv.iv_mul(iv.iv_mul(t, ln2, cd, cu),
                    (mpq(time_scale) / 2, mpq(time_scale) / 2), cd, cu)
    return iv.iv_to_q(val)


def solve_band_coefficient(i: int, enum: EnumSpec, time_scale=Q(1),
                           paper_literal: bool = False,
                           residual_target=Q(1, 2 * 10 ** 9)):
    """Certified rational k(i) with |transit_time(i, k) - target| <= residual.

    Reports a bracketing failure (with the scanned range) when the target is
    not attainable — which is the generic situation in paper-literal mode,
    where the target can exceed the k->0 supremum ln 2 of the transit time.
    """
    target = scaled_step_target(i, enum, time_scale, paper_literal)

    def fn(k, precision):
        lo, hi = transit_time(i, k, precision)
        return (lo - target[1], hi - target[0])

    k_lo = Q(1, 1 << 24)
    k_hi = Q(1)
    tries = 0
    while tries < 60:
        val = fn(k_hi, 160)
        if val[1] < 0:
            break
        k_hi *= 2
        tries += 1
    try:
        bracket = make_bracket(fn, k_lo, k_hi)
    except (BracketNotFound, SignCertificationError) as exc:
        raise GalleryError(
            f"no transit coefficient for band {i}: target "
            f"[{float(target[0]):.6g}, {float(target[1]):.6g}] not bracketed "
            f"over k in [{float(k_lo):.3g}, {float(k_hi):.3g}] "
            f"(k->0 transit supremum is ln 2 ~ 0.6931)") from exc
    bracket = bisect(fn, bracket, bracket.width() / (1 << 16))
    bracket = refine_to_residual(fn, bracket, residual_target)
    bits = 16
    while Q(1, 1 << bits) > bracket.width() / 4:
        bits += 8
    k = dyadic_round(bracket.midpoint(), bits)
    if not bracket.lo < k < bracket.hi:
        k = bracket.midpoint()
    return k


def make_halting(enum: EnumSpec, steps: int, time_scale=Q(1),
                 paper_literal: bool = False) -> GalleryProblem:
    """Two-component encoder: y1 doubles toward 0 through dyadic bands while
    y2 accrues 2^(-h(i+1)) per band, approaching the enumeration's encoded
    real. Truncated at `steps` bands; beyond them the field decays linearly
    to the (declared) discontinuity line {x1 = 0}.
    """
    if steps < 1:
        raise ValueError("need at least one band")
    if enum.i_max < steps + 1:
        raise ValueError("enumeration prefix too short for the requested steps")
    time_scale = mpq(time_scale)
    if not 0 < time_scale <= 1:
        raise ValueError("time_scale must be in (0, 1]")

    ks = []
    band_refs = []
    f1_pieces = [Piece(None, Q(-1), True, True, Const(1))]
    f2_pieces = [Piece(None, Q(-1), True, True, Const(0))]
    t_lo, t_hi = Q(0), Q(0)
    y2 = Q(1, 1 << enum.h(0))
    for i in range(steps):
        k = solve_band_coefficient(i, enum, time_scale, paper_literal)
        ks.append(k)
        left = Q(-1, 1 << i)
        knot = Q(-3, 1 << (i + 2))
        right = Q(-1, 1 << (i + 1))
        a_up = k * (1 << (i + 2)) - 1
        a_dn = k * (1 << (i + 2)) + 1
        f1_up = Add(Mul(Const(a_up), Var(0)), Const(4 * k))
        f1_dn = Sub(Mul(Const(-a_dn), Var(0)), Const(2 * k))
        f1_pieces.append(Piece(left, knot, False, True, f1_up))
        f1_pieces.append(Piece(knot, right, False, True, f1_dn))
        # y2' = 2^(-h(i+1)-1) * (pi / width) * f1 * sin(pi (x1 - left)/width)
        coef = Q(1, 1 << (enum.h(i + 1) + 1)) * (1 << (i + 1))
        phase = Mul(PiConst(), Mul(Const(1 << (i + 1)), Sub(Var(0), Const(left))))
        for (piece_lo, piece_hi, f1p) in ((left, knot, f1_up), (knot, right, f1_dn)):
            body = Mul(Const(coef), Mul(PiConst(), Mul(f1p, Sin(phase))))
            f2_pieces.append(Piece(piece_lo, piece_hi, False, True, body))
        tt = transit_time(i, k)
        t_lo, t_hi = t_lo + tt[0], t_hi + tt[1]
        y2 += Q(1, 1 << enum.h(i + 1))
        band_refs.append({
            "i": i, "k": k, "transit": tt,
            "t_end": (t_lo, t_hi),
            "y1_target": Q(-1, 1 << (i + 1)),
            "y2_target": y2,
            "y2_increment": Q(1, 1 << enum.h(i + 1)),
        })
    tail = Q(-1, 1 << steps)
    f1_pieces.append(Piece(tail, Q(0), False, True, Neg(Var(0))))
    f1_pieces.append(Piece(Q(0), None, False, True, Const(0)))
    f2_pieces.append(Piece(tail, None, False, True, Const(0)))
    f1 = Piecewise(0, f1_pieces)
    f2 = Piecewise(0, f2_pieces)

    ambient = RBox([-5, -5], [5, 5])
    strata = [
        Stratum(AmbientRegion(ambient), (f1, f2), DerivedModulus()),
        Stratum(Hyperplane(0, 0), (Const(0), Const(0)), ConstantModulus(1)),
    ]
    rhs = StratifiedRHS(ambient, strata, K=8)
    t_end = dyadic_ceil(t_hi, 24) + Q(1, 64)
    y0 = (Q(-1), Q(1, 1 << enum.h(0)))
    problem = IVProblem(rhs, y0, 0, t_end, name="halting")
    return GalleryProblem(
        problem, None,
        solver_hints={"crossing_halfwidth": None},
        extras={"bands": band_refs, "enum": enum, "steps": steps,
                "time_scale": time_scale, "paper_literal": paper_literal,
                "total_time": (t_lo, t_hi),
                "mu_partial": mu_of(enum, steps + 1)})


# ---------------------------------------------------------------------------
# registry for the CLI


def build(selector: str) -> GalleryProblem:
    """Gallery lookup by CLI name: firstex | cantor:N | fatcantor:N |
    rank2:N | halting[:steps]."""
    if selector == "firstex":
        return make_firstex()
    if selector.startswith("cantor:"):
        return make_cantor(CantorSpec(int(selector.split(":", 1)[1])))
    if selector.startswith("fatcantor:"):
        return make_cantor(CantorSpec(int(selector.split(":", 1)[1]), fat=True))
    if selector.startswith("rank2:"):
        return make_rank2(CantorSpec(int(selector.split(":", 1)[1])))
    if selector == "halting":
        return make_halting(EnumSpec.successor(), steps=20)
    if selector.startswith("halting:"):
        return make_halting(EnumSpec.successor(), steps=int(selector.split(":", 1)[1]))
    raise GalleryError(f"unknown problem selector {selector!r}")


GALLERY_NAMES = ("firstex", "cantor:N", "fatcantor:N", "rank2:N", "halting")
