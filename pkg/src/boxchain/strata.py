"""Stratified right-hand sides: declared removed-set chains with branches.

A right-hand term f is declared as a decreasing chain of regions
E_0 ⊃ E_1 ⊃ ... ⊃ E_{R-1} (E_R = ∅ implicitly) together with, per level, a
branch expression vector equal to f restricted near that level's region and a
modulus-of-continuity handle. The chain is *declared* by the problem author;
this module provides the exact queries the search rules need (which stratum a
box sits at, certified branch enclosures) and sampled falsification of the
declaration (region chain decreasingness, continuity/discontinuity evidence).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from gmpy2 import mpq

from .rationals import Q, format_rational, parse_rational
from .boxes import RBox
from .regions import (Region, AmbientRegion, Hyperplane, AxisIntervalUnion,
                      PointSet, EmptyRegion, region_from_json, _grid_points)
from .expressions import (Expr, parse_expr, eval_vector_box, eval_vector_point,
                          Enclosure, DomainViolation)


class StratumQueryError(ValueError):
    pass


class DegenerateGridError(RuntimeError):
    """No sample point of the requested grid landed in the stratum region."""


# ---------------------------------------------------------------------------
# Moduli of continuity (eps -> delta handles, queried per sub-box)


class Modulus:
    kind = "derived"

    def delta(self, eps, box: RBox):
        """A delta such that |x-z| <= delta forces branch variation <= eps on
        the queried box, or None when the handle has nothing to offer."""
        return None

    def to_json(self):
        return {"kind": self.kind}


class DerivedModulus(Modulus):
    """No declared handle; consumers derive steps from interval evaluation."""


class ConstantModulus(Modulus):
    """Fixed delta regardless of eps; valid for constant branches."""

    kind = "constant"

    def __init__(self, value):
        self.value = mpq(value)
        if self.value <= 0:
            raise ValueError("modulus value must be positive")

    def delta(self, eps, box: RBox):
        return self.value

    def to_json(self):
        return {"kind": self.kind, "delta": format_rational(self.value)}


class LipschitzModulus(Modulus):
    kind = "lipschitz"

    def __init__(self, L):
        self.L = mpq(L)
        if self.L <= 0:
            raise ValueError("Lipschitz constant must be positive")

    def delta(self, eps, box: RBox):
        return mpq(eps) / self.L

    def to_json(self):
        return {"kind": self.kind, "L": format_rational(self.L)}


class InverseDistanceModulus(Modulus):
    """Local Lipschitz bound L(d) = c0 + c1/d + c2/d^2 where d is the distance
    from the queried box (along one axis) to declared singular values."""

    kind = "inverse_distance"

    def __init__(self, axis: int, values, c0, c1, c2):
        self.axis = int(axis)
        self.values = tuple(sorted(mpq(v) for v in values))
        self.c0, self.c1, self.c2 = mpq(c0), mpq(c1), mpq(c2)

    def _distance(self, box: RBox):
        lo, hi = box.lo[self.axis], box.hi[self.axis]
        best = None
        for v in self.values:
            if lo <= v <= hi:
                return mpq(0)
            d = lo - v if v < lo else v - hi
            best = d if best is None else min(best, d)
        return best

    def delta(self, eps, box: RBox):
        d = self._distance(box)
        if d is None or d <= 0:
            return None
        L = self.c0 + self.c1 / d + self.c2 / (d * d)
        return mpq(eps) / L

    def to_json(self):
        return {"kind": self.kind, "axis": self.axis + 1,
                "values": [format_rational(v) for v in self.values],
                "c0": format_rational(self.c0), "c1": format_rational(self.c1),
                "c2": format_rational(self.c2)}


def modulus_from_json(data) -> Modulus:
    kind = data.get("kind", "derived")
    if kind == "derived":
        return DerivedModulus()
    if kind == "constant":
        return ConstantModulus(parse_rational(data["delta"]))
    if kind == "lipschitz":
        return LipschitzModulus(parse_rational(data["L"]))
    if kind == "inverse_distance":
        return InverseDistanceModulus(
            data["axis"] - 1, [parse_rational(v) for v in data["values"]],
            parse_rational(data["c0"]), parse_rational(data["c1"]),
            parse_rational(data["c2"]))
    raise ValueError(f"unknown modulus kind {kind!r}")


# ---------------------------------------------------------------------------
# The stratified model


@dataclass
class Stratum:
    region: Region
    branch: tuple          # tuple[Expr, ...]
    modulus: Modulus = field(default_factory=DerivedModulus)

    def __post_init__(self):
        self.branch = tuple(self.branch)


class StratifiedRHS:
    """Right-hand term with declared strata E_0 ⊃ ... ⊃ E_{R-1} (E_R = ∅).

    `ambient` is interpreted as a closed compact domain even though RBox
    endpoints are open; containment queries against it use closures. K must
    dominate both sup-norm of the state space and |f| over it.
    """

    def __init__(self, ambient: RBox, strata, K):
        self.ambient = ambient
        self.strata = list(strata)
        self.K = mpq(K)
        if not self.strata:
            raise ValueError("need at least the rank-0 stratum")
        if not isinstance(self.strata[0].region, AmbientRegion):
            raise ValueError("stratum 0 region must be the ambient domain")
        self.strata[0].region.ambient = ambient
        for s in self.strata:
            if isinstance(s.region, AmbientRegion):
                s.region.ambient = ambient
        dims = ambient.dims
        for s in self.strata:
            if len(s.branch) != dims:
                raise ValueError("branch arity must match ambient dimension")
        if self.K <= 0:
            raise ValueError("K must be positive")

    @property
    def rank(self) -> int:
        return len(self.strata)

    @property
    def dims(self) -> int:
        return self.ambient.dims

    def region(self, beta: int) -> Region:
        if beta >= self.rank:
            return EmptyRegion()
        return self.strata[beta].region

    def to_json(self):
        return {
            "ambient": self.ambient.to_json(),
            "rank": self.rank,
            "K": format_rational(self.K),
            "strata": [
                {"region": s.region.to_json(),
                 "branches": [e.to_text() for e in s.branch],
                 "modulus": s.modulus.to_json()}
                for s in self.strata
            ],
        }

    @classmethod
    def from_json(cls, data) -> "StratifiedRHS":
        ambient = RBox.from_json(data["ambient"])
        strata = []
        for sdata in data["strata"]:
            strata.append(Stratum(
                region=region_from_json(sdata["region"]),
                branch=tuple(parse_expr(t) for t in sdata["branches"]),
                modulus=modulus_from_json(sdata.get("modulus", {"kind": "derived"})),
            ))
        return cls(ambient, strata, parse_rational(data["K"]))


@dataclass
class IVProblem:
    rhs: StratifiedRHS
    y0: tuple
    t_start: object
    t_end: object
    name: str = "problem"

    def __post_init__(self):
        self.y0 = tuple(mpq(y) for y in self.y0)
        self.t_start = mpq(self.t_start)
        self.t_end = mpq(self.t_end)
        if self.t_start >= self.t_end:
            raise ValueError("t_start must precede t_end")
        if not self.rhs.ambient.closure_contains_point(self.y0):
            raise ValueError("y0 must lie in the ambient domain")

    @property
    def duration(self):
        return self.t_end - self.t_start

    def to_json(self):
        data = self.rhs.to_json()
        data["y0"] = [format_rational(y) for y in self.y0]
        data["t_start"] = format_rational(self.t_start)
        data["t_end"] = format_rational(self.t_end)
        data["name"] = self.name
        return data

    @classmethod
    def from_json(cls, data) -> "IVProblem":
        return cls(rhs=StratifiedRHS.from_json(data),
                   y0=[parse_rational(y) for y in data["y0"]],
                   t_start=parse_rational(data["t_start"]),
                   t_end=parse_rational(data["t_end"]),
                   name=data.get("name", "problem"))


# ---------------------------------------------------------------------------
# Queries


def stratum_of_box(rhs: StratifiedRHS, box: RBox):
    """The unique beta with cl(box) meeting E_beta but not E_{beta+1}.

    With a declared finite rank the deepest contacted level always qualifies,
    so None only signals a malformed query (empty box).
    """
    if box.is_empty:
        return None
    deepest = 0
    for beta in range(1, rhs.rank):
        if rhs.region(beta).closed_box_intersects(box):
            deepest = beta
    return deepest


def enclose_branch(rhs: StratifiedRHS, beta: int, box: RBox,
                   precision: int = 128, width_target=None,
                   max_precision: int = 1024) -> RBox:
    """Open box strictly containing branch_beta(cl(box) ∩ E_beta).

    Doubles the working precision until the enclosure stops being dominated
    by rounding (or `width_target` is met), up to `max_precision`.
    """
    if box.is_empty:
        raise StratumQueryError("cannot enclose a branch over the empty box")
    stratum = rhs.strata[beta]
    pieces = stratum.region.clip_closed_box(box)
    if not pieces:
        raise StratumQueryError(f"box does not meet stratum {beta} region")
    prec = precision
    enc = None
    while True:
        enc = _hull_eval(stratum.branch, pieces, prec)
        if width_target is None:
            break
        if max(enc.widths()) <= mpq(width_target) or prec >= max_precision:
            break
        prec *= 2
    if width_target is not None and max(enc.widths()) > mpq(width_target):
        raise StratumQueryError(
            f"enclosure width target {width_target} unreachable at precision "
            f"{prec}; the queried box is too large")
    floor = Q(1, 1 << max(16, precision - 8))
    margins = [w / 4 + floor for w in enc.widths()]
    return enc.to_box(margins)


def _hull_eval(branch, pieces, prec) -> Enclosure:
    enc = None
    for lo, hi in pieces:
        if lo == hi:
            part = eval_vector_point(branch, lo, prec)
        else:
            part = eval_vector_box(branch, list(zip(lo, hi)), prec)
        enc = part if enc is None else enc.hull(part)
    return enc


def _nested_ball_grid(x, delta, m: int):
    """Points x + delta*(j/m) per axis, j in [-m, m]; nested under joint
    (delta, m) doubling and under m alone."""
    coords = [[mpq(xi) + mpq(delta) * Q(j, m) for j in range(-m, m + 1)] for xi in x]
    pts = [()]
    for vals in coords:
        pts = [p + (v,) for p in pts for v in vals]
    return pts


def _pow2_floor(n: int) -> int:
    m = 1
    while 2 * m <= n:
        m *= 2
    return m


def oscillation_estimate(rhs: StratifiedRHS, beta: int, x, delta, grid_n: int,
                         precision: int = 64):
    """Certified lower bound on the oscillation of branch_beta restricted to
    E_beta over the ball B(x, delta), from nested grid samples.

    The bound is the largest single-component spread between sample values
    (using outward enclosures), which two witnesses always realize.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    x = tuple(mpq(v) for v in x)
    delta = mpq(delta)
    region = rhs.region(beta)
    # grid the bounding box, clip to region and the euclidean ball
    r = rhs.dims
    per_axis = max(1, _pow2_floor(int(round(grid_n ** (1.0 / r)))) // 2)
    raw = _nested_ball_grid(x, delta, per_axis)
    d2 = delta * delta
    pts = []
    for p in raw:
        if not region.contains_point(p):
            continue
        if sum(((a - b) ** 2 for a, b in zip(p, x)), mpq(0)) > d2:
            continue
        if not rhs.ambient.closure_contains_point(p):
            continue
        pts.append(p)
    if isinstance(region, (Hyperplane, AxisIntervalUnion, PointSet)):
        # axis grids rarely land exactly on thin regions; sample them directly
        for q in region.clip_closed_box(RBox.around(x, delta)):
            lo, hi = q
            sub = _grid_points(lo, hi, grid_n)
            for p in sub:
                if sum(((a - b) ** 2 for a, b in zip(p, x)), mpq(0)) <= d2 \
                        and rhs.ambient.closure_contains_point(p):
                    pts.append(p)
    if not pts:
        raise DegenerateGridError(
            f"no grid point of B(x, {format_rational(delta)}) lies in stratum "
            f"{beta}'s region")
    branch = rhs.strata[beta].branch
    los = [None] * rhs.dims
    his = [None] * rhs.dims
    for p in pts:
        enc = eval_vector_point(branch, p, precision)
        for k in range(rhs.dims):
            if los[k] is None or enc.his[k] < los[k]:
                los[k] = enc.his[k]      # certified value <= this
            if his[k] is None or enc.los[k] > his[k]:
                his[k] = enc.los[k]      # certified value >= this
    spread = max((hi - lo for lo, hi in zip(los, his)), default=mpq(0))
    return max(spread, mpq(0))


# ---------------------------------------------------------------------------
# Sampled verification of the declaration


@dataclass
class EvidenceItem:
    stratum: int
    point: tuple
    deltas: list
    estimates: list
    status: str     # "pass" | "inconclusive"


@dataclass
class StratificationReport:
    chain_decreasing: list
    continuity: list
    discontinuity: list
    branch_agreement: list
    note: str = ("sampled falsification only: solvability requires closed "
                 "discontinuity sets for ALL closed restrictions; the "
                 "declared chain is partial evidence")

    def stratum_status(self, beta: int, which: str) -> str:
        items = [e for e in (self.continuity if which == "continuity"
                             else self.discontinuity) if e.stratum == beta]
        if not items:
            return "inconclusive"
        passed = sum(1 for e in items if e.status == "pass")
        return "pass" if 2 * passed > len(items) else "inconclusive"

    def all_pass(self) -> bool:
        betas_c = {e.stratum for e in self.continuity}
        betas_d = {e.stratum for e in self.discontinuity}
        return (all(self.chain_decreasing)
                and all(self.stratum_status(b, "continuity") == "pass" for b in betas_c)
                and all(self.stratum_status(b, "discontinuity") == "pass" for b in betas_d))

    def to_json(self):
        def items(lst):
            return [{"stratum": e.stratum,
                     "point": [format_rational(v) for v in e.point],
                     "deltas": [format_rational(d) for d in e.deltas],
                     "estimates": [format_rational(v) for v in e.estimates],
                     "status": e.status} for e in lst]
        return {"chain_decreasing": self.chain_decreasing,
                "continuity": items(self.continuity),
                "discontinuity": items(self.discontinuity),
                "branch_agreement": self.branch_agreement,
                "note": self.note}


def _min_axis_distance(region: Region, p, fallback):
    comp = region.axis_components()
    if comp is None:
        return fallback
    axis, intervals = comp
    x = mpq(p[axis])
    best = None
    for a, b in intervals:
        if a <= x <= b:
            return mpq(0)
        d = a - x if x < a else x - b
        best = d if best is None else min(best, d)
    return best if best is not None else fallback


def verify_stratification(rhs: StratifiedRHS, grid_n: int, seed: int = 0,
                          samples_per_stratum: int = 5,
                          osc_threshold=Q(1, 8),
                          delta0=Q(1, 10)) -> StratificationReport:
    """Sampled evidence for the declared chain.

    (a) region chain decreasing; (b) oscillation of each level's restriction
    shrinks at sampled points off the next level (continuity evidence);
    (c) oscillation of the level's restriction stays >= threshold at sampled
    points of the next level (discontinuity evidence). Inconclusive is a
    first-class outcome (finite grids cannot certify continuity).
    """
    rng = random.Random(seed)
    chain = []
    agreement = []
    continuity = []
    discontinuity = []
    deltas = [mpq(delta0), mpq(delta0) / 4, mpq(delta0) / 16]
    for beta in range(1, rhs.rank):
        pts = rhs.region(beta).sample_points(rhs.ambient, max(grid_n, 16))
        ok = all(rhs.region(beta - 1).contains_point(p) for p in pts)
        chain.append(bool(ok and pts))
    for beta in range(rhs.rank):
        region = rhs.region(beta)
        nxt = rhs.region(beta + 1)
        pts = [p for p in region.sample_points(rhs.ambient, max(grid_n, 64))
               if not nxt.contains_point(p)]
        # prefer points with sampling room: away from the deeper region and
        # inside the ambient with delta0 margin
        def roomy(p):
            d = _min_axis_distance(nxt, p, None)
            return d is None or d > 4 * deltas[0]
        good = [p for p in pts if roomy(p)] or pts
        rng.shuffle(good)
        for p in good[:samples_per_stratum]:
            ests = []
            try:
                for d in deltas:
                    ests.append(oscillation_estimate(rhs, beta, p, d, grid_n))
            except DegenerateGridError:
                continuity.append(EvidenceItem(beta, p, deltas, ests, "inconclusive"))
                continue
            shrinks = ests[-1] <= max(ests[0] / 2, Q(1, 1000))
            continuity.append(EvidenceItem(
                beta, p, deltas, ests, "pass" if shrinks else "inconclusive"))
            # branch agreement: f restricted deeper must match shallower branches
            if beta > 0:
                v_here = eval_vector_point(rhs.strata[beta].branch, p, 64)
                v_base = eval_vector_point(rhs.strata[0].branch, p, 64)
                tol = Q(1, 1 << 30)
                agree = all(abs((a + b) / 2 - (c + d) / 2) <= tol
                            for a, b, c, d in zip(v_here.los, v_here.his,
                                                  v_base.los, v_base.his))
                agreement.append({"stratum": beta,
                                  "point": [format_rational(v) for v in p],
                                  "agrees": bool(agree)})
        # discontinuity evidence at points of the NEXT region
        if beta + 1 < rhs.rank:
            dpts = nxt.sample_points(rhs.ambient, max(grid_n, 64))
            rng.shuffle(dpts)
            for p in dpts[:samples_per_stratum]:
                ests = []
                try:
                    for d in deltas:
                        ests.append(oscillation_estimate(rhs, beta, p, d, grid_n))
                except DegenerateGridError:
                    discontinuity.append(EvidenceItem(beta, p, deltas, ests,
                                                      "inconclusive"))
                    continue
                stays = min(ests) >= mpq(osc_threshold)
                discontinuity.append(EvidenceItem(
                    beta, p, deltas, ests, "pass" if stays else "inconclusive"))
    return StratificationReport(chain, continuity, discontinuity, agreement)
