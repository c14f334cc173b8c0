"""Directed construction of box chains (the shared stepping engine).

A chain is a sequence of cells (X, h, B, C, Y) advanced from the initial
point: X holds the current anchor, C encloses the branch over B, and
Y ⊇ X + h·C absorbs the motion. Enumeration of all runs is hopeless, so the
constructor is directed: Euler-style advancement with certified enclosures,
where every emitted cell satisfies the concatenation rules exactly (the
validators re-check them independently).

Near a declared stratum the engine switches to a crossing cell: a box that
spans a locally clustered stretch of the stratum region, whose C comes from
the restricted branch. Cluster extent adapts so the C-radius budget still
holds. The crossing half-width `w` is the accuracy/cost knob: approach cost
grows like n/w while the skipped detour is O(w^2) for quadratically pinched
primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpq

from .rationals import Q, dyadic_floor, dyadic_round
from .boxes import RBox, minkowski_sum, scale, subset, hull
from .strata import StratifiedRHS, IVProblem, stratum_of_box, _hull_eval
from .expressions import DomainViolation, eval_vector_point


class ConstructionError(RuntimeError):
    """Budget failure: the step size would underflow (usually next to a
    stratum whose branch cannot be enclosed tightly enough)."""


@dataclass
class ChainCell:
    """One emitted cell; `slope` is the rational direction the anchor took."""
    index: int
    beta: int
    X: RBox
    h: object
    B: RBox
    C: RBox
    Y: RBox
    t: object                 # time at the start of the cell
    anchor: tuple             # path anchor at the start of the cell
    slope: tuple


@dataclass
class ChainOptions:
    c_radius_factor: object = Q(3, 4)     # rad(C) target = factor / (2n)
    b_diam_target: object = None          # continuous mode: diam(B) < this
    crossing_halfwidth: object = Q(3, 256)
    gap_factor: int = 4
    precision: int = 64
    h_min: object = Q(1, 1 << 60)
    h_init: object = None
    pad: object = Q(1, 1 << 64)
    slope_bits: int = 80
    max_step_tries: int = 80
    validate_cells: bool = False          # engine-side recheck of rules 1-4


def _margins(enclosure, floor=Q(1, 1 << 50)):
    return [w / 4 + floor for w in enclosure.widths()]


class ChainEngine:
    """Single-chain constructor over a stratified RHS."""

    def __init__(self, problem: IVProblem, n: int, options: ChainOptions | None = None):
        self.problem = problem
        self.rhs = problem.rhs
        self.n = int(n)
        self.opt = options or ChainOptions()
        if self.opt.b_diam_target is not None:
            # continuous budget: keep C narrow enough that X-fattening over
            # the whole window stays inside the B-diameter target
            self.c_width_target = mpq(self.opt.b_diam_target) / (4 * max(Q(1), problem.duration))
            self.c_diam_sq_limit = None
        else:
            self.c_width_target = None
            limit = mpq(self.opt.c_radius_factor) / self.n
            self.c_diam_sq_limit = limit * limit    # diam(C)^2 < (factor/n)^2
        self.dims = self.rhs.dims
        self._deeper = [self.rhs.region(b) for b in range(1, self.rhs.rank)]

    # -- helpers ---------------------------------------------------------

    def _initial_halfwidth(self):
        if self.opt.b_diam_target is not None:
            # leave room for exponential fattening: X' must absorb Y
            return mpq(self.opt.b_diam_target) / 64
        # the motion-axis width of X never shrinks (rule 5), so start tiny
        return Q(1, 1 << 40)

    def _branch_box(self, beta: int, box: RBox):
        stratum = self.rhs.strata[beta]
        pieces = stratum.region.clip_closed_box(box)
        if not pieces:
            raise ConstructionError(
                f"box lost contact with stratum {beta} during construction")
        enc = _hull_eval(stratum.branch, pieces, self.opt.precision)
        return enc

    def _slope_from(self, C: RBox):
        mid = C.midpoint()
        c = tuple(dyadic_round(v, self.opt.slope_bits) for v in mid)
        if not C.contains_point(c):
            c = mid
        return c

    def _quick_slope_box(self, beta: int, point) -> RBox:
        enc = eval_vector_point(self.rhs.strata[beta].branch, point,
                                self.opt.precision)
        return enc.to_box(_margins(enc))

    def _obstructions(self, box: RBox):
        hits = []
        for off, region in enumerate(self._deeper):
            if region.closed_box_intersects(box):
                hits.append(off + 1)
        return hits

    def _ahead_distance(self, box: RBox, axis: int, direction: int):
        """Exact distance from cl(box) to the nearest deeper-region component
        ahead along `axis`; None when nothing lies ahead."""
        lo, hi = box.lo[axis], box.hi[axis]
        best = None
        for region in self._deeper:
            comp = region.axis_components()
            if comp is None or comp[0] != axis:
                continue
            for (a, b) in comp[1]:
                if direction > 0:
                    if b < lo:
                        continue
                    d = max(Q(0), a - hi)
                else:
                    if a > hi:
                        continue
                    d = max(Q(0), lo - b)
                best = d if best is None else min(best, d)
        return best

    # -- main loop --------------------------------------------------------

    def run(self, T, sink):
        """Advance until cumulative time >= T, emitting cells to sink(cell).

        Returns (steps, final_anchor, final_time).
        """
        T = mpq(T)
        if T <= 0 or T > self.problem.duration:
            raise ValueError("T must be in (0, t_end - t_start]")
        p = tuple(mpq(v) for v in self.problem.y0)
        w0 = self._initial_halfwidth()
        X = RBox.around(p, w0)
        t = mpq(0)
        h_warm = mpq(self.opt.h_init) if self.opt.h_init else Q(1, 4 * self.n)
        index = 0
        C_prev = None
        while t < T:
            remaining = T - t
            cell = self._smooth_step(index, X, p, t, remaining, h_warm, C_prev)
            if cell is None:
                cell = self._crossing_step(index, X, p, t, remaining)
            sink(cell)
            if self.opt.validate_cells:
                self._check_cell(cell)
            p = tuple(a + cell.h * c for a, c in zip(p, cell.slope))
            X = cell.Y
            t = t + cell.h
            h_warm = cell.h
            C_prev = cell.C
            index += 1
        return index, p, t

    # -- smooth cells ------------------------------------------------------

    def _smooth_step(self, index, X, p, t, remaining, h_warm, C_prev):
        """Build a cell whose B avoids every deeper region, or return None
        when a crossing cell is needed."""
        opt = self.opt
        Chat = C_prev if C_prev is not None else self._quick_slope_box(
            stratum_of_box(self.rhs, X), p)
        w = mpq(opt.crossing_halfwidth)
        h = min(dyadic_floor(2 * h_warm, 60), remaining)
        guess = self._modulus_guess(X)
        if guess is not None:
            h = min(h, guess)
        if h <= 0:
            h = remaining
        beta_here = stratum_of_box(self.rhs, X)
        if beta_here != 0 and self._obstructions(X):
            return None     # X already touches a deeper region: cross now
        axis, direction = self._travel_axis(Chat)
        for _ in range(opt.max_step_tries):
            if h < opt.h_min:
                raise ConstructionError(
                    f"step underflow at t={float(t):.6g}, anchor "
                    f"{tuple(float(v) for v in p)}")
            motion = scale(h, Chat.pad(max(Chat.widths()) / 2 + Q(1, 1 << 40)))
            B = hull(X, minkowski_sum(X, motion)).pad(opt.pad)
            if not subset(B, self.rhs.ambient):
                h = self._shrink(h)
                continue
            if self._obstructions(B):
                d = (self._ahead_distance(X, axis, direction)
                     if axis is not None else None)
                if d is not None and d > 0:
                    capped = dyadic_floor(d / 2, 60)
                    if capped < max(opt.h_min, w / 8):
                        return None     # too close: switch to a crossing cell
                    h = min(self._shrink(h), capped)
                    continue
                return None
            try:
                enc = self._branch_box(0, B)
            except DomainViolation:
                h = self._shrink(h)
                continue
            C = enc.to_box(_margins(enc))
            if not self._c_budget_ok(C):
                h = self._shrink(h, C)
                continue
            Y = minkowski_sum(X, scale(h, C)).pad(opt.pad)
            if not subset(Y, B):
                Chat = C
                continue
            if opt.b_diam_target is not None and \
                    B.diameter_sq() >= mpq(opt.b_diam_target) ** 2:
                if X.diameter_sq() >= (mpq(opt.b_diam_target) * Q(9, 10)) ** 2:
                    raise ConstructionError(
                        "accumulated box width exceeds the diameter budget; "
                        "restart with a larger n")
                h = self._shrink(h)
                continue
            slope = self._slope_from(C)
            return ChainCell(index, 0, X, h, B, C, Y, t, p, slope)
        raise ConstructionError(f"no acceptable step after {opt.max_step_tries} tries")

    def _modulus_guess(self, X: RBox):
        stratum = self.rhs.strata[0]
        eps = None
        if self.c_diam_sq_limit is not None:
            eps = mpq(self.opt.c_radius_factor) / self.n
        elif self.c_width_target is not None:
            eps = self.c_width_target
        if eps is None:
            return None
        delta = stratum.modulus.delta(eps, X)
        if delta is None or delta <= 0:
            return None
        return dyadic_floor(delta / 2, 60)

    def _travel_axis(self, Chat: RBox):
        """Dominant motion axis and direction from the slope estimate."""
        mid = Chat.midpoint()
        best, axis = None, None
        for k, v in enumerate(mid):
            if best is None or abs(v) > best:
                best, axis = abs(v), k
        if best is None or best == 0:
            return None, 0
        return axis, (1 if mid[axis] > 0 else -1)

    def _shrink(self, h, C: RBox | None = None):
        if C is not None and self.c_diam_sq_limit is not None:
            d2 = C.diameter_sq()
            if d2 > 0:
                # h scales roughly linearly with the enclosure width
                ratio = self.c_diam_sq_limit / d2
                num = ratio.numerator
                den = ratio.denominator
                # rational sqrt underestimate via integer isqrt
                import gmpy2
                r = Q(gmpy2.isqrt(num * (1 << 40) // den), 1 << 20)
                r = min(Q(1, 2), r * Q(3, 4))
                if r > 0:
                    return dyadic_floor(h * r, 80)
        return dyadic_floor(h / 2, 80)

    def _c_budget_ok(self, C: RBox) -> bool:
        if self.c_diam_sq_limit is not None:
            return C.diameter_sq() < self.c_diam_sq_limit
        return max(C.widths()) <= self.c_width_target

    # -- crossing cells ---------------------------------------------------

    def _crossing_step(self, index, X, p, t, remaining):
        opt = self.opt
        w = mpq(opt.crossing_halfwidth)
        Chat = self._quick_slope_box(stratum_of_box(self.rhs, X), p)
        axis, direction = self._travel_axis(Chat)
        if axis is None:
            raise ConstructionError(
                f"cannot plan a crossing at t={float(t):.6g}: no travel direction")
        comps = self._components_ahead(X, axis, direction)
        if not comps:
            raise ConstructionError(
                f"crossing requested at t={float(t):.6g} but no stratum "
                f"component lies ahead on axis {axis + 1}")
        cluster = [comps[0]]
        C = None
        beta = None
        for nxt in comps[1:]:
            gap = (nxt[0] - cluster[-1][1]) if direction > 0 else (cluster[-1][0] - nxt[1])
            if gap > opt.gap_factor * w:
                break
            trial = cluster + [nxt]
            got = self._cluster_enclosure(X, p, trial, axis, direction, w)
            if got is None:
                break
            cluster, (C, beta) = trial, got
        if C is None:
            got = self._cluster_enclosure(X, p, cluster, axis, direction, w)
            if got is None:
                raise ConstructionError(
                    f"stratum enclosure too wide for the C budget at "
                    f"t={float(t):.6g} near axis-{axis + 1} value "
                    f"{float(cluster[0][0]):.6g} (stratum {stratum_of_box(self.rhs, X)})")
            C, beta = got
        slope = self._slope_from(C)
        ck = slope[axis]
        if ck == 0 or (ck > 0) != (direction > 0):
            raise ConstructionError(
                f"restricted branch does not traverse the stratum at "
                f"t={float(t):.6g} (slope {float(ck):.3g} on axis {axis + 1})")
        exit_k = (cluster[-1][1] + w) if direction > 0 else (cluster[-1][0] - w)
        h = (exit_k - p[axis]) / ck
        if h <= 0:
            h = mpq(remaining)
        h = min(h, remaining)
        Y = minkowski_sum(X, scale(h, C)).pad(opt.pad)
        B = hull(X, Y)
        blo, bhi = B.interval(axis)
        span_lo = min(blo, min(c[0] for c in cluster) - opt.pad)
        span_hi = max(bhi, max(c[1] for c in cluster) + opt.pad)
        B = B.with_interval(axis, span_lo, span_hi).pad(opt.pad)
        if not subset(B, self.rhs.ambient):
            raise ConstructionError(
                f"crossing box leaves the ambient domain at t={float(t):.6g}")
        true_beta = stratum_of_box(self.rhs, B)
        if true_beta != beta:
            # the padded B touches deeper structure than planned; re-enclose
            got = self._region_enclosure(true_beta, B)
            if got is None:
                raise ConstructionError(
                    f"crossing box at t={float(t):.6g} touches stratum "
                    f"{true_beta} but its branch enclosure misses the C budget")
            C = got
            slope = self._slope_from(C)
            beta = true_beta
        return ChainCell(index, beta, X, h, B, C, Y, t, p, slope)

    def _components_ahead(self, X: RBox, axis: int, direction: int):
        lo, hi = X.interval(axis)
        comps = []
        for region in self._deeper:
            ac = region.axis_components()
            if ac is None or ac[0] != axis:
                continue
            for (a, b) in ac[1]:
                if direction > 0 and b >= lo - mpq(self.opt.pad):
                    comps.append((a, b))
                elif direction < 0 and a <= hi + mpq(self.opt.pad):
                    comps.append((a, b))
        comps = sorted(set(comps))
        if direction < 0:
            comps.reverse()
        return comps

    def _cluster_enclosure(self, X, p, cluster, axis, direction, w):
        """Enclosure of the deepest-contact branch over a tentative cluster
        span; None when the C budget fails."""
        lo = min(c[0] for c in cluster)
        hi = max(c[1] for c in cluster)
        if direction > 0:
            span_lo = min(X.lo[axis], lo - mpq(self.opt.pad))
            span_hi = hi + w
        else:
            span_lo = lo - w
            span_hi = max(X.hi[axis], hi + mpq(self.opt.pad))
        probe = X.with_interval(axis, span_lo, span_hi)
        beta = stratum_of_box(self.rhs, probe)
        if beta == 0:
            return None
        enc = self._region_enclosure(beta, probe)
        if enc is None:
            return None
        return enc, beta

    def _region_enclosure(self, beta, probe: RBox):
        try:
            enc = self._branch_box(beta, probe)
        except (DomainViolation, ConstructionError):
            return None
        C = enc.to_box(_margins(enc))
        if not self._c_budget_ok(C):
            return None
        return C

    # -- optional engine-side checking -------------------------------------

    def _check_cell(self, cell: ChainCell):
        assert subset(hull(cell.X, cell.Y), cell.B)
        assert subset(minkowski_sum(cell.X, scale(cell.h, cell.C)), cell.Y)
        assert cell.X.contains_point(cell.anchor)
        assert cell.C.contains_point(cell.slope)
