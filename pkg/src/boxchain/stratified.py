"""Stratified tuples: validation, directed construction, paths, solving.

A tuple is a per-step family of cells (X, h, B, C, Y) indexed by stratum and
piece. Validity is the five concatenation rules checked exactly on rational
endpoints (enclosures outward-rounded); construction emits one nonempty cell
per step (the active one) via the chain engine; the piecewise-linear path
threads the active cells with slopes drawn from the C boxes. `solve` runs a
schedule of refinements n and applies the Cauchy + residual stopping rule —
the practical surrogate for subsequence convergence, flagged as such in the
report.
"""

from __future__ import annotations

import time
from bisect import bisect_right
from dataclasses import dataclass, field

from gmpy2 import mpq

from .rationals import Q, dyadic_round, sqrt_upper, format_rational
from .boxes import RBox, minkowski_sum, scale, subset, union_covers
from .strata import StratifiedRHS, IVProblem, _hull_eval
from .chains import ChainEngine, ChainOptions, ChainCell, ConstructionError
from .expressions import DomainViolation


@dataclass
class TupleCell:
    beta: int
    j: int
    X: RBox
    h: object
    B: RBox
    C: RBox
    Y: RBox

    def is_empty(self) -> bool:
        return self.B.is_empty and self.X.is_empty and self.Y.is_empty


@dataclass
class TupleStep:
    cells: list
    active: int = 0

    @property
    def active_cell(self) -> TupleCell:
        return self.cells[self.active]


@dataclass
class StratifiedTuple:
    steps: list

    @property
    def length(self) -> int:
        return len(self.steps)

    def times(self, t_start):
        ts = [mpq(t_start)]
        for step in self.steps:
            ts.append(ts[-1] + mpq(step.active_cell.h))
        return ts

    def cell_count(self) -> int:
        return sum(len(s.cells) for s in self.steps)


# ---------------------------------------------------------------------------
# Validation (rule-faithful; usable on externally supplied tuples)


@dataclass
class CellReport:
    step: int
    beta: int
    j: int
    rules: dict

    def ok(self) -> bool:
        return all(self.rules.values())


@dataclass
class TupleValidation:
    initial_condition: bool
    cells: list
    chain_rule: list          # rule 5 result per step boundary
    valid: bool
    rule_failure_counts: dict

    def to_json(self):
        return {
            "initial_condition": self.initial_condition,
            "valid": self.valid,
            "rule_failure_counts": self.rule_failure_counts,
            "cells": [{"step": c.step, "beta": c.beta, "j": c.j,
                       "rules": c.rules} for c in self.cells
                      if not c.ok()][:200],
        }


def _rule2_holds(rhs: StratifiedRHS, cell: TupleCell, precision: int) -> bool:
    """branch_beta(cl(B) ∩ E_beta) strictly inside the open box C."""
    stratum = rhs.strata[cell.beta]
    pieces = stratum.region.clip_closed_box(cell.B)
    if not pieces:
        return False       # rule 1 fails too; the image is undefined
    if cell.C.is_empty:
        return False
    try:
        enc = _hull_eval(stratum.branch, pieces, precision)
    except DomainViolation:
        return False
    return all(cl < el and eh < ch for cl, el, eh, ch in
               zip(cell.C.lo, enc.los, enc.his, cell.C.hi))


def validate_tuple(problem: IVProblem, tup: StratifiedTuple,
                   precision: int = 128) -> TupleValidation:
    """Check the five concatenation rules plus initial-condition membership.

    Failures are report entries, never exceptions.
    """
    rhs = problem.rhs
    cells_out = []
    failures = {f"rule{i}": 0 for i in range(1, 6)}
    failures["ambient"] = 0
    init_ok = any(
        not c.X.is_empty and c.X.contains_point(problem.y0)
        for c in (tup.steps[0].cells if tup.steps else []))
    if not init_ok:
        failures["initial"] = 1
    for i, step in enumerate(tup.steps):
        for cell in step.cells:
            rules = {}
            boxes = [cell.X, cell.B, cell.C, cell.Y]
            rules["ambient"] = all(b.is_empty or subset(b, rhs.ambient)
                                   for b in boxes)
            if cell.B.is_empty:
                rules["rule1"] = True
                rules["rule2"] = cell.X.is_empty and cell.Y.is_empty
                rules["rule3"] = cell.X.is_empty and cell.Y.is_empty
                rules["rule4"] = cell.X.is_empty
            else:
                touches = rhs.region(cell.beta).closed_box_intersects(cell.B)
                clear = not rhs.region(cell.beta + 1).closed_box_intersects(cell.B)
                rules["rule1"] = touches and clear
                rules["rule2"] = touches and _rule2_holds(rhs, cell, precision)
                rules["rule3"] = subset(cell.X, cell.B) and subset(cell.Y, cell.B)
                if cell.X.is_empty or cell.C.is_empty:
                    rules["rule4"] = cell.X.is_empty
                else:
                    rules["rule4"] = (mpq(cell.h) > 0 and subset(
                        minkowski_sum(cell.X, scale(cell.h, cell.C)), cell.Y))
            for key in ("rule1", "rule2", "rule3", "rule4", "ambient"):
                if not rules[key]:
                    failures[key] = failures.get(key, 0) + 1
            cells_out.append(CellReport(i, cell.beta, cell.j, rules))
    chain = []
    for i in range(len(tup.steps) - 1):
        ys = [c.Y for c in tup.steps[i].cells if not c.Y.is_empty]
        xs = [c.X for c in tup.steps[i + 1].cells if not c.X.is_empty]
        ok = all(union_covers(xs, y) for y in ys)
        if not ok:
            failures["rule5"] += 1
        chain.append(ok)
    valid = (init_ok and all(c.ok() for c in cells_out) and all(chain))
    return TupleValidation(init_ok, cells_out, chain, valid,
                           {k: v for k, v in failures.items() if v})


# ---------------------------------------------------------------------------
# Construction


def construct_tuple(problem: IVProblem, n: int, T=None,
                    options: ChainOptions | None = None) -> StratifiedTuple:
    """Directed single-active-cell tuple reaching cumulative time >= T.

    Active cells carry certified C enclosures with rad(C) < 1/(2n); validity
    of every rule is re-checkable through validate_tuple.
    """
    T = problem.duration if T is None else mpq(T)
    steps = []

    def sink(cell: ChainCell):
        steps.append(TupleStep([TupleCell(cell.beta, 1, cell.X, cell.h,
                                          cell.B, cell.C, cell.Y)]))

    engine = ChainEngine(problem, n, options)
    engine.run(T, sink)
    return StratifiedTuple(steps)


# ---------------------------------------------------------------------------
# Piecewise-linear paths


class SlopeRoundingError(RuntimeError):
    pass


@dataclass
class PolyPath:
    """Anchors eta(t_i) with constant slopes c_i in between (c_i in C_i)."""

    ts: list                  # l+1 breakpoint times
    points: list              # l+1 anchors (tuples of mpq)
    slopes: list              # l slope vectors

    @property
    def t_start(self):
        return self.ts[0]

    @property
    def t_end(self):
        return self.ts[-1]

    def value(self, t):
        t = mpq(t)
        if t <= self.ts[0]:
            return self.points[0]
        if t >= self.ts[-1]:
            return self.points[-1]
        i = bisect_right(self.ts, t) - 1
        dt = t - self.ts[i]
        return tuple(p + dt * c for p, c in zip(self.points[i], self.slopes[i]))

    def max_slope_norm_sq(self):
        return max((sum((c * c for c in s), mpq(0)) for s in self.slopes),
                   default=mpq(0))

    def is_lipschitz(self, K) -> bool:
        return self.max_slope_norm_sq() <= mpq(K) ** 2

    def sup_distance_sq_on_grid(self, other: "PolyPath", grid_ts):
        worst = mpq(0)
        for t in grid_ts:
            a = self.value(t)
            b = other.value(t)
            d = sum(((x - y) ** 2 for x, y in zip(a, b)), mpq(0))
            if d > worst:
                worst = d
        return worst


def _rounded_slope(C: RBox, bits: int):
    mid = C.midpoint()
    for attempt in range(4):
        c = tuple(dyadic_round(v, bits + 40 * attempt) for v in mid)
        if C.contains_point(c):
            return c
    if C.contains_point(mid):
        return mid
    raise SlopeRoundingError("C-box too thin to round a slope into it")


def build_path(problem: IVProblem, tup: StratifiedTuple,
               slope_bits: int = 80) -> PolyPath:
    """Thread the active cells: eta(t_start) = y0, slope = rounded C center.

    Fails when an anchor escapes its step's X (the tuple, though maybe valid,
    is not constructible as a path from this initial condition).
    """
    p = tuple(mpq(v) for v in problem.y0)
    t = mpq(problem.t_start)
    ts = [t]
    points = [p]
    slopes = []
    for i, step in enumerate(tup.steps):
        cell = step.active_cell
        if not cell.X.contains_point(p):
            raise SlopeRoundingError(
                f"anchor left the active X at step {i}; cannot thread a path")
        c = _rounded_slope(cell.C, slope_bits)
        h = mpq(cell.h)
        p = tuple(a + h * v for a, v in zip(p, c))
        t = t + h
        ts.append(t)
        points.append(p)
        slopes.append(c)
    return PolyPath(ts, points, slopes)


# ---------------------------------------------------------------------------
# Solving: schedule of refinements with the Cauchy + residual stopping rule


@dataclass
class SolveReport:
    problem_name: str
    tol: object
    schedule: list
    n_used: list = field(default_factory=list)
    steps_per_n: list = field(default_factory=list)
    residual_bounds: list = field(default_factory=list)     # upper rationals
    successive_distances: list = field(default_factory=list)
    validation_summaries: list = field(default_factory=list)
    grid_ts: list = field(default_factory=list)
    samples: list = field(default_factory=list)              # final grid values
    extra_values: dict = field(default_factory=dict)
    stratum_cells: list = field(default_factory=list)        # final n, beta >= 1
    converged: bool = False
    status: str = "not-run"
    n_final: int = 0
    error_estimate: object = None
    wall_time: float = 0.0
    stopping_rule: str = ("heuristic Cauchy surrogate: consecutive paths within "
                          "tol/2 on the output grid and final C-radius bound "
                          "<= tol/2; uniqueness makes convergent subsequences "
                          "agree, but no global error bound is claimed")

    def to_json(self, include_timing: bool = False):
        data = {
            "problem": self.problem_name,
            "tol": format_rational(self.tol),
            "schedule": list(self.schedule),
            "n_used": list(self.n_used),
            "steps_per_n": list(self.steps_per_n),
            "residual_bounds": [format_rational(r) for r in self.residual_bounds],
            "successive_distances": [format_rational(d) for d in self.successive_distances],
            "validation_summaries": self.validation_summaries,
            "converged": self.converged,
            "status": self.status,
            "n_final": self.n_final,
            "error_estimate": (None if self.error_estimate is None
                               else format_rational(self.error_estimate)),
            "stopping_rule": self.stopping_rule,
            "stratum_cells": self.stratum_cells,
            "trajectory": {
                "t": [format_rational(t) for t in self.grid_ts],
                "y": [[format_rational(v) for v in row] for row in self.samples],
            },
            "extra_values": {format_rational(t): [format_rational(v) for v in row]
                             for t, row in self.extra_values.items()},
        }
        if include_timing:
            data["wall_time_s"] = self.wall_time
        return data


class _StreamDiagnostics:
    """Streaming sink: grid evaluation of the path plus rule bookkeeping,
    without retaining the (possibly huge) tuple."""

    def __init__(self, problem: IVProblem, grid_ts, extra_ts, rhs,
                 rule2_stride: int, precision: int):
        self.problem = problem
        self.rhs = rhs
        self.grid_ts = grid_ts
        self.extra_ts = sorted(extra_ts)
        self.gp = 0
        self.ep = 0
        self.grid_vals = []
        self.extra_vals = {}
        self.max_c_diam_sq = mpq(0)
        self.cells = 0
        self.rule_failures = {}
        self.rule2_checked = 0
        self.rule2_stride = rule2_stride
        self.precision = precision
        self.prev_Y = None
        self.strat_cells = []
        self.max_slope_sq = mpq(0)

    def __call__(self, cell: ChainCell):
        t0 = cell.t
        t1 = cell.t + mpq(cell.h)
        p = cell.anchor
        c = cell.slope
        while self.gp < len(self.grid_ts) and self.grid_ts[self.gp] <= t1:
            dt = self.grid_ts[self.gp] - t0
            self.grid_vals.append(tuple(a + dt * v for a, v in zip(p, c)))
            self.gp += 1
        while self.ep < len(self.extra_ts) and self.extra_ts[self.ep] <= t1:
            dt = self.extra_ts[self.ep] - t0
            self.extra_vals[self.extra_ts[self.ep]] = tuple(
                a + dt * v for a, v in zip(p, c))
            self.ep += 1
        d2 = cell.C.diameter_sq()
        if d2 > self.max_c_diam_sq:
            self.max_c_diam_sq = d2
        s2 = sum((v * v for v in c), mpq(0))
        if s2 > self.max_slope_sq:
            self.max_slope_sq = s2
        self.cells += 1
        self._check(cell)
        if cell.beta >= 1:
            self.strat_cells.append({
                "step": cell.index, "beta": cell.beta,
                "t": format_rational(cell.t),
                "B": cell.B.to_json(), "C": cell.C.to_json(),
                "X": cell.X.to_json(), "Y": cell.Y.to_json(),
                "h": format_rational(cell.h)})

    def _fail(self, key):
        self.rule_failures[key] = self.rule_failures.get(key, 0) + 1

    def _check(self, cell: ChainCell):
        rhs = self.rhs
        if not (rhs.region(cell.beta).closed_box_intersects(cell.B)
                and not rhs.region(cell.beta + 1).closed_box_intersects(cell.B)):
            self._fail("rule1")
        if not (subset(cell.X, cell.B) and subset(cell.Y, cell.B)):
            self._fail("rule3")
        if not subset(minkowski_sum(cell.X, scale(cell.h, cell.C)), cell.Y):
            self._fail("rule4")
        if self.prev_Y is not None and not subset(self.prev_Y, cell.X):
            self._fail("rule5")
        self.prev_Y = cell.Y
        if self.cells % self.rule2_stride == 0:
            self.rule2_checked += 1
            dummy = TupleCell(cell.beta, 1, cell.X, cell.h, cell.B, cell.C, cell.Y)
            if not _rule2_holds(rhs, dummy, self.precision):
                self._fail("rule2")

    def summary(self):
        return {"cells": self.cells,
                "rule_failures": dict(self.rule_failures),
                "rule2_checked": self.rule2_checked,
                "note": "streaming checks at construction precision; "
                        "rule 2 stride-sampled"}


def default_grid(problem: IVProblem, count: int = 1024):
    dur = problem.duration
    return [problem.t_start + dur * Q(j, count - 1) for j in range(count)]


def solve(problem: IVProblem, tol, n_schedule, options: ChainOptions | None = None,
          grid_count: int = 1024, extra_times=(),
          progress=None) -> SolveReport:
    """Run the schedule until two consecutive paths agree within tol/2 on the
    output grid and the final C-radius bound is <= tol/2.

    Non-convergence after schedule exhaustion is a report status, not an
    error; construction budget failures propagate as ConstructionError.
    """
    tol = mpq(tol)
    if tol <= 0:
        raise ValueError("tol must be positive")
    schedule = [int(n) for n in n_schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("n_schedule must be nonempty and strictly increasing")
    report = SolveReport(problem.name, tol, schedule)
    grid_ts = default_grid(problem, grid_count)
    report.grid_ts = grid_ts
    half_tol_sq = (tol / 2) ** 2
    tol_sq = tol * tol
    t0 = time.perf_counter()
    prev_vals = None
    for idx, n in enumerate(schedule):
        opts = options or ChainOptions()
        diag = _StreamDiagnostics(problem, grid_ts, extra_times, problem.rhs,
                                  rule2_stride=max(1, 40), precision=opts.precision)
        engine = ChainEngine(problem, n, opts)
        steps, _p, _t = engine.run(problem.duration, diag)
        report.n_used.append(n)
        report.steps_per_n.append(steps)
        report.validation_summaries.append({"n": n, **diag.summary()})
        report.residual_bounds.append(sqrt_upper(diag.max_c_diam_sq) / 2)
        vals = diag.grid_vals
        if prev_vals is not None:
            worst = mpq(0)
            for a, b in zip(prev_vals, vals):
                d = sum(((x - y) ** 2 for x, y in zip(a, b)), mpq(0))
                if d > worst:
                    worst = d
            report.successive_distances.append(sqrt_upper(worst))
            dist_ok = worst <= half_tol_sq
            res_ok = diag.max_c_diam_sq <= tol_sq
            if progress:
                progress(n, steps, float(sqrt_upper(worst)),
                         float(sqrt_upper(diag.max_c_diam_sq) / 2))
            if dist_ok and res_ok:
                report.converged = True
                report.status = "converged"
                report.n_final = n
                report.samples = vals
                report.extra_values = diag.extra_vals
                report.stratum_cells = diag.strat_cells
                report.error_estimate = (sqrt_upper(worst)
                                         + sqrt_upper(diag.max_c_diam_sq) / 2)
                break
        else:
            if progress:
                progress(n, steps, None,
                         float(sqrt_upper(diag.max_c_diam_sq) / 2))
        prev_vals = vals
        report.samples = vals
        report.extra_values = diag.extra_vals
        report.stratum_cells = diag.strat_cells
        report.n_final = n
    if not report.converged:
        report.status = "schedule-exhausted-without-convergence"
    report.wall_time = time.perf_counter() - t0
    return report
