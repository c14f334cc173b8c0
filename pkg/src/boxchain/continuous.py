"""Box-chain runs for continuous right-hand terms.

The run rules differ from the stratified ones: C is compared through its
closure (rule 1), the step size h is shared across the pieces of a step, and
the constructor must keep every B-box diameter below 1/n. Validation accepts
multi-piece runs supplied from outside; construction emits one piece per
step, which suffices when the solution is unique and boxes are small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpq

from .rationals import Q
from .boxes import RBox, minkowski_sum, scale, subset, union_covers
from .strata import IVProblem, _hull_eval
from .chains import ChainEngine, ChainOptions, ChainCell
from .expressions import DomainViolation


class RankError(ValueError):
    pass


@dataclass
class RunCell:
    X: RBox
    B: RBox
    C: RBox
    Y: RBox


@dataclass
class RunStep:
    h: object
    cells: list


@dataclass
class BoxRun:
    steps: list

    @property
    def length(self) -> int:
        return len(self.steps)

    def times(self, t_start):
        ts = [mpq(t_start)]
        for step in self.steps:
            ts.append(ts[-1] + mpq(step.h))
        return ts

    def b_union_diam_sq_max(self):
        worst = mpq(0)
        for step in self.steps:
            boxes = [c.B for c in step.cells if not c.B.is_empty]
            lo = [min(b.lo[k] for b in boxes) for k in range(boxes[0].dims)]
            hi = [max(b.hi[k] for b in boxes) for k in range(boxes[0].dims)]
            d = sum(((b - a) ** 2 for a, b in zip(lo, hi)), mpq(0))
            if d > worst:
                worst = d
        return worst


@dataclass
class RunValidation:
    initial_condition: bool
    cells: list                    # (step, piece, {rule: bool})
    chain_rule: list
    valid: bool
    rule_failure_counts: dict = field(default_factory=dict)

    def to_json(self):
        return {"initial_condition": self.initial_condition,
                "valid": self.valid,
                "rule_failure_counts": self.rule_failure_counts,
                "cells": [{"step": s, "piece": j, "rules": r}
                          for (s, j, r) in self.cells if not all(r.values())][:200]}


def validate_run(problem: IVProblem, run: BoxRun, precision: int = 128) -> RunValidation:
    """Check the four run rules for a continuous (rank-1) problem.

    Rule 1 is checked as enclosure(B) ⊆ cl(C), sound because the outward
    enclosure contains the image. Initial membership uses the sufficient
    test y0 ∈ some open X (the interior of a union can be slightly larger
    for face-glued covers; such runs would be reported invalid).
    """
    if problem.rhs.rank != 1:
        raise RankError("validate_run requires a rank-1 (continuous) problem")
    rhs = problem.rhs
    branch = rhs.strata[0].branch
    failures = {}
    cells_out = []

    def fail(key):
        failures[key] = failures.get(key, 0) + 1

    init_ok = any(not c.X.is_empty and c.X.contains_point(problem.y0)
                  for c in (run.steps[0].cells if run.steps else []))
    if not init_ok:
        fail("initial")
    for i, step in enumerate(run.steps):
        h = mpq(step.h)
        for j, cell in enumerate(step.cells):
            rules = {"ambient": all(b.is_empty or subset(b, rhs.ambient)
                                    for b in (cell.X, cell.B, cell.C, cell.Y)),
                     "h_positive": h > 0}
            if cell.B.is_empty:
                rules["rule1"] = rules["rule2"] = cell.X.is_empty and cell.Y.is_empty
                rules["rule3"] = cell.X.is_empty
            else:
                try:
                    enc = _hull_eval(branch, [(cell.B.lo, cell.B.hi)], precision)
                    rules["rule1"] = (not cell.C.is_empty and all(
                        cl <= el and eh <= ch for cl, el, eh, ch in
                        zip(cell.C.lo, enc.los, enc.his, cell.C.hi)))
                except DomainViolation:
                    rules["rule1"] = False
                rules["rule2"] = subset(cell.X, cell.B) and subset(cell.Y, cell.B)
                if cell.X.is_empty or cell.C.is_empty:
                    rules["rule3"] = cell.X.is_empty
                else:
                    rules["rule3"] = subset(
                        minkowski_sum(cell.X, scale(h, cell.C)), cell.Y)
            for key in ("rule1", "rule2", "rule3", "ambient", "h_positive"):
                if not rules[key]:
                    fail(key)
            cells_out.append((i, j, rules))
    chain = []
    for i in range(len(run.steps) - 1):
        ys = [c.Y for c in run.steps[i].cells if not c.Y.is_empty]
        xs = [c.X for c in run.steps[i + 1].cells if not c.X.is_empty]
        ok = all(union_covers(xs, y) for y in ys)
        if not ok:
            fail("rule4")
        chain.append(ok)
    valid = init_ok and all(all(r.values()) for (_s, _j, r) in cells_out) and all(chain)
    return RunValidation(init_ok, cells_out, chain, valid, failures)


def construct_run(problem: IVProblem, n: int, T=None,
                  options: ChainOptions | None = None) -> BoxRun:
    """Directed valid run with every B-box diameter < 1/n, cumulative time
    >= T (clipped exactly to T)."""
    if problem.rhs.rank != 1:
        raise RankError("construct_run requires a rank-1 (continuous) problem")
    T = problem.duration if T is None else mpq(T)
    opts = options or ChainOptions()
    opts = ChainOptions(**{**opts.__dict__, "b_diam_target": Q(1, n)})
    steps = []

    def sink(cell: ChainCell):
        steps.append(RunStep(cell.h, [RunCell(cell.X, cell.B, cell.C, cell.Y)]))

    engine = ChainEngine(problem, n, opts)
    engine.run(T, sink)
    return BoxRun(steps)


def run_path(problem: IVProblem, run: BoxRun, slope_bits: int = 80):
    """Piecewise-linear threading of a single-piece run (for diagnostics)."""
    from .stratified import PolyPath, _rounded_slope
    p = tuple(mpq(v) for v in problem.y0)
    t = mpq(problem.t_start)
    ts, points, slopes = [t], [p], []
    for step in run.steps:
        cell = step.cells[0]
        c = _rounded_slope(cell.C, slope_bits)
        h = mpq(step.h)
        p = tuple(a + h * v for a, v in zip(p, c))
        t = t + h
        ts.append(t)
        points.append(p)
        slopes.append(c)
    return PolyPath(ts, points, slopes)
