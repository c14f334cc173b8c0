"""Regions usable as declared discontinuity sets.

Each region kind supports exact membership of rational points and exact
closed-box intersection tests from rational endpoints. Regions also know how
to clip a closed box to themselves (for restricted branch evaluation) and to
produce deterministic sample points (for falsification-style verification).
"""

from __future__ import annotations

from gmpy2 import mpq

from .rationals import Q, format_rational, parse_rational
from .boxes import RBox


class Region:
    kind = "abstract"

    def contains_point(self, point) -> bool:
        raise NotImplementedError

    def closed_box_intersects(self, box: RBox) -> bool:
        """Does cl(box) meet the region? Exact."""
        raise NotImplementedError

    def clip_closed_box(self, box: RBox):
        """Closed sub-boxes (lo, hi endpoint tuples, possibly degenerate)
        covering cl(box) ∩ region exactly."""
        raise NotImplementedError

    def sample_points(self, ambient: RBox, count: int):
        """Deterministic points of the region inside the ambient closure."""
        raise NotImplementedError

    def axis_components(self):
        """(axis, sorted [(lo, hi)] closed components) for axis-localized
        regions, else None. Used by the run constructor to plan crossings."""
        return None

    def is_empty(self) -> bool:
        return False

    def to_json(self):
        raise NotImplementedError

    def __repr__(self):
        return f"<Region {self.to_json()}>"


class AmbientRegion(Region):
    """The whole (closed) ambient domain."""

    kind = "ambient"

    def __init__(self, ambient: RBox):
        self.ambient = ambient

    def contains_point(self, point) -> bool:
        return self.ambient.closure_contains_point(point)

    def closed_box_intersects(self, box: RBox) -> bool:
        if box.is_empty:
            return False
        return all(max(a, c) <= min(b, d) for a, b, c, d in
                   zip(box.lo, box.hi, self.ambient.lo, self.ambient.hi))

    def clip_closed_box(self, box: RBox):
        lo = tuple(max(a, c) for a, c in zip(box.lo, self.ambient.lo))
        hi = tuple(min(b, d) for b, d in zip(box.hi, self.ambient.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return []
        return [(lo, hi)]

    def sample_points(self, ambient: RBox, count: int):
        return _grid_points(ambient.lo, ambient.hi, count)

    def to_json(self):
        return {"kind": "ambient"}


class Hyperplane(Region):
    """{x_axis = value}, clipped to the ambient when queried."""

    kind = "hyperplane"

    def __init__(self, axis: int, value):
        self.axis = int(axis)
        self.value = mpq(value)

    def contains_point(self, point) -> bool:
        return mpq(point[self.axis]) == self.value

    def closed_box_intersects(self, box: RBox) -> bool:
        if box.is_empty:
            return False
        return box.lo[self.axis] <= self.value <= box.hi[self.axis]

    def clip_closed_box(self, box: RBox):
        if not self.closed_box_intersects(box):
            return []
        lo = list(box.lo)
        hi = list(box.hi)
        lo[self.axis] = hi[self.axis] = self.value
        return [(tuple(lo), tuple(hi))]

    def sample_points(self, ambient: RBox, count: int):
        lo = list(ambient.lo)
        hi = list(ambient.hi)
        lo[self.axis] = hi[self.axis] = self.value
        return _grid_points(lo, hi, count)

    def axis_components(self):
        return self.axis, [(self.value, self.value)]

    def to_json(self):
        return {"kind": "hyperplane", "axis": self.axis + 1,
                "value": format_rational(self.value)}


class AxisIntervalUnion(Region):
    """Finite union of closed rational intervals in one coordinate, crossed
    with all remaining coordinates. Degenerate intervals are single planes."""

    kind = "axis_intervals"

    def __init__(self, axis: int, intervals):
        self.axis = int(axis)
        ivs = sorted((mpq(a), mpq(b)) for a, b in intervals)
        for (a, b) in ivs:
            if a > b:
                raise ValueError("interval endpoints out of order")
        for (a, b), (c, d) in zip(ivs, ivs[1:]):
            if c <= b:
                raise ValueError("intervals must be disjoint")
        self.intervals = tuple(ivs)

    def contains_point(self, point) -> bool:
        x = mpq(point[self.axis])
        return any(a <= x <= b for a, b in self.intervals)

    def closed_box_intersects(self, box: RBox) -> bool:
        if box.is_empty:
            return False
        lo, hi = box.lo[self.axis], box.hi[self.axis]
        return any(max(lo, a) <= min(hi, b) for a, b in self.intervals)

    def clip_closed_box(self, box: RBox):
        out = []
        blo, bhi = box.lo[self.axis], box.hi[self.axis]
        for a, b in self.intervals:
            lo_k, hi_k = max(blo, a), min(bhi, b)
            if lo_k > hi_k:
                continue
            lo = list(box.lo)
            hi = list(box.hi)
            lo[self.axis], hi[self.axis] = lo_k, hi_k
            out.append((tuple(lo), tuple(hi)))
        return out

    def sample_points(self, ambient: RBox, count: int):
        per = max(1, count // max(1, len(self.intervals)))
        pts = []
        for a, b in self.intervals:
            lo = list(ambient.lo)
            hi = list(ambient.hi)
            lo[self.axis] = max(lo[self.axis], a)
            hi[self.axis] = min(hi[self.axis], b)
            if lo[self.axis] > hi[self.axis]:
                continue
            pts.extend(_grid_points(lo, hi, per))
        return pts

    def axis_components(self):
        return self.axis, list(self.intervals)

    def to_json(self):
        return {"kind": "axis_intervals", "axis": self.axis + 1,
                "intervals": [[format_rational(a), format_rational(b)]
                              for a, b in self.intervals]}


class PointSet(Region):
    kind = "points"

    def __init__(self, points):
        self.points = tuple(tuple(mpq(x) for x in p) for p in points)

    def contains_point(self, point) -> bool:
        pt = tuple(mpq(x) for x in point)
        return pt in self.points

    def closed_box_intersects(self, box: RBox) -> bool:
        return any(box.closure_contains_point(p) for p in self.points)

    def clip_closed_box(self, box: RBox):
        return [(p, p) for p in self.points if box.closure_contains_point(p)]

    def sample_points(self, ambient: RBox, count: int):
        return [p for p in self.points if ambient.closure_contains_point(p)]

    def to_json(self):
        return {"kind": "points",
                "points": [[format_rational(x) for x in p] for p in self.points]}


class EmptyRegion(Region):
    kind = "empty"

    def contains_point(self, point) -> bool:
        return False

    def closed_box_intersects(self, box: RBox) -> bool:
        return False

    def clip_closed_box(self, box: RBox):
        return []

    def sample_points(self, ambient: RBox, count: int):
        return []

    def is_empty(self) -> bool:
        return True

    def to_json(self):
        return {"kind": "empty"}


def _grid_points(lo, hi, count: int):
    """Deterministic grid of ~count points over the closed box [lo, hi].

    Degenerate axes contribute their single value; per-axis resolution is a
    power of two so refined grids nest.
    """
    lo = [mpq(x) for x in lo]
    hi = [mpq(x) for x in hi]
    free = [k for k in range(len(lo)) if lo[k] < hi[k]]
    if not free:
        return [tuple(lo)]
    per_axis = max(2, int(round(count ** (1.0 / len(free)))))
    m = 1
    while 2 * m + 1 <= per_axis:
        m *= 2
    coords = []
    for k in range(len(lo)):
        if k in free:
            coords.append([lo[k] + (hi[k] - lo[k]) * Q(j, 2 * m) for j in range(2 * m + 1)])
        else:
            coords.append([lo[k]])
    pts = [()]
    for axis_vals in coords:
        pts = [p + (v,) for p in pts for v in axis_vals]
    return pts


def region_from_json(data) -> Region:
    kind = data["kind"]
    if kind == "ambient":
        # bound to the ambient box by StratifiedRHS after load
        return AmbientRegion(None)  # type: ignore[arg-type]
    if kind == "hyperplane":
        return Hyperplane(data["axis"] - 1, parse_rational(data["value"]))
    if kind == "axis_intervals":
        return AxisIntervalUnion(
            data["axis"] - 1,
            [(parse_rational(a), parse_rational(b)) for a, b in data["intervals"]])
    if kind == "points":
        return PointSet([[parse_rational(x) for x in p] for p in data["points"]])
    if kind == "empty":
        return EmptyRegion()
    raise ValueError(f"unknown region kind {kind!r}")
