"""Open axis-aligned boxes with exact rational endpoints.

A box is the product of open intervals (lo_k, hi_k) with lo_k < hi_k; the
empty box is a distinguished value (not a zero-volume box). All geometry is
exact: comparisons and arithmetic never round. Diameters are compared through
their exact squares so no irrational square roots enter the logic; decimal
radii exist only for reporting and are rounded upward.
"""

from __future__ import annotations

from gmpy2 import mpq

from .rationals import Q, ZERO, format_rational, parse_rational, sqrt_upper, decimal_str


class BoxError(ValueError):
    pass


class RBox:
    """Open rational box; immutable. ``RBox.empty(dims)`` makes the empty box."""

    __slots__ = ("dims", "lo", "hi", "_empty")

    def __init__(self, lo, hi):
        lo = tuple(mpq(x) for x in lo)
        hi = tuple(mpq(x) for x in hi)
        if len(lo) != len(hi) or not lo:
            raise BoxError("lo/hi must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise BoxError("open box requires lo < hi on every axis; "
                           "use RBox.empty() for the empty box")
        object.__setattr__(self, "dims", len(lo))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "_empty", False)

    def __setattr__(self, *a):
        raise AttributeError("RBox is immutable")

    @classmethod
    def empty(cls, dims: int) -> "RBox":
        box = object.__new__(cls)
        object.__setattr__(box, "dims", dims)
        object.__setattr__(box, "lo", None)
        object.__setattr__(box, "hi", None)
        object.__setattr__(box, "_empty", True)
        return box

    @classmethod
    def around(cls, point, halfwidths) -> "RBox":
        """Box centered at `point` with the given per-axis half widths."""
        pt = [mpq(p) for p in point]
        if not isinstance(halfwidths, (list, tuple)):
            halfwidths = [halfwidths] * len(pt)
        hw = [mpq(w) for w in halfwidths]
        return cls([p - w for p, w in zip(pt, hw)], [p + w for p, w in zip(pt, hw)])

    @property
    def is_empty(self) -> bool:
        return self._empty

    def __eq__(self, other):
        if not isinstance(other, RBox):
            return NotImplemented
        if self._empty or other._empty:
            return self._empty and other._empty and self.dims == other.dims
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.dims, self.lo, self.hi, self._empty))

    def __repr__(self):
        if self._empty:
            return f"RBox.empty({self.dims})"
        parts = "x".join(f"({format_rational(a)},{format_rational(b)})"
                         for a, b in zip(self.lo, self.hi))
        return f"RBox[{parts}]"

    # -- basic geometry -------------------------------------------------

    def widths(self):
        self._require_nonempty()
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def midpoint(self):
        self._require_nonempty()
        return tuple((a + b) / 2 for a, b in zip(self.lo, self.hi))

    def diameter_sq(self) -> mpq:
        """Exact squared Euclidean diameter sum((hi-lo)^2)."""
        self._require_nonempty()
        return sum(((b - a) * (b - a) for a, b in zip(self.lo, self.hi)), ZERO)

    def radius_sq(self) -> mpq:
        return self.diameter_sq() / 4

    def radius_decimal_upper(self, sig: int = 17) -> str:
        """Outward (upward) rounded decimal radius, for reporting only."""
        r = sqrt_upper(self.radius_sq())
        return decimal_str(r, sig)

    def contains_point(self, point) -> bool:
        if self._empty:
            return False
        return all(a < mpq(p) < b for a, p, b in zip(self.lo, point, self.hi))

    def closure_contains_point(self, point) -> bool:
        if self._empty:
            return False
        return all(a <= mpq(p) <= b for a, p, b in zip(self.lo, point, self.hi))

    def translate(self, vec) -> "RBox":
        if self._empty:
            return self
        v = [mpq(x) for x in vec]
        return RBox([a + x for a, x in zip(self.lo, v)],
                    [b + x for b, x in zip(self.hi, v)])

    def pad(self, eps) -> "RBox":
        """Symmetric enlargement by eps (> 0) on every axis."""
        if self._empty:
            return self
        e = mpq(eps)
        return RBox([a - e for a in self.lo], [b + e for b in self.hi])

    def interval(self, axis: int):
        self._require_nonempty()
        return self.lo[axis], self.hi[axis]

    def with_interval(self, axis: int, lo, hi) -> "RBox":
        self._require_nonempty()
        los = list(self.lo)
        his = list(self.hi)
        los[axis], his[axis] = mpq(lo), mpq(hi)
        return RBox(los, his)

    def _require_nonempty(self):
        if self._empty:
            raise BoxError("operation undefined on the empty box")

    # -- serialization ---------------------------------------------------

    def to_json(self):
        if self._empty:
            return None
        return [[format_rational(a), format_rational(b)]
                for a, b in zip(self.lo, self.hi)]

    @classmethod
    def from_json(cls, data, dims: int | None = None) -> "RBox":
        if data is None:
            if dims is None:
                raise BoxError("empty box in JSON needs an explicit dimension")
            return cls.empty(dims)
        lo = [parse_rational(pair[0]) for pair in data]
        hi = [parse_rational(pair[1]) for pair in data]
        return cls(lo, hi)


def _check_dims(a: RBox, b: RBox):
    if a.dims != b.dims:
        raise BoxError(f"dimension mismatch: {a.dims} vs {b.dims}")


def minkowski_sum(a: RBox, b: RBox) -> RBox:
    """Componentwise sum of two open boxes; empty absorbs."""
    _check_dims(a, b)
    if a.is_empty or b.is_empty:
        return RBox.empty(a.dims)
    return RBox([x + y for x, y in zip(a.lo, b.lo)],
                [x + y for x, y in zip(a.hi, b.hi)])


def scale(h, b: RBox) -> RBox:
    """Multiply all endpoints by h > 0 exactly."""
    h = mpq(h)
    if h <= 0:
        raise BoxError("scale factor must be positive")
    if b.is_empty:
        return b
    return RBox([h * x for x in b.lo], [h * x for x in b.hi])


def subset(a: RBox, b: RBox) -> bool:
    """Open-box containment a ⊆ b."""
    _check_dims(a, b)
    if a.is_empty:
        return True
    if b.is_empty:
        return False
    return all(bl <= al and ah <= bh
               for al, ah, bl, bh in zip(a.lo, a.hi, b.lo, b.hi))


def closure_subset(a: RBox, b: RBox) -> bool:
    """cl(a) ⊆ b, i.e. containment with strict endpoint margins."""
    _check_dims(a, b)
    if a.is_empty:
        return True
    if b.is_empty:
        return False
    return all(bl < al and ah < bh
               for al, ah, bl, bh in zip(a.lo, a.hi, b.lo, b.hi))


def closed_subset_closed(a: RBox, b: RBox) -> bool:
    """cl(a) ⊆ cl(b); used for ambient (compact domain) containment."""
    return subset(a, b)


def hull(a: RBox, b: RBox) -> RBox:
    _check_dims(a, b)
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    return RBox([min(x, y) for x, y in zip(a.lo, b.lo)],
                [max(x, y) for x, y in zip(a.hi, b.hi)])


def intersect(a: RBox, b: RBox) -> RBox:
    _check_dims(a, b)
    if a.is_empty or b.is_empty:
        return RBox.empty(a.dims)
    lo = [max(x, y) for x, y in zip(a.lo, b.lo)]
    hi = [min(x, y) for x, y in zip(a.hi, b.hi)]
    if any(l >= h for l, h in zip(lo, hi)):
        return RBox.empty(a.dims)
    return RBox(lo, hi)


def closures_intersect(a: RBox, b: RBox) -> bool:
    _check_dims(a, b)
    if a.is_empty or b.is_empty:
        return False
    return all(max(x, y) <= min(u, v)
               for x, y, u, v in zip(a.lo, b.lo, a.hi, b.hi))


# -- exact union coverage ----------------------------------------------------
#
# Rule checks of the form Y ⊆ ∪X need exact open-set reasoning. Leftover
# pieces are boxes whose sides carry open/closed flags, so removing an open
# box keeps the boundary points it does not contain.

class _Piece:
    __slots__ = ("lo", "hi", "lc", "hc")

    def __init__(self, lo, hi, lc, hc):
        self.lo, self.hi, self.lc, self.hc = lo, hi, lc, hc

    def is_empty(self):
        for a, b, ac, bc in zip(self.lo, self.hi, self.lc, self.hc):
            if a > b or (a == b and not (ac and bc)):
                return True
        return False


def _subtract_open_box(piece: _Piece, box: RBox):
    """Pieces of `piece` not covered by the open `box`."""
    # no overlap at all -> piece unchanged
    for k in range(len(piece.lo)):
        if piece.hi[k] < box.lo[k] or (piece.hi[k] == box.lo[k] and not piece.hc[k]):
            return [piece]
        if piece.lo[k] > box.hi[k] or (piece.lo[k] == box.hi[k] and not piece.lc[k]):
            return [piece]
    out = []
    cur = piece
    for k in range(len(piece.lo)):
        # part strictly left of box (including the boundary point box.lo[k])
        if cur.lo[k] < box.lo[k] or (cur.lo[k] == box.lo[k] and cur.lc[k]):
            lo = list(cur.lo); hi = list(cur.hi)
            lc = list(cur.lc); hc = list(cur.hc)
            hi[k] = box.lo[k]
            hc[k] = True  # open box excludes its own lo endpoint
            if cur.hi[k] < box.lo[k] or (cur.hi[k] == box.lo[k] and cur.hc[k]):
                hi[k], hc[k] = cur.hi[k], cur.hc[k]
            p = _Piece(tuple(lo), tuple(hi), tuple(lc), tuple(hc))
            if not p.is_empty():
                out.append(p)
        # part right of box (including boundary point box.hi[k])
        if cur.hi[k] > box.hi[k] or (cur.hi[k] == box.hi[k] and cur.hc[k]):
            lo = list(cur.lo); hi = list(cur.hi)
            lc = list(cur.lc); hc = list(cur.hc)
            lo[k] = box.hi[k]
            lc[k] = True
            if cur.lo[k] > box.hi[k] or (cur.lo[k] == box.hi[k] and cur.lc[k]):
                lo[k], lc[k] = cur.lo[k], cur.lc[k]
            p = _Piece(tuple(lo), tuple(hi), tuple(lc), tuple(hc))
            if not p.is_empty():
                out.append(p)
        # clip cur to the open slab on axis k and continue with other axes
        lo = list(cur.lo); hi = list(cur.hi)
        lc = list(cur.lc); hc = list(cur.hc)
        if lo[k] < box.lo[k] or (lo[k] == box.lo[k] and lc[k]):
            lo[k], lc[k] = box.lo[k], False
        if hi[k] > box.hi[k] or (hi[k] == box.hi[k] and hc[k]):
            hi[k], hc[k] = box.hi[k], False
        cur = _Piece(tuple(lo), tuple(hi), tuple(lc), tuple(hc))
        if cur.is_empty():
            return out
    return out


def union_covers(cover, target: RBox) -> bool:
    """Exact check that the open box `target` is a subset of ∪cover."""
    if target.is_empty:
        return True
    boxes = [b for b in cover if not b.is_empty]
    if len(boxes) == 1:
        return subset(target, boxes[0])
    pieces = [_Piece(target.lo, target.hi,
                     (False,) * target.dims, (False,) * target.dims)]
    for b in boxes:
        nxt = []
        for p in pieces:
            nxt.extend(_subtract_open_box(p, b))
        pieces = nxt
        if not pieces:
            return True
    return not pieces
