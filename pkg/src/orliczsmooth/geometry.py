"""Polygonal domains, exact dyadic squares, and Whitney decompositions.

Squares carry integer coordinates (level, ix, iy), so interior-disjointness,
touching, and ancestry are exact integer predicates. The Whitney filter keeps
a maximal dyadic square Q when dist(Q, complement) exceeds diam(Q) = sqrt(2)
times its side; at the deepest level the threshold drops to one side length,
which trades a thinner uncovered boundary collar for the same (W1)-(W4)
guarantees (a rejected parent still forces dist <= 3*sqrt(2)*side, and a
touching pair still has side ratio <= 2 because the finer square's ancestor
at the adjacent level was rejected under the stricter rule).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels

SQRT2 = math.sqrt(2.0)


class GeometryError(Exception):
    """Base class for domain/decomposition failures."""


class InvalidDomainError(GeometryError):
    pass


class NotContainedError(GeometryError):
    """A square was not strictly inside the domain."""


class DecompositionError(GeometryError):
    """No square survived the Whitney filter at the configured depth."""


class ChainNotFoundError(GeometryError):
    """Two squares are not connected within the side-ratio window."""


@dataclass(frozen=True, order=True)
class Point:
    x: float
    y: float


@dataclass(frozen=True, order=True)
class DyadicSquare:
    """[ix*2^-level, (ix+1)*2^-level] x [iy*2^-level, (iy+1)*2^-level]."""

    level: int
    ix: int
    iy: int

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def side_exact(self) -> Fraction:
        return Fraction(1, 2 ** self.level)

    def rect(self) -> tuple[float, float, float, float]:
        s = self.side
        return (self.ix * s, (self.ix + 1) * s, self.iy * s, (self.iy + 1) * s)

    def center(self) -> Point:
        s = self.side
        return Point((self.ix + 0.5) * s, (self.iy + 0.5) * s)

    def corners(self) -> list[Point]:
        x0, x1, y0, y1 = self.rect()
        return [Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]

    def area_exact(self) -> Fraction:
        return Fraction(1, 4 ** self.level)

    def parent(self) -> "DyadicSquare":
        if self.level == 0:
            raise ValueError("level-0 square has no parent")
        return DyadicSquare(self.level - 1, self.ix >> 1, self.iy >> 1)

    def ancestor(self, level: int) -> "DyadicSquare":
        if level > self.level:
            raise ValueError("ancestor level must not exceed own level")
        sh = self.level - level
        return DyadicSquare(level, self.ix >> sh, self.iy >> sh)

    def children(self) -> list["DyadicSquare"]:
        j, x, y = self.level + 1, self.ix << 1, self.iy << 1
        return [DyadicSquare(j, x + dx, y + dy) for dx in (0, 1) for dy in (0, 1)]

    def _scaled_span(self, to_level: int) -> tuple[int, int, int, int]:
        sh = to_level - self.level
        return (self.ix << sh, (self.ix + 1) << sh, self.iy << sh, (self.iy + 1) << sh)

    def touches(self, other: "DyadicSquare") -> bool:
        """Closed squares intersect (shared edge segment or single corner)."""
        j = max(self.level, other.level)
        ax0, ax1, ay0, ay1 = self._scaled_span(j)
        bx0, bx1, by0, by1 = other._scaled_span(j)
        return max(ax0, bx0) <= min(ax1, bx1) and max(ay0, by0) <= min(ay1, by1)

    def shares_edge(self, other: "DyadicSquare") -> bool:
        """Closed intersection is a segment of positive length."""
        j = max(self.level, other.level)
        ax0, ax1, ay0, ay1 = self._scaled_span(j)
        bx0, bx1, by0, by1 = other._scaled_span(j)
        wx = min(ax1, bx1) - max(ax0, bx0)
        wy = min(ay1, by1) - max(ay0, by0)
        return (wx > 0 and wy == 0) or (wx == 0 and wy > 0)

    def overlaps_interior(self, other: "DyadicSquare") -> bool:
        a, b = (self, other) if self.level <= other.level else (other, self)
        return b.ancestor(a.level) == a


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_cross(p, q, r, s) -> bool:
    """True when segments pq and rs share any point."""
    d1 = _orient(*p, *q, *r)
    d2 = _orient(*p, *q, *s)
    d3 = _orient(*r, *s, *p)
    d4 = _orient(*r, *s, *q)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True

    def on_seg(a, b, c):
        return (_orient(*a, *b, *c) == 0
                and min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return on_seg(p, q, r) or on_seg(p, q, s) or on_seg(r, s, p) or on_seg(r, s, q)


class PolygonDomain:
    """Simple polygon with counterclockwise vertices, implicitly closed."""

    def __init__(self, vertices: Sequence[tuple[float, float]]):
        verts = [(float(x), float(y)) for x, y in vertices]
        if len(verts) < 3:
            raise InvalidDomainError("polygon needs at least 3 vertices")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidDomainError("vertices must be finite")
        n = len(verts)
        for i in range(n):
            if verts[i] == verts[(i + 1) % n]:
                raise InvalidDomainError("repeated consecutive vertex")
        signed = 0.0
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            signed += x0 * y1 - x1 * y0
        if signed <= 0.0:
            raise InvalidDomainError("vertices must be counterclockwise (signed area > 0)")
        segs = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue  # consecutive edges legitimately share a vertex
                if _segments_cross(*segs[i], *segs[j]):
                    raise InvalidDomainError(f"edges {i} and {j} intersect: polygon is not simple")
        self.vertices: tuple[tuple[float, float], ...] = tuple(verts)
        self._signed2 = signed
        arr = np.asarray(verts, dtype=float)
        self._varray = arr
        self._edges = np.concatenate([arr, np.roll(arr, -1, axis=0)], axis=1)

    @property
    def area(self) -> float:
        return 0.5 * self._signed2

    @property
    def diameter(self) -> float:
        v = self._varray
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        return float(np.sqrt(d2.max()))

    def edge_array(self) -> np.ndarray:
        """(E, 4) rows ax, ay, bx, by."""
        return self._edges

    def bounding_box(self) -> tuple[float, float, float, float]:
        v = self._varray
        return (float(v[:, 0].min()), float(v[:, 0].max()),
                float(v[:, 1].min()), float(v[:, 1].max()))

    def fits_unit_square(self) -> bool:
        x0, x1, y0, y1 = self.bounding_box()
        return x0 >= 0.0 and y0 >= 0.0 and x1 <= 1.0 and y1 <= 1.0

    def normalized(self) -> tuple["PolygonDomain", dict]:
        """Map into [1/4, 3/4]^2 (hence diameter <= 1); return (domain, transform).

        transform maps original coordinates x to factor*x + offset.
        """
        x0, x1, y0, y1 = self.bounding_box()
        factor = 1.0 / (2.0 * self.diameter)
        ox = 0.5 - factor * 0.5 * (x0 + x1)
        oy = 0.5 - factor * 0.5 * (y0 + y1)
        verts = [(factor * x + ox, factor * y + oy) for x, y in self.vertices]
        return PolygonDomain(verts), {"factor": factor, "offset": [ox, oy]}

    def to_json_dict(self) -> dict:
        return {"vertices": [[x, y] for x, y in self.vertices]}

    @classmethod
    def from_json_dict(cls, data: dict) -> "PolygonDomain":
        try:
            verts = data["vertices"]
        except (TypeError, KeyError) as exc:
            raise InvalidDomainError("domain JSON must contain 'vertices'") from exc
        return cls([(p[0], p[1]) for p in verts])


def contains_point(domain: PolygonDomain, p: Point | tuple[float, float]) -> bool:
    x, y = (p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1]))
    res = kernels.points_in_polygon(np.array([x]), np.array([y]), domain._varray)
    return bool(res[0])


def _square_probe_points(rects: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Corners, edge midpoints, and center of each rect: (9R,), (9R,)."""
    x0, x1, y0, y1 = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    px = np.stack([x0, x1, x1, x0, xm, x1, xm, x0, xm], axis=1).ravel()
    py = np.stack([y0, y0, y1, y1, y0, ym, y1, ym, ym], axis=1).ravel()
    return px, py


def _contained_mask(domain: PolygonDomain, rects: np.ndarray) -> np.ndarray:
    px, py = _square_probe_points(rects)
    inside = kernels.points_in_polygon(px, py, domain._varray).reshape(-1, 9)
    crossing = kernels.rect_interior_crossing(rects, domain._edges)
    return inside.all(axis=1) & ~crossing


def square_in_domain(domain: PolygonDomain, q: DyadicSquare) -> bool:
    """Strict containment test: probe points inside, no edge through the interior."""
    rects = np.array([q.rect()], dtype=float)
    return bool(_contained_mask(domain, rects)[0])


def square_boundary_distance(domain: PolygonDomain, q: DyadicSquare) -> float:
    if not square_in_domain(domain, q):
        raise NotContainedError(f"square {q} is not strictly inside the domain")
    rects = np.array([q.rect()], dtype=float)
    return float(kernels.rect_polygon_distance(rects, domain._edges)[0])


class WhitneyDecomposition:
    """Immutable set of accepted squares with adjacency and the root square."""

    def __init__(self, domain: PolygonDomain, squares: Iterable[DyadicSquare], max_level: int):
        self.domain = domain
        self.max_level = max_level
        self.squares: tuple[DyadicSquare, ...] = tuple(sorted(squares))
        if not self.squares:
            raise DecompositionError("decomposition contains no squares")
        self._index = frozenset(self.squares)
        self._levels: dict[int, dict[tuple[int, int], DyadicSquare]] = {}
        for q in self.squares:
            self._levels.setdefault(q.level, {})[(q.ix, q.iy)] = q
        self.root = min(self.squares)  # smallest (level, ix, iy): maximal side first
        self.adjacency = self._build_adjacency()

    def __contains__(self, q: DyadicSquare) -> bool:
        return q in self._index

    def __len__(self) -> int:
        return len(self.squares)

    def squares_at_level(self, level: int) -> list[DyadicSquare]:
        return sorted(self._levels.get(level, {}).values())

    def _build_adjacency(self) -> dict[DyadicSquare, tuple[DyadicSquare, ...]]:
        # Every touching pair is found from its finer (or equal-level) side:
        # the 8 ring cells around Q at Q's level either are squares themselves
        # or sit inside coarser squares, reachable as ring-cell ancestors.
        levels_present = sorted(self._levels)
        neigh: dict[DyadicSquare, set[DyadicSquare]] = {q: set() for q in self.squares}
        for q in self.squares:
            ring = [(q.ix + dx, q.iy + dy)
                    for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
            for j in levels_present:
                if j > q.level:
                    break
                table = self._levels[j]
                sh = q.level - j
                for cx, cy in ring:
                    cand = table.get((cx >> sh, cy >> sh))
                    if cand is not None and cand is not q:
                        neigh[q].add(cand)
                        neigh[cand].add(q)
        return {q: tuple(sorted(s)) for q, s in neigh.items()}

    def neighbors(self, q: DyadicSquare) -> tuple[DyadicSquare, ...]:
        return self.adjacency[q]

    def edge_neighbors(self, q: DyadicSquare) -> list[DyadicSquare]:
        return [p for p in self.adjacency[q] if q.shares_edge(p)]

    def covered_area_exact(self) -> Fraction:
        return sum((q.area_exact() for q in self.squares), Fraction(0))

    def covered_area(self) -> float:
        return float(self.covered_area_exact())

    def check_invariants(self, tol: float = 1e-12) -> dict:
        """Verify (W1)-(W4); raise GeometryError on any violation."""
        for q in self.squares:
            for j in range(1, q.level):
                if q.ancestor(j) in self._index:
                    raise GeometryError(f"{q} nested inside {q.ancestor(j)}")
        rects = np.array([q.rect() for q in self.squares], dtype=float)
        if not _contained_mask(self.domain, rects).all():
            raise GeometryError("a square is not strictly inside the domain")
        dists = kernels.rect_polygon_distance(rects, self.domain._edges)
        sides = np.array([q.side for q in self.squares])
        if not (dists > sides - tol).all():
            k = int(np.argmin(dists - sides))
            raise GeometryError(f"(W2) lower bound fails at {self.squares[k]}")
        if not (dists <= 3.0 * SQRT2 * sides + tol).all():
            k = int(np.argmax(dists - 3.0 * SQRT2 * sides))
            raise GeometryError(f"(W2) upper bound fails at {self.squares[k]}")
        worst_ratio = 1.0
        for q, ns in self.adjacency.items():
            for p in ns:
                if q not in self.adjacency[p]:
                    raise GeometryError("adjacency is not symmetric")
                r = 2.0 ** abs(q.level - p.level)
                worst_ratio = max(worst_ratio, r)
                if r > 2.0:
                    raise GeometryError(f"(W4) ratio {r} between {q} and {p}")
        area = self.covered_area_exact()
        if float(area) > self.domain.area + 1e-9:
            raise GeometryError("covered area exceeds domain area")
        return {
            "num_squares": len(self.squares),
            "levels": {j: len(v) for j, v in sorted(self._levels.items())},
            "covered_area": float(area),
            "domain_area": self.domain.area,
            "area_deficit": self.domain.area - float(area),
            "max_neighbor_ratio": worst_ratio,
            "min_dist_to_side": float((dists / sides).min()),
            "max_dist_to_side": float((dists / sides).max()),
        }

    def to_json_dict(self, transform: dict | None = None) -> dict:
        scale = transform if transform is not None else {"factor": 1.0, "offset": [0.0, 0.0]}
        return {
            "scale": scale,
            "squares": [{"level": q.level, "ix": q.ix, "iy": q.iy} for q in self.squares],
        }


def whitney_decompose(domain: PolygonDomain, max_level: int = 10) -> WhitneyDecomposition:
    """Maximal dyadic squares with dist(Q, complement) > sqrt(2)*side.

    The domain must sit inside the closed unit square (normalize first if it
    does not). Levels run from 1 to max_level; only at max_level the threshold
    relaxes to dist > side, which keeps the uncovered collar thin while the
    (W1)-(W4) invariants continue to hold.
    """
    if not domain.fits_unit_square():
        raise InvalidDomainError("domain must lie inside the closed unit square; "
                                 "use PolygonDomain.normalized() first")
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    edges = domain._edges
    accepted: list[DyadicSquare] = []
    cells = np.array([(ix, iy) for ix in (0, 1) for iy in (0, 1)], dtype=np.int64)
    for level in range(1, max_level + 1):
        if cells.size == 0:
            break
        side = 2.0 ** -level
        rects = np.empty((cells.shape[0], 4), dtype=float)
        rects[:, 0] = cells[:, 0] * side
        rects[:, 1] = (cells[:, 0] + 1) * side
        rects[:, 2] = cells[:, 1] * side
        rects[:, 3] = (cells[:, 1] + 1) * side
        dists = kernels.rect_polygon_distance(rects, edges)
        contained = _contained_mask(domain, rects)
        threshold = side * (SQRT2 if level < max_level else 1.0)
        accept = contained & (dists > threshold)
        for ix, iy in cells[accept]:
            accepted.append(DyadicSquare(level, int(ix), int(iy)))
        if level == max_level:
            break
        # Recurse only where descendants can still be inside: some probe
        # point inside the domain, or the boundary meets the closed square.
        px, py = _square_probe_points(rects)
        probe_inside = kernels.points_in_polygon(px, py, domain._varray).reshape(-1, 9)
        explore = ~accept & (probe_inside.any(axis=1) | (dists == 0.0))
        parents = cells[explore]
        if parents.size == 0:
            break
        shifts = np.array([(0, 0), (0, 1), (1, 0), (1, 1)], dtype=np.int64)
        cells = (parents[:, None, :] * 2 + shifts[None, :, :]).reshape(-1, 2)
    if not accepted:
        raise DecompositionError(
            f"no square accepted up to level {max_level}; domain too thin for this depth")
    return WhitneyDecomposition(domain, accepted, max_level)


@dataclass(frozen=True)
class Chain:
    """Squares Q_1..Q_m with consecutive touching and side ratio in the window."""

    squares: tuple[DyadicSquare, ...]

    @property
    def length(self) -> int:
        return len(self.squares)

    def validate(self, ratio_window: tuple[float, float] = (0.25, 4.0)) -> None:
        lo, hi = ratio_window
        for a, b in zip(self.squares, self.squares[1:]):
            if not a.touches(b):
                raise GeometryError(f"chain break: {a} does not touch {b}")
            r = a.side / b.side
            if not (lo - 1e-12 <= r <= hi + 1e-12):
                raise GeometryError(f"chain ratio {r} outside {ratio_window}")


def find_chain(w: WhitneyDecomposition, a: DyadicSquare, b: DyadicSquare,
               ratio_window: tuple[float, float] = (0.25, 4.0)) -> Chain:
    """Shortest touching chain from a to b, breadth-first, deterministic."""
    if a not in w or b not in w:
        raise ChainNotFoundError("both endpoints must belong to the decomposition")
    if a == b:
        return Chain((a,))
    lo, hi = ratio_window
    parent: dict[DyadicSquare, DyadicSquare] = {a: a}
    frontier = [a]
    while frontier:
        nxt: list[DyadicSquare] = []
        for q in frontier:
            for p in w.adjacency[q]:
                if p in parent:
                    continue
                r = q.side / p.side
                if not (lo <= r <= hi):
                    continue
                parent[p] = q
                if p == b:
                    path = [p]
                    while path[-1] != a:
                        path.append(parent[path[-1]])
                    return Chain(tuple(reversed(path)))
                nxt.append(p)
        frontier = sorted(nxt)
    raise ChainNotFoundError(f"no chain from {a} to {b} within ratio window {ratio_window}")


def unit_square_domain() -> PolygonDomain:
    return PolygonDomain([(0, 0), (1, 0), (1, 1), (0, 1)])


def l_shape_domain() -> PolygonDomain:
    """Unit square with the upper-right quarter-ish corner removed."""
    return PolygonDomain([(0, 0), (1, 0), (1, 0.75), (0.75, 0.75), (0.75, 1), (0, 1)])


def comb_domain(teeth: int = 12) -> PolygonDomain:
    """Rectangle with thin teeth along the top edge (re-entrant slots)."""
    if teeth < 1:
        raise ValueError("need at least one tooth")
    base = 1.0 - 2.0 ** -6
    pitch = 1.0 / teeth
    third = pitch / 4.0
    verts: list[tuple[float, float]] = [(0.0, 0.0), (1.0, 0.0), (1.0, base)]
    for i in reversed(range(teeth)):
        left = i * pitch + third
        right = (i + 1) * pitch - third
        verts += [(right, base), (right, 1.0), (left, 1.0), (left, base)]
    verts.append((0.0, base))
    return PolygonDomain(verts)


_BUILTIN_DOMAINS = {
    "square": unit_square_domain,
    "lshape": l_shape_domain,
    "comb": comb_domain,
}


def builtin_domain(name: str) -> PolygonDomain:
    try:
        factory = _BUILTIN_DOMAINS[name.strip().lower()]
    except KeyError:
        raise InvalidDomainError(
            f"unknown builtin domain {name!r}; choose from {sorted(_BUILTIN_DOMAINS)}") from None
    return factory()


def load_domain(path: str) -> PolygonDomain:
    with open(path, "r", encoding="utf-8") as fh:
        return PolygonDomain.from_json_dict(json.load(fh))
