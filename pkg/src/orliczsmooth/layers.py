"""Boundary-layer structure over a Whitney decomposition.

Splits the covered region at scale n into a core block of coarse squares,
cyclically ordered boundary pieces tiling the remaining collar, anchor
squares joined by short chains, and a smooth partition of unity whose
members are mollified indicators normalized to sum to one.

Mollification here is exact rather than quadrature-based: every indicator
region is first rewritten as a union of measure-disjoint rectangles, and
convolving a rectangle with a tensor bump factors into a product of
smoothed-step differences per axis (see the backend kernels).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import get_kernels
from .fields import FunctionField, MultiIndex, index_binomial, indices_below, indices_upto
from .geometry import Chain, DyadicSquare, PolygonDomain, WhitneyDecomposition, find_chain

__all__ = [
    "LayerError",
    "CoreScaleError",
    "DegenerateLayerError",
    "AnchorError",
    "ChainBoundError",
    "CoverageError",
    "CoreRegion",
    "BoundaryPiece",
    "LayerDecomposition",
    "MollifiedRegion",
    "PartitionOfUnity",
    "core_region",
    "boundary_pieces",
    "anchor_chains",
    "build_layers",
    "partition_of_unity",
    "disjoint_rects",
]


class LayerError(Exception):
    """Failure while building the boundary-layer structure."""


class CoreScaleError(LayerError):
    """The root square is finer than the requested scale."""


class DegenerateLayerError(LayerError):
    """Fewer than three boundary pieces survive construction."""


class AnchorError(LayerError):
    """A piece touches no core square of the anchor side length."""


class ChainBoundError(LayerError):
    """An anchor chain exceeds the configured length bound."""


class CoverageError(LayerError):
    """The cutoff sum dips below threshold on the verification grid."""


# ---------------------------------------------------------------------------
# core region


@dataclass(frozen=True, eq=False)
class CoreRegion:
    """Connected block of squares with side >= 2^-n containing the root."""

    n: int
    squares: tuple[DyadicSquare, ...]
    root: DyadicSquare
    _index: frozenset = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", frozenset(self.squares))

    def __contains__(self, q: DyadicSquare) -> bool:
        return q in self._index

    def __len__(self) -> int:
        return len(self.squares)

    def area(self) -> float:
        return float(sum(q.area_exact() for q in self.squares))

    def cell_mask(self) -> np.ndarray:
        """Boolean (2^n, 2^n) occupancy of the core on the level-n cell grid."""
        size = 1 << self.n
        mask = np.zeros((size, size), dtype=bool)
        for q in self.squares:
            f = 1 << (self.n - q.level)
            mask[q.ix * f:(q.ix + 1) * f, q.iy * f:(q.iy + 1) * f] = True
        return mask

    def contains_points(self, px, py) -> np.ndarray:
        size = 1 << self.n
        mask = self.cell_mask()
        cx = np.clip((np.asarray(px, dtype=float) * size).astype(np.int64), 0, size - 1)
        cy = np.clip((np.asarray(py, dtype=float) * size).astype(np.int64), 0, size - 1)
        return mask[cx, cy]


def core_region(w: WhitneyDecomposition, n: int) -> CoreRegion:
    """Flood-fill the touching squares of side >= 2^-n from the root."""
    root = w.root
    if root.level > n:
        raise CoreScaleError(
            f"root square has side 2^-{root.level} < 2^-{n}; no core at this scale")
    found = {root}
    stack = [root]
    while stack:
        q = stack.pop()
        for p in w.neighbors(q):
            if p.level <= n and p not in found:
                found.add(p)
                stack.append(p)
    return CoreRegion(n=n, squares=tuple(sorted(found)), root=root)


# ---------------------------------------------------------------------------
# boundary trace

_DX = (1, 0, -1, 0)  # E N W S
_DY = (0, 1, 0, -1)


def _directed_edges(mask: np.ndarray) -> dict[tuple[int, int], list[int]]:
    """Start vertex -> outgoing directions of boundary edges, region on the left."""
    size = mask.shape[0]
    out: dict[tuple[int, int], list[int]] = {}

    def add(vx: int, vy: int, d: int) -> None:
        out.setdefault((int(vx), int(vy)), []).append(d)

    padx = np.zeros((size + 2, size), dtype=bool)
    padx[1:-1] = mask
    west, east = padx[:-1], padx[1:]
    for x, y in zip(*np.nonzero(west & ~east)):
        add(x, y, 1)        # west cell inside: walk north
    for x, y in zip(*np.nonzero(east & ~west)):
        add(x, y + 1, 3)    # east cell inside: walk south
    pady = np.zeros((size, size + 2), dtype=bool)
    pady[:, 1:-1] = mask
    south, north = pady[:, :-1], pady[:, 1:]
    for x, y in zip(*np.nonzero(north & ~south)):
        add(x, y, 0)        # north cell inside: walk east
    for x, y in zip(*np.nonzero(south & ~north)):
        add(x + 1, y, 2)    # south cell inside: walk west
    for v in out:
        out[v].sort()
    return out


def _boundary_cycles(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """Closed boundary walks of the cell union as vertex lists.

    At pinch vertices (two diagonal cells inside) the walk prefers the right
    turn, which keeps corner-connected lobes on a single cycle; interior
    pockets and holes come out as separate, negatively oriented cycles.
    """
    out = _directed_edges(mask)
    cycles: list[list[tuple[int, int]]] = []
    consumed: set[tuple[tuple[int, int], int]] = set()
    for start in sorted(out):
        for d0 in out[start]:
            if (start, d0) in consumed:
                continue
            verts: list[tuple[int, int]] = []
            v, d = start, d0
            while (v, d) not in consumed:
                consumed.add((v, d))
                verts.append(v)
                v = (v[0] + _DX[d], v[1] + _DY[d])
                opts = out[v]
                for turn in (3, 0, 1):  # right, straight, left
                    nd = (d + turn) & 3
                    if nd in opts:
                        d = nd
                        break
                else:
                    raise LayerError("boundary walk found no continuation")
            if (v, d) != (start, d0):
                raise LayerError("boundary walk failed to close")
            cycles.append(verts)
    return cycles


def _signed_area2(cycle: list[tuple[int, int]]) -> int:
    s = 0
    for (x1, y1), (x2, y2) in zip(cycle, cycle[1:] + cycle[:1]):
        s += x1 * y2 - x2 * y1
    return s


def _canonical_rotation(cycle: list[tuple[int, int]]) -> list[tuple[int, int]]:
    t = len(cycle)
    k = min(range(t), key=lambda i: (cycle[i], cycle[(i + 1) % t]))
    return cycle[k:] + cycle[:k]


_ARC_EDGES = 4


def _arc_sizes(total: int) -> list[int]:
    """Edge counts per arc: a handful of edges each, or 3 near-equal arcs if too short."""
    if total < 3:
        raise DegenerateLayerError(f"boundary cycle of {total} edges cannot carry 3 arcs")
    count = max(3, total // _ARC_EDGES) if total >= 2 * _ARC_EDGES else 3
    base, rem = divmod(total, count)
    return [base + 1] * rem + [base] * (count - rem)


# ---------------------------------------------------------------------------
# pieces

_ASSIGN_CHUNK = 1 << 21


@dataclass(frozen=True, eq=False)
class BoundaryPiece:
    """Collar piece: assigned squares, sup-norm expansion, owned boundary arcs."""

    index: int
    core_set: tuple[DyadicSquare, ...]
    expanded_rects: np.ndarray
    arcs: tuple[np.ndarray, ...]
    anchor: DyadicSquare | None = None

    @property
    def expanded_bbox(self) -> tuple[float, float, float, float]:
        r = self.expanded_rects
        return (float(r[:, 0].min()), float(r[:, 1].max()),
                float(r[:, 2].min()), float(r[:, 3].max()))

    def centroid(self) -> tuple[float, float]:
        areas = np.array([float(q.area_exact()) for q in self.core_set])
        cx = np.array([q.center().x for q in self.core_set])
        cy = np.array([q.center().y for q in self.core_set])
        total = areas.sum()
        return (float(areas @ cx / total), float(areas @ cy / total))

    def covers(self, px, py) -> np.ndarray:
        """Points lying in the expanded region (closed rects)."""
        px = np.asarray(px, dtype=float)[..., None]
        py = np.asarray(py, dtype=float)[..., None]
        r = self.expanded_rects
        hit = (px >= r[:, 0]) & (px <= r[:, 1]) & (py >= r[:, 2]) & (py <= r[:, 3])
        return hit.any(axis=-1)


def _square_rects(squares) -> np.ndarray:
    return np.array([q.rect() for q in squares], dtype=float)


def _inflate(rects: np.ndarray, d: float) -> np.ndarray:
    return rects + np.array([-d, d, -d, d])


def _nearest_arc(centers: np.ndarray, segs: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Index of the arc whose polyline is closest to each center."""
    ax, ay = segs[:, 0], segs[:, 1]
    dx, dy = segs[:, 2] - ax, segs[:, 3] - ay
    len2 = dx * dx + dy * dy
    out = np.empty(centers.shape[0], dtype=np.int64)
    step = max(1, _ASSIGN_CHUNK // max(1, segs.shape[0]))
    for s in range(0, centers.shape[0], step):
        px = centers[s:s + step, 0:1]
        py = centers[s:s + step, 1:2]
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0)
        d2 = (px - (ax + t * dx)) ** 2 + (py - (ay + t * dy)) ** 2
        out[s:s + step] = np.argmin(np.minimum.reduceat(d2, starts, axis=1), axis=1)
    return out


def _piece_cells(rects: np.ndarray, h: float, lim: int) -> np.ndarray:
    """Unique fine-grid cells whose centers lie inside the rect union."""
    cx0 = np.clip(np.ceil(rects[:, 0] / h - 0.5).astype(np.int64), 0, lim - 1)
    cx1 = np.clip(np.floor(rects[:, 1] / h - 0.5).astype(np.int64), 0, lim - 1)
    cy0 = np.clip(np.ceil(rects[:, 2] / h - 0.5).astype(np.int64), 0, lim - 1)
    cy1 = np.clip(np.floor(rects[:, 3] / h - 0.5).astype(np.int64), 0, lim - 1)
    wx = np.maximum(cx1 - cx0 + 1, 0)
    wy = np.maximum(cy1 - cy0 + 1, 0)
    counts = wx * wy
    total = int(counts.sum())
    local = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    kx = np.repeat(cx0, counts) + local // np.repeat(np.maximum(wy, 1), counts)
    ky = np.repeat(cy0, counts) + local % np.repeat(np.maximum(wy, 1), counts)
    return np.unique(kx * lim + ky)


def _pairwise_intersections(rect_list, n: int,
                            domain: PolygonDomain | None) -> np.ndarray:
    """Symmetric matrix: expansions share a fine-grid cell (center inside Omega).

    The grid has spacing 2^-(n+5); when ``domain`` is given a shared cell only
    counts if its center lies inside the polygon, so expansions reaching
    across a complement sliver are not treated as intersecting.
    """
    m = len(rect_list)
    lim = 1 << (n + 5)
    h = 2.0 ** -(n + 5)
    cell_sets = [_piece_cells(r, h, lim) for r in rect_list]
    adj = np.zeros((m, m), dtype=bool)
    np.fill_diagonal(adj, True)
    if m == 0:
        return adj
    keys = np.concatenate(cell_sets)
    owner = np.repeat(np.arange(m, dtype=np.int64),
                      [c.shape[0] for c in cell_sets])
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    o = owner[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    ends = np.r_[starts[1:], k.shape[0]]
    lens = ends - starts
    shared = np.flatnonzero(lens >= 2)
    if shared.size == 0:
        return adj
    if domain is not None:
        kern = get_kernels()
        ck = k[starts[shared]]
        px = (ck // lim + 0.5) * h
        py = (ck % lim + 0.5) * h
        inside = kern.points_in_polygon(px, py, domain._varray)
        shared = shared[inside]
    two = shared[lens[shared] == 2]
    a, b = o[starts[two]], o[starts[two] + 1]
    adj[a, b] = True
    adj[b, a] = True
    for r in shared[lens[shared] > 2]:
        members = np.unique(o[starts[r]:ends[r]])
        for i in range(members.shape[0]):
            adj[members[i], members[i + 1:]] = True
            adj[members[i + 1:], members[i]] = True
    return adj


def _merge_to_cyclic(adj: np.ndarray) -> list[list[int]]:
    """Merge cyclically ordered groups until adjacency is exactly tridiagonal.

    Chords are resolved first (shortest cyclic interval absorbed), then
    non-touching cyclic neighbours are merged; each step removes at least
    one group, so the loop terminates or degenerates below three groups.
    """
    groups: list[list[int]] = [[i] for i in range(adj.shape[0])]
    while True:
        g = len(groups)
        if g < 3:
            raise DegenerateLayerError(
                "piece merging collapsed below 3 pieces; increase n")
        lift = np.zeros((g, g), dtype=bool)
        for a in range(g):
            for b in range(a, g):
                lift[a, b] = lift[b, a] = bool(adj[np.ix_(groups[a], groups[b])].any())
        best = None
        for a in range(g):
            for b in range(a + 1, g):
                if not lift[a, b]:
                    continue
                gap = min(b - a, g - (b - a))
                if gap >= 2:
                    key = (gap, a, b)
                    if best is None or key < best:
                        best = key
        if best is not None:
            _, a, b = best
            if b - a <= g - (b - a):
                merged = [q for grp in groups[a:b + 1] for q in grp]
                groups = groups[:a] + [merged] + groups[b + 1:]
            else:
                merged = [q for grp in groups[b:] + groups[:a + 1] for q in grp]
                groups = [merged] + groups[a + 1:b]
            continue
        missing = [a for a in range(g) if not lift[a, (a + 1) % g]]
        if missing:
            a = missing[0]
            if a == g - 1:
                groups = [groups[-1] + groups[0]] + groups[1:-1]
            else:
                groups = groups[:a] + [groups[a] + groups[a + 1]] + groups[a + 2:]
            continue
        return groups


def boundary_pieces(w: WhitneyDecomposition, core: CoreRegion, n: int,
                    domain: PolygonDomain | None = None) -> tuple[BoundaryPiece, ...]:
    """Split the collar outside the core into cyclically ordered pieces.

    The outer boundary of the core is walked as a closed rectilinear curve,
    cut into arcs of 4..8 edge lengths (three near-equal arcs when the curve
    is too short), and every square outside the core is assigned to the arc
    nearest to its center.  Pieces are expanded by 2^-(n+3) in the sup norm
    and merged until the expansions intersect exactly their cyclic
    neighbours.  ``domain`` sharpens the intersection test to cells whose
    centers lie inside the polygon.
    """
    noncore = [q for q in w.squares if q not in core]
    if not noncore:
        raise DegenerateLayerError("no squares outside the core; decrease n")
    h = 2.0 ** -n
    cycles = _boundary_cycles(core.cell_mask())
    outer = _canonical_rotation(max(cycles, key=_signed_area2))
    sizes = _arc_sizes(len(outer))
    verts = np.array(outer + [outer[0]], dtype=float) * h
    segs = np.concatenate([verts[:-1], verts[1:]], axis=1)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    polylines = [verts[bounds[a]:bounds[a + 1] + 1] for a in range(len(sizes))]
    centers = np.array([(q.center().x, q.center().y) for q in noncore])
    nearest = _nearest_arc(centers, segs, bounds[:-1])

    per_arc: list[list[DyadicSquare]] = [[] for _ in sizes]
    for q, a in zip(noncore, nearest):
        per_arc[a].append(q)
    occupied = [a for a in range(len(sizes)) if per_arc[a]]
    if len(occupied) < 3:
        raise DegenerateLayerError(
            f"only {len(occupied)} arcs received squares; increase n")
    # a square-less arc donates its polyline to the next occupied arc
    arc_lists: dict[int, list[np.ndarray]] = {a: [polylines[a]] for a in occupied}
    for a in range(len(sizes)):
        if per_arc[a]:
            continue
        later = [x for x in occupied if x > a]
        arc_lists[later[0] if later else occupied[0]].append(polylines[a])

    d = h / 8.0
    tilde = [tuple(sorted(per_arc[a])) for a in occupied]
    rects = [_inflate(_square_rects(t), d) for t in tilde]
    groups = _merge_to_cyclic(_pairwise_intersections(rects, n, domain))
    k0 = next(i for i, grp in enumerate(groups) if 0 in grp)
    groups = groups[k0:] + groups[:k0]
    pieces = []
    for pos, grp in enumerate(groups):
        pieces.append(BoundaryPiece(
            index=pos + 1,
            core_set=tuple(sorted(q for g in grp for q in tilde[g])),
            expanded_rects=np.concatenate([rects[g] for g in grp], axis=0),
            arcs=tuple(pl for g in sorted(grp) for pl in arc_lists[occupied[g]]),
        ))
    return tuple(pieces)


# ---------------------------------------------------------------------------
# anchors, chains, assembled decomposition


@dataclass(frozen=True, eq=False)
class LayerDecomposition:
    """Core, cyclic boundary pieces, and anchor chains at scale n."""

    core: CoreRegion
    pieces: tuple[BoundaryPiece, ...]
    chains: dict[tuple[int, int], Chain]
    n: int
    max_chain_len: int

    @property
    def piece_count(self) -> int:
        return len(self.pieces)

    def chain(self, i: int, j: int) -> Chain:
        if (i, j) in self.chains:
            return self.chains[(i, j)]
        if (j, i) in self.chains:
            return Chain(tuple(reversed(self.chains[(j, i)].squares)))
        raise KeyError(f"no chain stored for pieces ({i}, {j})")

    def covered_squares(self) -> tuple[DyadicSquare, ...]:
        out = list(self.core.squares)
        for p in self.pieces:
            out.extend(p.core_set)
        return tuple(sorted(out))

    def adjacency_matrix(self, domain: PolygonDomain | None = None) -> np.ndarray:
        return _pairwise_intersections(
            [p.expanded_rects for p in self.pieces], self.n, domain)

    def coverage_report(self, domain: PolygonDomain, axis_samples: int = 200) -> dict:
        """Fractions of interior grid samples inside core / piece squares / expansions.

        Points outside all squares are still assigned to the nearest arc by
        construction, so the pieces exhaust the collar as point regions; the
        square and expansion fractions measure how much of the collar the
        materialized regions reach at the decomposition's depth.
        """
        kern = get_kernels()
        g = (np.arange(axis_samples) + 0.5) / axis_samples
        gx, gy = np.meshgrid(g, g)
        px, py = gx.ravel(), gy.ravel()
        inside = kern.points_in_polygon(px, py, domain._varray)
        px, py = px[inside], py[inside]
        in_core = self.core.contains_points(px, py)
        hit = in_core.copy()
        by_level: dict[int, set[tuple[int, int]]] = {}
        for p in self.pieces:
            for q in p.core_set:
                by_level.setdefault(q.level, set()).add((q.ix, q.iy))
        rem = np.flatnonzero(~hit)
        for level, cells in sorted(by_level.items()):
            if rem.size == 0:
                break
            s = 1 << level
            qx = np.minimum((px[rem] * s).astype(np.int64), s - 1)
            qy = np.minimum((py[rem] * s).astype(np.int64), s - 1)
            keys = (qx << 32) | qy
            wanted = np.array(sorted((ix << 32) | iy for ix, iy in cells), dtype=np.int64)
            found = np.isin(keys, wanted)
            hit[rem[found]] = True
            rem = rem[~found]
        expanded = hit.copy()
        rem = np.flatnonzero(~expanded)
        for p in self.pieces:
            if rem.size == 0:
                break
            c = p.covers(px[rem], py[rem])
            expanded[rem[c]] = True
            rem = rem[~c]
        return {
            "samples": int(px.size),
            "core_fraction": float(in_core.mean()),
            "square_fraction": float(hit.mean()),
            "expanded_fraction": float(expanded.mean()),
        }

    def to_json_dict(self) -> dict:
        def sq(q: DyadicSquare) -> dict:
            return {"level": q.level, "ix": q.ix, "iy": q.iy}

        return {
            "n": self.n,
            "core": [sq(q) for q in self.core.squares],
            "pieces": [
                {"i": p.index,
                 "tilde": [sq(q) for q in p.core_set],
                 "expanded_bbox": list(p.expanded_bbox),
                 "anchor": sq(p.anchor)}
                for p in self.pieces
            ],
            "chains": [
                {"i": i, "j": j, "squares": [sq(q) for q in ch.squares]}
                for (i, j), ch in sorted(self.chains.items())
            ],
        }


def anchor_chains(w: WhitneyDecomposition, core: CoreRegion,
                  pieces: tuple[BoundaryPiece, ...], n: int,
                  max_chain_len: int = 20) -> LayerDecomposition:
    """Anchor each piece at a side-2^-n core square and chain the anchors.

    The anchor is the side-2^-n core square whose closed rect meets the
    piece's expansion, tie-broken by distance to the piece centroid and then
    lexicographically; chains connect cyclically consecutive anchors.
    """
    cand = [q for q in core.squares if q.level == n]
    if not cand:
        raise AnchorError(f"core has no square of side 2^-{n}")
    crects = _square_rects(cand)
    anchored = []
    for piece in pieces:
        r = piece.expanded_rects
        ov = ((np.maximum(crects[:, None, 0], r[None, :, 0])
               <= np.minimum(crects[:, None, 1], r[None, :, 1]))
              & (np.maximum(crects[:, None, 2], r[None, :, 2])
                 <= np.minimum(crects[:, None, 3], r[None, :, 3])))
        touch = np.flatnonzero(ov.any(axis=1))
        if touch.size == 0:
            raise AnchorError(
                f"piece {piece.index} touches no side-2^-{n} core square")
        gx, gy = piece.centroid()
        best = min(
            ((cand[t].center().x - gx) ** 2 + (cand[t].center().y - gy) ** 2,
             cand[t]) for t in touch)[1]
        anchored.append(replace(piece, anchor=best))

    chains: dict[tuple[int, int], Chain] = {}
    longest = 0
    count = len(anchored)
    for pos, piece in enumerate(anchored):
        nxt = anchored[(pos + 1) % count]
        chains[(piece.index, piece.index)] = find_chain(w, piece.anchor, piece.anchor)
        link = find_chain(w, piece.anchor, nxt.anchor)
        chains[(piece.index, nxt.index)] = link
        longest = max(longest, link.length)
    if longest > max_chain_len:
        raise ChainBoundError(
            f"anchor chain of length {longest} exceeds bound {max_chain_len}")
    return LayerDecomposition(core=core, pieces=tuple(anchored), chains=chains,
                              n=n, max_chain_len=longest)


def build_layers(domain: PolygonDomain, w: WhitneyDecomposition, n: int,
                 max_chain_len: int = 20) -> LayerDecomposition:
    """core_region -> boundary_pieces -> anchor_chains in one call."""
    core = core_region(w, n)
    pieces = boundary_pieces(w, core, n, domain=domain)
    return anchor_chains(w, core, pieces, n, max_chain_len=max_chain_len)


# ---------------------------------------------------------------------------
# mollified regions and the partition of unity


def disjoint_rects(rects: np.ndarray) -> np.ndarray:
    """Rewrite a union of closed rects as measure-disjoint rects.

    Sweeps the compressed x-coordinates; inside each vertical slab the live
    y-intervals are merged, and runs with identical y-extent are coalesced
    across consecutive slabs.
    """
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    if rects.shape[0] <= 1:
        return rects.copy()
    xs = np.unique(np.concatenate([rects[:, 0], rects[:, 1]]))
    out: list[tuple[float, float, float, float]] = []
    live: dict[tuple[float, float], list[float]] = {}
    for xa, xb in zip(xs[:-1], xs[1:]):
        active = (rects[:, 0] <= xa) & (rects[:, 1] >= xb)
        spans: list[tuple[float, float]] = []
        if active.any():
            ys = rects[active, 2:4]
            order = np.lexsort((ys[:, 1], ys[:, 0]))
            y0, y1 = ys[order[0]]
            for i in order[1:]:
                a, b = ys[i]
                if a <= y1:
                    y1 = max(y1, b)
                else:
                    spans.append((float(y0), float(y1)))
                    y0, y1 = a, b
            spans.append((float(y0), float(y1)))
        nxt: dict[tuple[float, float], list[float]] = {}
        for span in spans:
            run = live.pop(span, None)
            if run is not None and run[1] == xa:
                run[1] = xb
                nxt[span] = run
            else:
                if run is not None:
                    out.append((run[0], run[1], span[0], span[1]))
                nxt[span] = [float(xa), float(xb)]
        for span, run in live.items():
            out.append((run[0], run[1], span[0], span[1]))
        live = nxt
    for span, run in live.items():
        out.append((run[0], run[1], span[0], span[1]))
    return np.array(sorted(out), dtype=float)


class MollifiedRegion:
    """Tensor-bump mollification of the indicator of a disjoint rect union.

    The convolution of each rect's indicator with the bump of half-width
    ``radius`` is a product of smoothed-step differences per axis, so values
    and derivatives are exact up to the step table's interpolation error.
    """

    def __init__(self, rects: np.ndarray, radius: float):
        rects = np.ascontiguousarray(np.asarray(rects, dtype=float).reshape(-1, 4))
        if rects.shape[0] == 0:
            raise LayerError("mollified region needs at least one rectangle")
        if not ((rects[:, 1] > rects[:, 0]).all() and (rects[:, 3] > rects[:, 2]).all()):
            raise LayerError("degenerate rectangle in mollified region")
        self.rects = rects
        self.radius = float(radius)
        self._kern = get_kernels()
        self._index = self._kern.build_rect_index(rects, self.radius)

    def evaluate(self, px, py, max_order: int = 0) -> np.ndarray:
        """(npts, npairs) derivative table in graded lexicographic order."""
        px = np.ascontiguousarray(px, dtype=float)
        py = np.ascontiguousarray(py, dtype=float)
        ox, oy, cs, nx, ny, cell_start, cell_items = self._index
        return self._kern.mollified_eval(self.rects, ox, oy, cs, nx, ny,
                                         cell_start, cell_items, self.radius,
                                         px, py, max_order)

    def value(self, px, py) -> np.ndarray:
        return self.evaluate(px, py, 0)[:, 0]

    def support_bbox(self) -> tuple[float, float, float, float]:
        """Bounding box of the closed support (rect union inflated by radius)."""
        r = self.rects
        return (float(r[:, 0].min()) - self.radius, float(r[:, 1].max()) + self.radius,
                float(r[:, 2].min()) - self.radius, float(r[:, 3].max()) + self.radius)

    def band_points(self) -> np.ndarray:
        """(P, 2) samples resolving the transition bands of every rect.

        Rect corners get a two-axis offset grid at the bump scale and edge
        quarter points a perpendicular one; a uniform domain grid coarser
        than the radius would miss these bands entirely.
        """
        offs = np.linspace(-1.0, 1.0, 9) * self.radius
        pts = []
        for x0, x1, y0, y1 in self.rects:
            for cx in (x0, x1):
                for cy in (y0, y1):
                    gx, gy = np.meshgrid(cx + offs, cy + offs)
                    pts.append(np.column_stack([gx.ravel(), gy.ravel()]))
            ts = np.array([0.25, 0.5, 0.75])
            ey = y0 + ts * (y1 - y0)
            ex = x0 + ts * (x1 - x0)
            for cx in (x0, x1):
                gx, gy = np.meshgrid(cx + offs, ey)
                pts.append(np.column_stack([gx.ravel(), gy.ravel()]))
            for cy in (y0, y1):
                gx, gy = np.meshgrid(ex, cy + offs)
                pts.append(np.column_stack([gx.ravel(), gy.ravel()]))
        return np.unique(np.concatenate(pts, axis=0), axis=0)


class _PartitionMember(FunctionField):
    """Field view of one partition member, derivatives via the parent."""

    def __init__(self, pou: "PartitionOfUnity", i: int):
        self._pou = pou
        self._i = int(i)
        self.order = pou.order
        self.descriptor = f"partition-member:{i}"

    def eval(self, alpha, x, y):
        a = MultiIndex(int(alpha[0]), int(alpha[1]))
        self._check_order(a)
        bx, by = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(y, dtype=float))
        table = self._pou.evaluate(bx.ravel(), by.ravel(),
                                   max_order=a.order, members=[self._i])
        col = indices_upto(a.order).index(a)
        return table[0, :, col].reshape(bx.shape)


class PartitionOfUnity:
    """Cutoffs psi_0..psi_l, mollified indicators normalized to sum to one.

    Member 0 follows the core; member i >= 1 follows piece i.  Derivative
    tables come in graded lexicographic column order; members whose support
    box misses the query points contribute exact zeros and are skipped.
    """

    def __init__(self, n: int, order: int, regions: tuple[MollifiedRegion, ...],
                 layers: LayerDecomposition):
        self.n = int(n)
        self.order = int(order)
        self.regions = tuple(regions)
        self.layers = layers
        self._boxes = np.array([r.support_bbox() for r in self.regions])

    @property
    def member_count(self) -> int:
        return len(self.regions)

    def active_members(self, px, py) -> np.ndarray:
        """Regions whose support box intersects the query points' box."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        b = self._boxes
        hit = ((b[:, 0] <= px.max()) & (b[:, 1] >= px.min())
               & (b[:, 2] <= py.max()) & (b[:, 3] >= py.min()))
        return np.flatnonzero(hit)

    def theta_sum(self, px, py) -> np.ndarray:
        px = np.ascontiguousarray(px, dtype=float)
        py = np.ascontiguousarray(py, dtype=float)
        total = np.zeros(px.shape[0])
        for i in self.active_members(px, py):
            total += self.regions[int(i)].value(px, py)
        return total

    def evaluate(self, px, py, max_order: int | None = None,
                 members=None) -> np.ndarray:
        """psi derivative tables, shape (len(members), npts, npairs).

        The normalization T = sum theta_j always runs over every supported
        member at the points; ``members`` only selects which psi rows are
        returned.  Derivatives follow the quotient rule
        d^a psi = (d^a theta - sum_{b<a} C(a,b) d^b psi d^{a-b} T) / T.
        """
        px = np.ascontiguousarray(px, dtype=float)
        py = np.ascontiguousarray(py, dtype=float)
        d = self.order if max_order is None else int(max_order)
        if d > 3:
            raise LayerError("partition derivatives supported up to order 3")
        cols = indices_upto(d)
        colof = {a: c for c, a in enumerate(cols)}
        if members is None:
            members = list(range(len(self.regions)))
        else:
            members = [int(i) for i in members]
        active = set(self.active_members(px, py).tolist())
        npts = px.shape[0]
        total = np.zeros((npts, len(cols)))
        tables: dict[int, np.ndarray] = {}
        for i in sorted(active | set(members)):
            if i in active:
                t = self.regions[i].evaluate(px, py, d)
                total += t
            else:
                t = np.zeros((npts, len(cols)))
            tables[i] = t
        inv = np.zeros(npts)
        good = total[:, 0] > 1e-12
        inv[good] = 1.0 / total[good, 0]
        out = np.zeros((len(members), npts, len(cols)))
        for row, i in enumerate(members):
            theta = tables[i]
            psi = out[row]
            for c, alpha in enumerate(cols):
                acc = theta[:, c].copy()
                for beta in indices_below(alpha):
                    if beta == alpha:
                        continue
                    gamma = MultiIndex(alpha[0] - beta[0], alpha[1] - beta[1])
                    acc -= (index_binomial(alpha, beta)
                            * psi[:, colof[beta]] * total[:, colof[gamma]])
                psi[:, c] = acc * inv
        return out

    def member(self, i: int) -> FunctionField:
        return _PartitionMember(self, i)

    def derivative_sups(self, max_order: int | None = None,
                        chunk: int = 65536) -> dict[tuple[int, int], float]:
        """Sup of |d^alpha psi_i| over all members, per multi-index.

        Maxima live in the mollification bands, so every member's band points
        are evaluated (for all members supported there) and the running max
        kept per derivative column.
        """
        d = self.order if max_order is None else int(max_order)
        cols = indices_upto(d)
        sups = np.zeros(len(cols))
        for region in self.regions:
            pts = region.band_points()
            for s in range(0, pts.shape[0], chunk):
                px = np.ascontiguousarray(pts[s:s + chunk, 0])
                py = np.ascontiguousarray(pts[s:s + chunk, 1])
                act = self.active_members(px, py)
                tab = self.evaluate(px, py, max_order=d, members=act)
                sups = np.maximum(sups, np.abs(tab).max(axis=(0, 1)))
        return {tuple(a): float(sups[c]) for c, a in enumerate(cols)}

    def support_mask(self, i: int, px, py) -> np.ndarray:
        """Points inside member i's closed support region."""
        region = self.regions[int(i)]
        px = np.asarray(px, dtype=float)[..., None]
        py = np.asarray(py, dtype=float)[..., None]
        r = region.rects
        rad = region.radius
        hit = ((px >= r[:, 0] - rad) & (px <= r[:, 1] + rad)
               & (py >= r[:, 2] - rad) & (py <= r[:, 3] + rad))
        return hit.any(axis=-1)


def _verification_grid(layers: LayerDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Five spread points per covered square."""
    sqs = layers.covered_squares()
    cx = np.array([q.center().x for q in sqs])
    cy = np.array([q.center().y for q in sqs])
    s = np.array([q.side for q in sqs])
    px, py = [], []
    for ox, oy in ((0.0, 0.0), (-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)):
        px.append(cx + ox * s)
        py.append(cy + oy * s)
    return np.concatenate(px), np.concatenate(py)


def partition_of_unity(layers: LayerDecomposition, k: int) -> PartitionOfUnity:
    """Mollified-indicator cutoffs for the core and each piece, normalized.

    psi_0's indicator region is the core dilated by 2^-n/32 (bump half-width
    2^-n/64), so its support stays within Euclidean distance 2^-n/10 of the
    core; psi_i's region is piece i's squares dilated by 2^-(n+4) (half-width
    2^-(n+5)), keeping its support inside the piece's 2^-(n+3) expansion.
    Every dilation exceeds its bump half-width, so each cutoff is identically
    one on its own squares and the sum stays >= 1 on every covered square.
    """
    if not 1 <= k <= 3:
        raise LayerError("partition derivative order must be between 1 and 3")
    h = 2.0 ** -layers.n
    regions = [MollifiedRegion(
        disjoint_rects(_inflate(_square_rects(layers.core.squares), h / 32.0)),
        h / 64.0)]
    for p in layers.pieces:
        regions.append(MollifiedRegion(
            disjoint_rects(_inflate(_square_rects(p.core_set), h / 16.0)),
            h / 32.0))
    pou = PartitionOfUnity(n=layers.n, order=k, regions=tuple(regions), layers=layers)
    px, py = _verification_grid(layers)
    total = pou.theta_sum(px, py)
    low = float(total.min())
    if low < 1e-6:
        raise CoverageError(f"cutoff sum fell to {low:.3e} on the verification grid")
    return pou
