"""Pure-numpy kernel lane.

These are the hot inner loops of the package: polygon membership and distance
predicates used by the Whitney filter, and batch evaluation of mollified
indicators (values + derivatives) used by the partition of unity. The Cython
lane in ``_kernels_cy`` implements the same signatures; ``_backend`` picks one
at import time. Keep the two lanes behaviorally identical.

Derivative outputs are laid out in graded lexicographic multi-index order:
(0,0),(1,0),(0,1),(2,0),(1,1),(0,2),(3,0),(2,1),(1,2),(0,3).
"""
from __future__ import annotations

import numpy as np

from . import smoothstep

_CHUNK = 262144


def points_in_polygon(px, py, vertices):
    """Strict polygon membership by crossing number; boundary points are False.

    vertices: (nv, 2) closed ring given without the repeated first vertex.
    """
    px = np.ascontiguousarray(px, dtype=float)
    py = np.ascontiguousarray(py, dtype=float)
    v = np.asarray(vertices, dtype=float)
    ax, ay = v[:, 0], v[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    out = np.empty(px.shape[0], dtype=bool)
    for s in range(0, px.shape[0], _CHUNK):
        x = px[s:s + _CHUNK, None]
        y = py[s:s + _CHUNK, None]
        ex, ey = bx[None, :] - ax[None, :], by[None, :] - ay[None, :]
        rx, ry = x - ax[None, :], y - ay[None, :]
        cross = ex * ry - ey * rx
        dot = ex * rx + ey * ry
        len2 = ex * ex + ey * ey
        on_edge = (np.abs(cross) <= 1e-14 * len2) & (dot >= 0.0) & (dot <= len2)
        cond = (ay[None, :] > y) != (by[None, :] > y)
        # x-coordinate of the edge at height y; guarded by cond so ey != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = ax[None, :] + (y - ay[None, :]) * ex / ey
        crossings = (cond & (x < xs)).sum(axis=1)
        out[s:s + _CHUNK] = (crossings % 2 == 1) & ~on_edge.any(axis=1)
    return out


def _point_rect_dist2(px, py, x0, x1, y0, y1):
    dx = np.maximum(x0 - px, 0.0) + np.maximum(px - x1, 0.0)
    dy = np.maximum(y0 - py, 0.0) + np.maximum(py - y1, 0.0)
    return dx * dx + dy * dy


def _point_seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    t = np.where(len2 > 0.0, ((px - ax) * dx + (py - ay) * dy) / np.where(len2 > 0.0, len2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx, cy = ax + t * dx, ay + t * dy
    return (px - cx) ** 2 + (py - cy) ** 2


def _clip_interval(rects, edges):
    """Liang-Barsky parameter interval of each segment against each rect.

    rects (R,4) as x0,x1,y0,y1; edges (E,4) as ax,ay,bx,by.
    Returns (t_enter, t_exit) with shape (R, E); nonempty iff t_enter <= t_exit.
    """
    x0 = rects[:, 0][:, None]
    x1 = rects[:, 1][:, None]
    y0 = rects[:, 2][:, None]
    y1 = rects[:, 3][:, None]
    ax = edges[None, :, 0]
    ay = edges[None, :, 1]
    dx = edges[None, :, 2] - ax
    dy = edges[None, :, 3] - ay
    with np.errstate(divide="ignore", invalid="ignore"):
        tx1 = (x0 - ax) / dx
        tx2 = (x1 - ax) / dx
        ty1 = (y0 - ay) / dy
        ty2 = (y1 - ay) / dy
    inx = (ax >= x0) & (ax <= x1)
    iny = (ay >= y0) & (ay <= y1)
    zx = dx == 0.0
    zy = dy == 0.0
    tx_lo = np.where(zx, np.where(inx, -np.inf, np.inf), np.minimum(tx1, tx2))
    tx_hi = np.where(zx, np.where(inx, np.inf, -np.inf), np.maximum(tx1, tx2))
    ty_lo = np.where(zy, np.where(iny, -np.inf, np.inf), np.minimum(ty1, ty2))
    ty_hi = np.where(zy, np.where(iny, np.inf, -np.inf), np.maximum(ty1, ty2))
    t_enter = np.maximum(0.0, np.maximum(tx_lo, ty_lo))
    t_exit = np.minimum(1.0, np.minimum(tx_hi, ty_hi))
    return t_enter, t_exit


def rect_polygon_distance(rects, edges):
    """Min distance from each closed rect to the closest polygon edge segment.

    Zero when an edge meets the rect. rects (R,4), edges (E,4) -> (R,).
    """
    rects = np.ascontiguousarray(rects, dtype=float)
    edges = np.ascontiguousarray(edges, dtype=float)
    out = np.empty(rects.shape[0], dtype=float)
    step = max(1, _CHUNK // max(edges.shape[0], 1))
    for s in range(0, rects.shape[0], step):
        r = rects[s:s + step]
        t_enter, t_exit = _clip_interval(r, edges)
        hit = t_enter <= t_exit
        ax = edges[None, :, 0]
        ay = edges[None, :, 1]
        bx = edges[None, :, 2]
        by = edges[None, :, 3]
        x0 = r[:, 0][:, None]
        x1 = r[:, 1][:, None]
        y0 = r[:, 2][:, None]
        y1 = r[:, 3][:, None]
        d2 = np.minimum(
            _point_rect_dist2(ax, ay, x0, x1, y0, y1),
            _point_rect_dist2(bx, by, x0, x1, y0, y1),
        )
        for cx, cy in ((x0, y0), (x1, y0), (x0, y1), (x1, y1)):
            d2 = np.minimum(d2, _point_seg_dist2(cx, cy, ax, ay, bx, by))
        d2 = np.where(hit, 0.0, d2)
        out[s:s + step] = np.sqrt(d2.min(axis=1))
    return out


def rect_interior_crossing(rects, edges):
    """True per rect when some edge segment passes through the open rect."""
    rects = np.ascontiguousarray(rects, dtype=float)
    edges = np.ascontiguousarray(edges, dtype=float)
    out = np.zeros(rects.shape[0], dtype=bool)
    step = max(1, _CHUNK // max(edges.shape[0], 1))
    for s in range(0, rects.shape[0], step):
        r = rects[s:s + step]
        t_enter, t_exit = _clip_interval(r, edges)
        with np.errstate(invalid="ignore"):
            tm = 0.5 * (t_enter + t_exit)
        ax = edges[None, :, 0]
        ay = edges[None, :, 1]
        dx = edges[None, :, 2] - ax
        dy = edges[None, :, 3] - ay
        mx = ax + tm * dx
        my = ay + tm * dy
        strict = (
            (mx > r[:, 0][:, None]) & (mx < r[:, 1][:, None])
            & (my > r[:, 2][:, None]) & (my < r[:, 3][:, None])
        )
        out[s:s + step] = ((t_enter <= t_exit) & strict).any(axis=1)
    return out


def build_rect_index(rects, radius):
    """Uniform-grid CSR index over r-inflated rects, shared by both lanes.

    Returns (ox, oy, cs, nx, ny, cell_start, cell_items).
    """
    rects = np.ascontiguousarray(rects, dtype=float)
    n = rects.shape[0]
    ox = float(rects[:, 0].min() - radius)
    oy = float(rects[:, 2].min() - radius)
    wx = float(rects[:, 1].max() + radius) - ox
    wy = float(rects[:, 3].max() + radius) - oy
    dims = np.concatenate([rects[:, 1] - rects[:, 0], rects[:, 3] - rects[:, 2]])
    cs = max(4.0 * radius, float(np.median(dims)), 1e-12)
    nx = int(np.clip(np.ceil(wx / cs), 1, 2048))
    ny = int(np.clip(np.ceil(wy / cs), 1, 2048))
    cx0 = np.clip(((rects[:, 0] - radius - ox) / cs).astype(np.int64), 0, nx - 1)
    cx1 = np.clip(((rects[:, 1] + radius - ox) / cs).astype(np.int64), 0, nx - 1)
    cy0 = np.clip(((rects[:, 2] - radius - oy) / cs).astype(np.int64), 0, ny - 1)
    cy1 = np.clip(((rects[:, 3] + radius - oy) / cs).astype(np.int64), 0, ny - 1)
    spanx = cx1 - cx0 + 1
    spany = cy1 - cy0 + 1
    counts = spanx * spany
    total = int(counts.sum())
    rect_id = np.repeat(np.arange(n, dtype=np.int64), counts)
    local = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    cx = np.repeat(cx0, counts) + local // np.repeat(spany, counts)
    cy = np.repeat(cy0, counts) + local % np.repeat(spany, counts)
    cell = cx * ny + cy
    order = np.argsort(cell, kind="stable")
    cell_items = rect_id[order].astype(np.int64)
    cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(cell_start, cell + 1, 1)
    np.cumsum(cell_start, out=cell_start)
    return ox, oy, cs, nx, ny, cell_start, cell_items


def _axis_terms(u_lo, u_hi, radius, m):
    if m == 0:
        # mathematically >= 0; clamp the cancellation residue in the far tail
        return np.maximum(smoothstep.step(u_lo) - smoothstep.step(u_hi), 0.0)
    scale = radius ** (-m)
    return (smoothstep.step_derivative(u_lo, m) - smoothstep.step_derivative(u_hi, m)) * scale


def mollified_eval(rects, ox, oy, cs, nx, ny, cell_start, cell_items,
                   radius, px, py, dmax):
    """Mollified indicator of a disjoint rect union, with derivatives.

    The indicator of each rect is convolved with the tensor bump of half-width
    ``radius``; disjointness makes the union's mollification the plain sum.
    Returns (npts, npairs) with pairs in graded lexicographic order.
    """
    px = np.ascontiguousarray(px, dtype=float)
    py = np.ascontiguousarray(py, dtype=float)
    npts = px.shape[0]
    npairs = (dmax + 1) * (dmax + 2) // 2
    out = np.zeros((npts, npairs), dtype=float)
    for s in range(0, npts, _CHUNK):
        x = px[s:s + _CHUNK]
        y = py[s:s + _CHUNK]
        cx = np.clip(((x - ox) / cs).astype(np.int64), 0, nx - 1)
        cy = np.clip(((y - oy) / cs).astype(np.int64), 0, ny - 1)
        cell = cx * ny + cy
        counts = cell_start[cell + 1] - cell_start[cell]
        total = int(counts.sum())
        if total == 0:
            continue
        pid = np.repeat(np.arange(x.shape[0], dtype=np.int64), counts)
        local = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
        items = cell_items[np.repeat(cell_start[cell], counts) + local]
        xx = x[pid]
        yy = y[pid]
        ux_lo = (xx - rects[items, 0]) / radius
        ux_hi = (xx - rects[items, 1]) / radius
        uy_lo = (yy - rects[items, 2]) / radius
        uy_hi = (yy - rects[items, 3]) / radius
        axs = [_axis_terms(ux_lo, ux_hi, radius, m) for m in range(dmax + 1)]
        ays = [_axis_terms(uy_lo, uy_hi, radius, m) for m in range(dmax + 1)]
        col = 0
        for order in range(dmax + 1):
            for my in range(order + 1):
                mx = order - my
                contrib = axs[mx] * ays[my]
                out[s:s + _CHUNK, col] += np.bincount(pid, weights=contrib, minlength=x.shape[0])
                col += 1
    return out
