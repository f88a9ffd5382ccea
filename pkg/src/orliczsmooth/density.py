"""Smooth approximants u_n = phi_0 u + sum_i phi_i P_i and their convergence.

The approximant glues the function itself on the core (through the cutoff
phi_0) to per-piece polynomial projections on the collar.  Derivatives come
from the Leibniz rule against the partition tables, errors are integrated
square by square over the region where the approximant can differ from u,
and convergence studies tabulate modular and Luxemburg errors over a range
of scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import Polynomial, project
from .fields import (
    FunctionField,
    MultiIndex,
    Quadrature,
    index_binomial,
    indices_below,
    indices_of_order,
    indices_upto,
)
from .geometry import PolygonDomain, WhitneyDecomposition, whitney_decompose
from .layers import LayerDecomposition, LayerError, PartitionOfUnity, build_layers, partition_of_unity
from .orlicz import ModularValue, OrliczError, YoungFunction, _CachedModular, _luxemburg_scale
from .smoothstep import step, step_antiderivative, step_derivative

__all__ = [
    "DensityError",
    "Approximant",
    "ConvergenceRow",
    "CSV_HEADER",
    "build_approximant",
    "approximation_error",
    "sup_gradk",
    "truncate",
    "TruncationField",
    "convergence_study",
    "rows_to_csv",
    "rank_correlation",
]

CSV_HEADER = ("n,modular_error,luxemburg_error,sup_gradk_un,"
              "num_squares,num_pieces,max_chain_len")


class DensityError(Exception):
    """Failure while building or evaluating an approximant."""


class Approximant(FunctionField):
    """u_n = phi_0 u + sum_i phi_i P_i with Leibniz-rule derivatives.

    Where phi_0 = 1 the approximant reproduces u exactly (all other cutoff
    terms vanish identically there); where some phi_i = 1 it reproduces the
    degree <= k-1 polynomial P_i, so its k-th derivatives vanish.
    """

    def __init__(self, n: int, u: FunctionField, partition: PartitionOfUnity,
                 polys: tuple[Polynomial, ...], w: WhitneyDecomposition):
        if len(polys) != partition.member_count - 1:
            raise DensityError("one polynomial required per boundary piece")
        self.n = int(n)
        self.u = u
        self.partition = partition
        self.polys = tuple(polys)
        self.w = w
        self.order = partition.order
        self.descriptor = f"approximant(n={n},{u.descriptor})"
        # derivative polynomials, reused across evaluation chunks
        cols = indices_upto(self.order)
        self._poly_tables = [
            {tuple(a): P.derivative(tuple(a)) for a in cols} for P in self.polys]

    @property
    def layers(self) -> LayerDecomposition:
        return self.partition.layers

    def derivative_table(self, px, py, max_order: int | None = None) -> np.ndarray:
        """(npts, npairs) table of d^alpha u_n in graded lexicographic order."""
        px = np.ascontiguousarray(px, dtype=float)
        py = np.ascontiguousarray(py, dtype=float)
        d = self.order if max_order is None else int(max_order)
        cols = indices_upto(d)
        colof = {a: c for c, a in enumerate(cols)}
        pou = self.partition
        members = pou.active_members(px, py).tolist()
        psi_tab = pou.evaluate(px, py, max_order=d, members=members)
        u_tab = np.empty((px.shape[0], len(cols)))
        for c, a in enumerate(cols):
            u_tab[:, c] = self.u.eval(tuple(a), px, py)
        out = np.zeros((px.shape[0], len(cols)))
        for row, m in enumerate(members):
            if m == 0:
                g_tab = u_tab
            else:
                g_tab = np.empty_like(u_tab)
                derivs = self._poly_tables[m - 1]
                for c, a in enumerate(cols):
                    g_tab[:, c] = derivs[tuple(a)].evaluate(px, py)
            for c, a in enumerate(cols):
                acc = out[:, c]
                for b in indices_below(a):
                    g = MultiIndex(a[0] - b[0], a[1] - b[1])
                    acc += (index_binomial(a, b)
                            * psi_tab[row, :, colof[b]] * g_tab[:, colof[g]])
        return out

    def eval(self, alpha, x, y):
        a = MultiIndex(int(alpha[0]), int(alpha[1]))
        self._check_order(a)
        bx, by = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(y, dtype=float))
        table = self.derivative_table(bx.ravel(), by.ravel(), max_order=a.order)
        col = indices_upto(a.order).index(a)
        return table[:, col].reshape(bx.shape)


def build_approximant(u: FunctionField, w: WhitneyDecomposition,
                      layers: LayerDecomposition, k: int,
                      partition: PartitionOfUnity | None = None,
                      quad: Quadrature | None = None) -> Approximant:
    """Assemble the scale-n approximant: P_i projects u on piece i's anchor."""
    if k < 1:
        raise DensityError("k must be >= 1")
    if partition is None:
        partition = partition_of_unity(layers, k)
    elif partition.layers is not layers:
        raise DensityError("partition was built for a different decomposition")
    quad = quad or Quadrature(8)
    for p in layers.pieces:
        if p.anchor not in w:
            raise DensityError(f"anchor of piece {p.index} is not a decomposition square")
    polys = tuple(project(u, [p.anchor], k, quad) for p in layers.pieces)
    return Approximant(n=layers.n, u=u, partition=partition, polys=polys, w=w)


def _active_squares(un: Approximant):
    """Squares where u_n can differ from u: the collar plus its core fringe.

    A core square all of whose touching squares are core sits behind a frame
    of side >= 2^-n core squares, further than any piece cutoff's support
    reach of 3*2^-(n+5); there phi_0 = 1 identically and the error vanishes.
    """
    core = un.layers.core
    w = un.w
    active = [q for q in w.squares if q not in core]
    active.extend(q for q in core.squares
                  if any(p not in core for p in w.neighbors(q)))
    return sorted(active)


def _error_accumulate(u: FunctionField, un: Approximant, psi: YoungFunction,
                      k: int, quad: Quadrature, chunk_squares: int = 256):
    """Shared pass: modular sum, per-component Luxemburg caches, sup |grad^k u_n|.

    Integration applies the configured Gauss rule to each square of the
    Whitney cover, restricted to squares where u_n can differ from u (the
    exact-reproduction region still feeds the sup, where grad^k u_n equals
    grad^k u).
    """
    if k > un.order:
        raise DensityError(f"k={k} exceeds the approximant's derivative order {un.order}")
    grade = [indices_upto(k).index(a) for a in indices_of_order(k)]
    active = _active_squares(un)
    active_set = set(active)
    modular_sum = 0.0
    sup = 0.0
    ncomp = len(grade)
    vals_parts: list[list[np.ndarray]] = [[] for _ in range(ncomp)]
    wts_parts: list[np.ndarray] = []
    for s in range(0, len(active), chunk_squares):
        rects = np.array([q.rect() for q in active[s:s + chunk_squares]])
        X, Y, W = quad.rect_nodes(rects)
        un_tab = un.derivative_table(X, Y, max_order=k)
        u_tab = np.column_stack([u.eval(tuple(a), X, Y) for a in indices_of_order(k)])
        err = np.abs(u_tab - un_tab[:, grade])
        if not np.isfinite(err).all():
            raise DensityError("error derivatives are not finite at a quadrature node")
        with np.errstate(over="ignore"):
            modular_sum += float(W @ psi(err).sum(axis=1))
        for j in range(ncomp):
            vals_parts[j].append(err[:, j])
        wts_parts.append(W)
        sup = max(sup, float(np.sqrt((un_tab[:, grade] ** 2).sum(axis=1)).max()))
    # where u_n = u exactly, |grad^k u_n| = |grad^k u|
    passive = [q for q in un.w.squares if q not in active_set]
    for s in range(0, len(passive), chunk_squares):
        rects = np.array([q.rect() for q in passive[s:s + chunk_squares]])
        X, Y, _ = quad.rect_nodes(rects)
        g2 = np.zeros_like(X)
        for a in indices_of_order(k):
            v = u.eval(tuple(a), X, Y)
            g2 += v * v
        sup = max(sup, float(np.sqrt(g2.max())))
    if not np.isfinite(sup):
        raise DensityError("sup of grad^k u_n is not finite")
    weights = np.concatenate(wts_parts) if wts_parts else np.zeros(0)
    caches = tuple(
        _CachedModular.from_samples(
            np.concatenate(vals_parts[j]) if wts_parts else np.zeros(0),
            weights, psi)
        for j in range(ncomp))
    return ModularValue(modular_sum), caches, sup


def approximation_error(u: FunctionField, un: Approximant, psi: YoungFunction,
                        k: int, quad: Quadrature | None = None
                        ) -> tuple[ModularValue, float]:
    """(modular, Luxemburg) size of grad^k (u - u_n) over the covered squares.

    Both aggregate all |alpha| = k derivatives: the modular sums their
    Psi-integrals, the Luxemburg error sums their individual norms.
    """
    quad = quad or Quadrature(8)
    modular_sum, caches, _ = _error_accumulate(u, un, psi, k, quad)
    return modular_sum, sum(_luxemburg_scale(c) for c in caches)


def sup_gradk(un: Approximant, k: int, quad: Quadrature | None = None) -> float:
    """Sup of |grad^k u_n| over quadrature nodes of every covered square."""
    quad = quad or Quadrature(8)
    from .orlicz import power_young

    sup = _error_accumulate(un.u, un, power_young(2.0), k, quad)[2]
    return sup


# ---------------------------------------------------------------------------
# truncation


class TruncationField(FunctionField):
    """c_M composed with u: identity up to M, constant past 2M, |c_M'| <= 1.

    c_M is odd and smooth; its derivative is the smoothed step S(u(t)) with
    u(t) = 1 - 2(|t| - M)/M, which is identically 1 on [-M, M] and 0 beyond
    2M, so the plateau value is 3M/2.  Compositions use the chain rule up to
    third order.
    """

    def __init__(self, u: FunctionField, M: float):
        if not M > 0:
            raise DensityError("truncation level must be positive")
        self.u = u
        self.M = float(M)
        self.order = min(u.order, 3)
        self.descriptor = f"truncate({u.descriptor},{M:g})"
        self._total = float(step_antiderivative(np.array(1.0)))

    def _c_derivs(self, t: np.ndarray, m: int) -> list[np.ndarray]:
        M = self.M
        sg = np.sign(t)
        arg = 1.0 - 2.0 * (np.abs(t) - M) / M
        out = [sg * (M + (M / 2.0) * (self._total - step_antiderivative(arg)))]
        if m >= 1:
            out.append(step(arg))
        if m >= 2:
            out.append(sg * step_derivative(arg, 1) * (-2.0 / M))
        if m >= 3:
            out.append(step_derivative(arg, 2) * (4.0 / M / M))
        return out

    def eval(self, alpha, x, y):
        a = MultiIndex(int(alpha[0]), int(alpha[1]))
        self._check_order(a)
        bx, by = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(y, dtype=float))
        uval = np.asarray(self.u.eval((0, 0), bx, by), dtype=float)
        c = self._c_derivs(uval, a.order)
        if a.order == 0:
            return c[0]
        letters = [(1, 0)] * a.a1 + [(0, 1)] * a.a2

        def du(parts):
            m = (sum(p[0] for p in parts), sum(p[1] for p in parts))
            return np.asarray(self.u.eval(m, bx, by), dtype=float)

        if a.order == 1:
            return c[1] * du(letters)
        if a.order == 2:
            l1, l2 = letters
            return c[2] * du([l1]) * du([l2]) + c[1] * du([l1, l2])
        l1, l2, l3 = letters
        return (c[3] * du([l1]) * du([l2]) * du([l3])
                + c[2] * (du([l1, l2]) * du([l3])
                          + du([l1, l3]) * du([l2])
                          + du([l2, l3]) * du([l1]))
                + c[1] * du(letters))


def truncate(u: FunctionField, M: float) -> TruncationField:
    """Compose u with the smooth clamp c_M."""
    return TruncationField(u, M)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class ConvergenceRow:
    """One scale of a convergence study; failure rows carry a message."""

    n: int
    modular_error: float
    luxemburg_error: float
    sup_gradk_un: float
    num_squares: int
    num_pieces: int
    max_chain_len: int
    sliver_area: float = float("nan")
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def validate(self) -> None:
        if self.failed:
            return
        values = (self.modular_error, self.luxemburg_error, self.sup_gradk_un,
                  float(self.num_squares), float(self.num_pieces),
                  float(self.max_chain_len))
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise DensityError(f"row n={self.n} has a non-finite or negative entry")


def _fmt(v: float) -> str:
    return "%.17g" % v


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.n},{_fmt(r.modular_error)},{_fmt(r.luxemburg_error)},"
                     f"{_fmt(r.sup_gradk_un)},{r.num_squares},{r.num_pieces},"
                     f"{r.max_chain_len}")
    return "\n".join(lines) + "\n"


def convergence_study(u: FunctionField, domain: PolygonDomain, psi: YoungFunction,
                      k: int, n_range, config=None,
                      w: WhitneyDecomposition | None = None) -> list[ConvergenceRow]:
    """One ConvergenceRow per scale; per-scale failures become marker rows.

    The decomposition depth must leave two levels of headroom below the
    finest approximation scale so the collar carries piece squares.
    """
    scales = sorted(int(n) for n in n_range)
    if not scales:
        raise DensityError("empty scale range")
    lmax = int(getattr(config, "lmax", max(scales) + 2))
    quad = Quadrature(int(getattr(config, "quad_order", 8)))
    max_chain_len = int(getattr(config, "max_chain_len", 20))
    if lmax < max(scales) + 2:
        raise DensityError(
            f"decomposition depth {lmax} leaves no piece scales below n={max(scales)}; "
            f"need lmax >= {max(scales) + 2}")
    if w is None:
        w = whitney_decompose(domain, max_level=lmax)
    sliver = float(domain.area) - w.covered_area()
    rows: list[ConvergenceRow] = []
    for n in scales:
        try:
            layers = build_layers(domain, w, n, max_chain_len=max_chain_len)
            pou = partition_of_unity(layers, k)
            un = build_approximant(u, w, layers, k, partition=pou, quad=quad)
            modular, caches, sup = _error_accumulate(u, un, psi, k, quad)
            row = ConvergenceRow(
                n=n, modular_error=float(modular),
                luxemburg_error=sum(_luxemburg_scale(c) for c in caches),
                sup_gradk_un=sup, num_squares=len(w.squares),
                num_pieces=layers.piece_count,
                max_chain_len=layers.max_chain_len, sliver_area=sliver)
            row.validate()
        except (LayerError, DensityError, OrliczError) as exc:
            row = ConvergenceRow(
                n=n, modular_error=float("nan"), luxemburg_error=float("nan"),
                sup_gradk_un=float("nan"), num_squares=len(w.squares),
                num_pieces=0, max_chain_len=0, sliver_area=sliver,
                failure=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def rank_correlation(xs, ys) -> float:
    """Spearman correlation (Pearson on average ranks)."""
    def ranks(v):
        v = np.asarray(v, dtype=float)
        uniq, inv = np.unique(v, return_inverse=True)
        counts = np.bincount(inv)
        first = np.cumsum(counts) - counts
        return (first + (counts - 1) / 2.0)[inv]

    rx, ry = ranks(xs), ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = float(np.sqrt((rx * rx).sum() * (ry * ry).sum()))
    if denom == 0.0:
        return 1.0 if np.allclose(rx, ry) else 0.0
    return float((rx @ ry) / denom)
