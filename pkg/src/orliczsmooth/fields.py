"""Smooth scalar fields with exact derivatives, multi-indices, quadrature.

Fields are the functions being approximated. Every family carries closed-form
partial derivatives (no automatic or numeric differentiation), because the
convergence experiments need trustworthy k-th gradients arbitrarily close to a
boundary singularity. Evaluation is vectorized over numpy arrays of points.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .geometry import DyadicSquare, Point


class FieldError(Exception):
    pass


class NonFiniteError(FieldError):
    """An evaluation or integration produced a non-finite value."""


class MultiIndex(NamedTuple):
    a1: int
    a2: int

    @property
    def order(self) -> int:
        return self.a1 + self.a2


def indices_of_order(k: int) -> list[MultiIndex]:
    """All |alpha| = k in graded lexicographic order: (k,0), (k-1,1), ..., (0,k)."""
    return [MultiIndex(k - j, j) for j in range(k + 1)]


def indices_upto(k: int) -> list[MultiIndex]:
    """All |alpha| <= k, graded lexicographic."""
    out: list[MultiIndex] = []
    for order in range(k + 1):
        out.extend(indices_of_order(order))
    return out


def index_factorial(alpha: Sequence[int]) -> int:
    return math.factorial(alpha[0]) * math.factorial(alpha[1])


def index_binomial(alpha: Sequence[int], beta: Sequence[int]) -> int:
    return math.comb(alpha[0], beta[0]) * math.comb(alpha[1], beta[1])


def indices_below(alpha: Sequence[int]) -> list[MultiIndex]:
    """All beta <= alpha componentwise (including alpha itself)."""
    return [MultiIndex(i, j) for i in range(alpha[0] + 1) for j in range(alpha[1] + 1)]


@lru_cache(maxsize=None)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    gx, gw = np.polynomial.legendre.leggauss(order)
    return gx, gw


class Quadrature:
    """Tensor Gauss-Legendre rule, exact to degree 2*order-1 per axis."""

    def __init__(self, order: int = 8):
        if order < 1:
            raise ValueError("quadrature order must be >= 1")
        self.order = order
        self._gx, self._gw = _leggauss(order)

    def rect_nodes(self, rects: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nodes and weights for a batch of rects (R, 4) as x0,x1,y0,y1.

        Returns flat arrays of length R*order^2, square-major (all nodes of a
        rect contiguous); weights per rect sum to its area.
        """
        rects = np.asarray(rects, dtype=float)
        cx = 0.5 * (rects[:, 0] + rects[:, 1])
        hx = 0.5 * (rects[:, 1] - rects[:, 0])
        cy = 0.5 * (rects[:, 2] + rects[:, 3])
        hy = 0.5 * (rects[:, 3] - rects[:, 2])
        xs = cx[:, None] + hx[:, None] * self._gx[None, :]
        ys = cy[:, None] + hy[:, None] * self._gx[None, :]
        n = self.order
        X = np.repeat(xs, n, axis=1).ravel()
        Y = np.tile(ys, (1, n)).ravel()
        w2 = (self._gw[:, None] * self._gw[None, :]).ravel()
        W = ((hx * hy)[:, None] * w2[None, :]).ravel()
        return X, Y, W

    def nodes_weights(self, q: DyadicSquare) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.rect_nodes(np.array([q.rect()], dtype=float))


def region_rects(region: Iterable[DyadicSquare]) -> np.ndarray:
    squares = sorted(region)
    if not squares:
        return np.zeros((0, 4), dtype=float)
    return np.array([q.rect() for q in squares], dtype=float)


def integrate(expr: Callable[[np.ndarray, np.ndarray], np.ndarray],
              region: Iterable[DyadicSquare], quad: Quadrature) -> float:
    """Sum of per-square tensor Gauss-Legendre approximations of expr."""
    rects = region_rects(region)
    if rects.shape[0] == 0:
        return 0.0
    X, Y, W = quad.rect_nodes(rects)
    vals = np.asarray(expr(X, Y), dtype=float)
    if vals.shape != X.shape:
        vals = np.broadcast_to(vals, X.shape)
    if not np.isfinite(vals).all():
        raise NonFiniteError("integrand is not finite at a quadrature node")
    return float(W @ vals)


class FunctionField:
    """Scalar field with exact partial derivatives up to self.order."""

    order: int
    descriptor: str

    def eval(self, alpha: Sequence[int], x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y):
        return self.eval((0, 0), x, y)

    def partial(self, alpha: Sequence[int]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        a = (int(alpha[0]), int(alpha[1]))
        return lambda x, y: self.eval(a, x, y)

    def _check_order(self, alpha: Sequence[int]) -> None:
        if alpha[0] + alpha[1] > self.order:
            raise FieldError(f"derivative order {alpha} exceeds field order {self.order}")


class PolynomialField(FunctionField):
    """sum c[i,j] x^i y^j with coefficient-shift derivatives (any order)."""

    def __init__(self, coeffs):
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.coeffs = c
        self.order = 8  # derivatives of any order exist; cap the declared one
        rows = ";".join(",".join(repr(float(v)) for v in row) for row in c)
        self.descriptor = f"poly:coeffs={rows}"

    def eval(self, alpha, x, y):
        a1, a2 = int(alpha[0]), int(alpha[1])
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = self.coeffs
        out = np.zeros(np.broadcast(x, y).shape, dtype=float)
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                if c[i, j] == 0.0 or i < a1 or j < a2:
                    continue
                fac = (math.perm(i, a1) * math.perm(j, a2)) * c[i, j]
                out += fac * x ** (i - a1) * y ** (j - a2)
        return out


class TrigField(FunctionField):
    """sin(pi*fx*x) * sin(pi*fy*y); a zero frequency drops its factor."""

    def __init__(self, fx: float, fy: float = 0.0):
        self.fx = float(fx)
        self.fy = float(fy)
        self.order = 8
        self.descriptor = f"trig:fx={self.fx!r},fy={self.fy!r}"

    @staticmethod
    def _axis(freq: float, m: int, t: np.ndarray) -> np.ndarray:
        if freq == 0.0:
            return np.ones_like(t) if m == 0 else np.zeros_like(t)
        w = math.pi * freq
        return w ** m * np.sin(w * t + m * math.pi / 2.0)

    def eval(self, alpha, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self._axis(self.fx, int(alpha[0]), x) * self._axis(self.fy, int(alpha[1]), y)


class RadialPowerField(FunctionField):
    """u(p) = |p - b|^sigma with symbolic derivative term lists.

    Each partial is a sum of terms c * dx^p * dy^q * r^s (dx, dy offsets from
    b, r the radius); differentiating a term in x yields
    c*p*dx^(p-1)*dy^q*r^s + c*s*dx^(p+1)*dy^q*r^(s-2), so term lists close
    under differentiation and evaluate vectorized. Smooth wherever r > 0.
    """

    def __init__(self, bx: float, by: float, sigma: float, order: int = 3):
        self.bx = float(bx)
        self.by = float(by)
        self.sigma = float(sigma)
        self.order = int(order)
        self.descriptor = f"rpow:bx={self.bx!r},by={self.by!r},sigma={self.sigma!r}"
        self._terms: dict[tuple[int, int], list[tuple[float, int, int, float]]] = {
            (0, 0): [(1.0, 0, 0, self.sigma)]
        }

    def _term_list(self, alpha: tuple[int, int]) -> list[tuple[float, int, int, float]]:
        if alpha in self._terms:
            return self._terms[alpha]
        a1, a2 = alpha
        if a1 > 0:
            prev = self._term_list((a1 - 1, a2))
            axis = 0
        else:
            prev = self._term_list((a1, a2 - 1))
            axis = 1
        nxt: dict[tuple[int, int, float], float] = {}
        for c, p, q, s in prev:
            if axis == 0:
                if p > 0:
                    key = (p - 1, q, s)
                    nxt[key] = nxt.get(key, 0.0) + c * p
                key = (p + 1, q, s - 2.0)
                nxt[key] = nxt.get(key, 0.0) + c * s
            else:
                if q > 0:
                    key = (p, q - 1, s)
                    nxt[key] = nxt.get(key, 0.0) + c * q
                key = (p, q + 1, s - 2.0)
                nxt[key] = nxt.get(key, 0.0) + c * s
        terms = [(c, p, q, s) for (p, q, s), c in sorted(nxt.items()) if c != 0.0]
        self._terms[alpha] = terms
        return terms

    def eval(self, alpha, x, y):
        self._check_order(alpha)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dx = x - self.bx
        dy = y - self.by
        r2 = dx * dx + dy * dy
        out = np.zeros(np.broadcast(dx, dy).shape, dtype=float)
        for c, p, q, s in self._term_list((int(alpha[0]), int(alpha[1]))):
            term = c * np.ones_like(out)
            if p:
                term = term * dx ** p
            if q:
                term = term * dy ** q
            if s != 0.0:
                term = term * r2 ** (0.5 * s)
            out += term
        return out


def make_singular_field(b: Point | tuple[float, float], sigma: float,
                        order: int = 3) -> RadialPowerField:
    """u(p) = |p - b|^sigma for a boundary point b; the workhorse test input.

    For non-even sigma the k-th gradient blows up like r^(sigma-k) at b while
    staying Orlicz-integrable for suitable Psi, which is exactly the regime
    the approximant has to handle. Even integer sigma degenerates to a
    polynomial and is accepted as a smoke-test input.
    """
    bx, by = (b.x, b.y) if isinstance(b, Point) else (float(b[0]), float(b[1]))
    return RadialPowerField(bx, by, sigma, order=order)


def gradk_magnitude(u: FunctionField, k: int, p: Point | tuple[float, float]) -> float:
    """Euclidean norm of (d^alpha u(p)) over all |alpha| = k."""
    if k > u.order:
        raise FieldError(f"k={k} exceeds field order {u.order}")
    x = np.array([p.x if isinstance(p, Point) else float(p[0])])
    y = np.array([p.y if isinstance(p, Point) else float(p[1])])
    total = 0.0
    for alpha in indices_of_order(k):
        v = float(u.eval(alpha, x, y)[0])
        total += v * v
    return math.sqrt(total)


def gradk_magnitude_grid(u: FunctionField, k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized |grad^k u| over arrays of points."""
    if k > u.order:
        raise FieldError(f"k={k} exceeds field order {u.order}")
    total = None
    for alpha in indices_of_order(k):
        v = u.eval(alpha, x, y)
        total = v * v if total is None else total + v * v
    return np.sqrt(total)


def _parse_kv(body: str) -> dict[str, str]:
    out: dict[str, str] = {}
    if not body:
        return out
    for chunk in body.split(","):
        if not chunk:
            continue
        key, _, val = chunk.partition("=")
        out[key.strip()] = val.strip()
    return out


def parse_field(spec: str) -> FunctionField:
    """Build a field from a config string.

    poly:coeffs=ROW;ROW;...   rows are comma-separated, entry (i,j) scales x^i y^j
    trig:freq=F               or fx=..,fy=..
    rpow:bx=..,by=..,sigma=.. optional order=K (default 3)
    """
    family, _, body = spec.strip().partition(":")
    family = family.strip().lower()
    if family == "poly":
        _, _, rows = body.partition("=")
        coeffs = [[float(v) for v in row.split(",")] for row in rows.split(";") if row]
        width = max(len(r) for r in coeffs)
        padded = [r + [0.0] * (width - len(r)) for r in coeffs]
        return PolynomialField(padded)
    kv = _parse_kv(body)
    if family == "trig":
        if "freq" in kv:
            f = float(kv["freq"])
            return TrigField(float(kv.get("fx", f)), float(kv.get("fy", f)))
        return TrigField(float(kv.get("fx", 1.0)), float(kv.get("fy", 0.0)))
    if family == "rpow":
        try:
            bx, by, sigma = float(kv["bx"]), float(kv["by"]), float(kv["sigma"])
        except KeyError as exc:
            raise FieldError("rpow needs bx=, by=, sigma=") from exc
        return RadialPowerField(bx, by, sigma, order=int(kv.get("order", 3)))
    raise FieldError(f"unknown field family {family!r}")
