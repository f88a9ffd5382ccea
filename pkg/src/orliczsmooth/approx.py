"""Moment-condition polynomial projection and its empirical ratio verifiers.

project(u, E, k) is the unique polynomial of total degree <= k-1 whose
derivative averages over E match those of u for every |alpha| <= k-1. In the
monomial basis the moment system is block-triangular by total degree, so it
is solved by graded descent: the top-degree coefficients are plain derivative
means, lower ones follow by back-substitution against exact monomial moments
of E (closed-form rational integrals over dyadic squares) — no dense linear
solve, no conditioning questions.

The ratio functions quantify, on concrete chains and regions, the
inequalities the construction relies on: comparability of Psi-integrals of a
polynomial on two subsets of comparable measure, the Psi-Psi Poincare
inequality on chained squares, and the growth of projection differences
along a chain. They return plain ratios with fixed 0/0 conventions so the
property suites never divide by zero silently.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .fields import (
    FunctionField,
    Quadrature,
    gradk_magnitude_grid,
    indices_of_order,
    integrate,
)
from .geometry import Chain, DyadicSquare
from .orlicz import YoungFunction, modular


class ApproxError(Exception):
    pass


class Polynomial:
    """Bivariate polynomial of bounded total degree in monomial coordinates."""

    def __init__(self, coeffs, degree_bound: int):
        d = int(degree_bound)
        if d < 0:
            raise ApproxError("degree bound must be >= 0")
        c = np.zeros((d + 1, d + 1), dtype=float)
        src = np.atleast_2d(np.asarray(coeffs, dtype=float))
        c[: src.shape[0], : src.shape[1]] = src
        for i in range(d + 1):
            for j in range(d + 1):
                if i + j > d and c[i, j] != 0.0:
                    raise ApproxError(f"coefficient ({i},{j}) exceeds total degree {d}")
        self.coeffs = c
        self.degree_bound = d

    @classmethod
    def zero(cls, degree_bound: int = 0) -> "Polynomial":
        return cls(np.zeros((1, 1)), degree_bound)

    def evaluate(self, x, y):
        """Horner in y inside Horner in x."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        acc = np.zeros(np.broadcast(x, y).shape, dtype=float)
        for i in range(self.degree_bound, -1, -1):
            row = np.zeros_like(acc)
            for j in range(self.degree_bound, -1, -1):
                row = row * y + self.coeffs[i, j]
            acc = acc * x + row
        return acc

    __call__ = evaluate

    def derivative(self, alpha: Sequence[int]) -> "Polynomial":
        a1, a2 = int(alpha[0]), int(alpha[1])
        d = self.degree_bound - a1 - a2
        if d < 0:
            return Polynomial.zero(0)
        out = np.zeros((d + 1, d + 1), dtype=float)
        for i in range(a1, self.degree_bound + 1):
            for j in range(a2, self.degree_bound + 1 - i):
                out[i - a1, j - a2] = self.coeffs[i, j] * math.perm(i, a1) * math.perm(j, a2)
        return Polynomial(out, d)

    def _binop(self, other: "Polynomial", sign: float) -> "Polynomial":
        d = max(self.degree_bound, other.degree_bound)
        c = np.zeros((d + 1, d + 1), dtype=float)
        a, b = self.coeffs, other.coeffs
        c[: a.shape[0], : a.shape[1]] += a
        c[: b.shape[0], : b.shape[1]] += sign * b
        return Polynomial(c, d)

    def __add__(self, other):
        return self._binop(other, 1.0)

    def __sub__(self, other):
        return self._binop(other, -1.0)

    def __mul__(self, scalar: float):
        out = Polynomial.zero(self.degree_bound)
        out.coeffs = self.coeffs * float(scalar)
        return out

    __rmul__ = __mul__

    def __repr__(self):
        terms = [f"{self.coeffs[i, j]:+g}*x^{i}*y^{j}"
                 for i in range(self.degree_bound + 1)
                 for j in range(self.degree_bound + 1 - i)
                 if self.coeffs[i, j] != 0.0]
        return "Polynomial(" + (" ".join(terms) or "0") + ")"


def monomial_moment(region: Iterable[DyadicSquare], gamma: Sequence[int]) -> Fraction:
    """Exact integral of x^g1 * y^g2 over a union of dyadic squares."""
    g1, g2 = int(gamma[0]), int(gamma[1])
    total = Fraction(0)
    for q in region:
        s = q.side_exact
        x0, y0 = q.ix * s, q.iy * s
        x1, y1 = x0 + s, y0 + s
        mx = (x1 ** (g1 + 1) - x0 ** (g1 + 1)) / (g1 + 1)
        my = (y1 ** (g2 + 1) - y0 ** (g2 + 1)) / (g2 + 1)
        total += mx * my
    return total


def project(u: FunctionField, region: Iterable[DyadicSquare], k: int,
            quad: Quadrature | None = None) -> Polynomial:
    """The polynomial P of total degree <= k-1 with region-mean derivatives of u.

    For every |alpha| <= k-1: integral over the region of d^alpha (u - P) = 0.
    """
    squares = sorted(set(region))
    if not squares:
        raise ApproxError("projection region is empty")
    if k < 1:
        raise ApproxError("k must be >= 1")
    if k - 1 > u.order:
        raise ApproxError(f"projection needs derivatives to order {k - 1}, "
                          f"field supplies {u.order}")
    quad = quad or Quadrature(8)
    d = k - 1
    area = monomial_moment(squares, (0, 0))
    coeffs = np.zeros((d + 1, d + 1), dtype=float)
    for m in range(d, -1, -1):
        for alpha in indices_of_order(m):
            a1, a2 = alpha
            acc = integrate(u.partial(alpha), squares, quad)
            for order in range(m + 1, d + 1):
                for beta in indices_of_order(order):
                    b1, b2 = beta
                    if b1 < a1 or b2 < a2 or coeffs[b1, b2] == 0.0:
                        continue
                    fall = math.perm(b1, a1) * math.perm(b2, a2)
                    acc -= coeffs[b1, b2] * fall * float(
                        monomial_moment(squares, (b1 - a1, b2 - a2)))
            coeffs[a1, a2] = acc / (math.factorial(a1) * math.factorial(a2) * float(area))
    return Polynomial(coeffs, d)


def safe_ratio(num: float, den: float, zero_over_zero: float) -> float:
    """Fixed conventions: 0/0 -> zero_over_zero, x/0 with x > 0 -> +inf."""
    if den == 0.0:
        return zero_over_zero if num == 0.0 else math.inf
    return num / den


def _snap_cancellation(num: float, gross: float) -> float:
    """Zero out a numerator that is pure floating-point cancellation noise.

    When the Psi-mass of a difference is below 1e-13 of the Psi-mass of the
    un-cancelled operands, the difference is indistinguishable from the exact
    zero of the reproduction case, and the ratio conventions should see 0.
    """
    if num > 0.0 and math.isfinite(gross) and num <= 1e-13 * gross:
        return 0.0
    return num


def _require_inside(region: Iterable[DyadicSquare], q: DyadicSquare, tag: str) -> list[DyadicSquare]:
    squares = sorted(set(region))
    if not squares:
        raise ApproxError(f"region {tag} is empty")
    for s in squares:
        if s.level < q.level or s.ancestor(q.level) != q:
            raise ApproxError(f"region {tag} is not contained in {q}")
    return squares


def norm_equivalence_ratio(P: Polynomial, E: Iterable[DyadicSquare],
                           F: Iterable[DyadicSquare], Q: DyadicSquare,
                           psi: YoungFunction, quad: Quadrature | None = None) -> float:
    """modular of Psi(|P|) over E divided by the same over F (both inside Q)."""
    quad = quad or Quadrature(8)
    e = _require_inside(E, Q, "E")
    f = _require_inside(F, Q, "F")
    num = float(modular(P, e, psi, quad))
    den = float(modular(P, f, psi, quad))
    return safe_ratio(num, den, zero_over_zero=1.0)


def poincare_ratio(u: FunctionField, chain: Chain, k: int, psi: YoungFunction,
                   quad: Quadrature | None = None) -> float:
    """Mean of Psi(|u - P_E| / side(Q1)^k) over the chain union, relative to
    the mean of Psi(|grad^k u|); 0/0 -> 0."""
    if k > u.order:
        raise ApproxError(f"k={k} exceeds field order {u.order}")
    chain.validate()
    quad = quad or Quadrature(8)
    region = sorted(set(chain.squares))
    P = project(u, region, k, quad)
    scale = chain.squares[0].side ** k
    num = float(modular(lambda x, y: (u(x, y) - P(x, y)) / scale, region, psi, quad))
    gross = float(modular(lambda x, y: (np.abs(u(x, y)) + np.abs(P(x, y))) / scale,
                          region, psi, quad))
    den = float(modular(lambda x, y: gradk_magnitude_grid(u, k, x, y), region, psi, quad))
    # both sides carry the same 1/|E| factor, so it cancels in the ratio
    return safe_ratio(_snap_cancellation(num, gross), den, zero_over_zero=0.0)


def chain_difference_ratio(u: FunctionField, chain: Chain, alpha: Sequence[int],
                           k: int, psi: YoungFunction,
                           quad: Quadrature | None = None) -> float:
    """Psi-mass of the projection drift d^alpha(P_{Q1} - P_{Qm}) across the
    chain, relative to the Psi-mass of |grad^k u| on the chain union."""
    a = (int(alpha[0]), int(alpha[1]))
    if a[0] + a[1] > k:
        raise ApproxError(f"|alpha| = {a[0] + a[1]} exceeds k = {k}")
    chain.validate()
    quad = quad or Quadrature(8)
    first, last = chain.squares[0], chain.squares[-1]
    P1 = project(u, [first], k, quad)
    Pm = project(u, [last], k, quad) if last != first else P1
    d1 = P1.derivative(a)
    dm = Pm.derivative(a)
    scale = first.side ** (k - a[0] - a[1])
    num = float(modular(lambda x, y: (d1(x, y) - dm(x, y)) / scale, [first], psi, quad))
    gross = float(modular(lambda x, y: (np.abs(d1(x, y)) + np.abs(dm(x, y))) / scale,
                          [first], psi, quad))
    den = float(modular(lambda x, y: gradk_magnitude_grid(u, k, x, y),
                        sorted(set(chain.squares)), psi, quad))
    return safe_ratio(_snap_cancellation(num, gross), den, zero_over_zero=0.0)
