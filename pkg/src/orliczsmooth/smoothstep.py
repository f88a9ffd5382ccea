"""C-infinity bump and step primitives shared by the mollifier and clamp code.

Everything here is built from the standard bump b(s) = exp(-1/(1-s^2)) on
(-1, 1). The normalized step S is its antiderivative rescaled so S(-1) = 0 and
S(1) = 1; S is evaluated from a dense precomputed table with cubic Hermite
interpolation (the derivative at the nodes is b itself, so the interpolant is
accurate to ~1e-13). Derivatives of S are closed forms in b, b', b'' and are
exactly zero outside (-1, 1).
"""
from __future__ import annotations

import numpy as np

_TABLE_N = 4096  # intervals on [-1, 1]
_H = 2.0 / _TABLE_N


def bump(s):
    """b(s) = exp(-1/(1-s^2)) on (-1,1), 0 elsewhere. Vectorized."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    w = 1.0 - s[m] * s[m]
    out[m] = np.exp(-1.0 / w)
    return out


def bump_d1(s):
    """First derivative of the bump."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    sm = s[m]
    w = 1.0 - sm * sm
    out[m] = np.exp(-1.0 / w) * (-2.0 * sm / (w * w))
    return out


def bump_d2(s):
    """Second derivative of the bump: b * (g'' + g'^2) with g = -1/(1-s^2)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    sm = s[m]
    w = 1.0 - sm * sm
    g1 = -2.0 * sm / (w * w)
    g2 = -2.0 / (w * w) - 8.0 * sm * sm / (w * w * w)
    out[m] = np.exp(-1.0 / w) * (g2 + g1 * g1)
    return out


def _build_tables():
    # Cumulative integral of the bump with an 8-point Gauss rule per interval.
    gx, gw = np.polynomial.legendre.leggauss(8)
    t0 = -1.0 + _H * np.arange(_TABLE_N)
    mid = t0 + _H / 2.0
    nodes = mid[:, None] + (_H / 2.0) * gx[None, :]
    pieces = (_H / 2.0) * (bump(nodes) * gw[None, :]).sum(axis=1)
    raw = np.concatenate(([0.0], np.cumsum(pieces)))
    mass = raw[-1]
    vals = raw / mass
    grid = -1.0 + _H * np.arange(_TABLE_N + 1)
    derivs = bump(grid) / mass
    # Second cumulative: A(t) = int_{-1}^t S, for the clamp antiderivative.
    svals = _hermite_eval(nodes.ravel(), vals, derivs).reshape(nodes.shape)
    apieces = (_H / 2.0) * (svals * gw[None, :]).sum(axis=1)
    avals = np.concatenate(([0.0], np.cumsum(apieces)))
    return vals, derivs, avals, mass


def _hermite_eval(t, vals, derivs):
    t = np.asarray(t, dtype=float)
    u = np.clip((t + 1.0) / _H, 0.0, float(_TABLE_N))
    i = np.minimum(u.astype(np.int64), _TABLE_N - 1)
    th = u - i
    th2 = th * th
    th3 = th2 * th
    h00 = 2.0 * th3 - 3.0 * th2 + 1.0
    h10 = th3 - 2.0 * th2 + th
    h01 = -2.0 * th3 + 3.0 * th2
    h11 = th3 - th2
    return (
        vals[i] * h00
        + derivs[i] * _H * h10
        + vals[i + 1] * h01
        + derivs[i + 1] * _H * h11
    )


STEP_VALUES, STEP_DERIVS, _STEP_ANTI, BUMP_MASS = _build_tables()


def step(t):
    """Normalized C-infinity step: 0 for t <= -1, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    # the cubic can undershoot by a denormal hair where the data is flat
    out = np.clip(_hermite_eval(t, STEP_VALUES, STEP_DERIVS), 0.0, 1.0)
    return np.where(t <= -1.0, 0.0, np.where(t >= 1.0, 1.0, out))


def step_derivative(t, m: int):
    """m-th derivative of the step (m >= 1), zero outside (-1, 1)."""
    if m == 1:
        return bump(t) / BUMP_MASS
    if m == 2:
        return bump_d1(t) / BUMP_MASS
    if m == 3:
        return bump_d2(t) / BUMP_MASS
    raise ValueError(f"step derivatives implemented for m <= 3, got {m}")


def step_antiderivative(t):
    """A(t) = int_{-1}^t step(s) ds; A(t) = A(1) + (t-1) for t >= 1."""
    t = np.asarray(t, dtype=float)
    inner = np.maximum(_hermite_eval(t, _STEP_ANTI, STEP_VALUES), 0.0)
    return np.where(t <= -1.0, 0.0, np.where(t >= 1.0, _STEP_ANTI[-1] + (t - 1.0), inner))
