"""Young functions, modular integrals, Luxemburg norms, doubling estimates.

The built-in families (t^p, t^p*log(e+t), t*log(e+t)) are all convex,
vanish at zero, and satisfy a doubling bound Psi(2t) <= C*Psi(t); the
non-power families exercise genuinely non-homogeneous behavior, which is why
the Luxemburg norm is computed by bracketing + bisection on the modular
equation rather than by closed form.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .fields import Quadrature, integrate
from .geometry import DyadicSquare


class OrliczError(Exception):
    pass


class BracketingError(OrliczError):
    """Luxemburg bisection could not bracket the unit-modular scale."""


class ModularValue(float):
    """A nonnegative modular integral; behaves as a plain float."""

    @property
    def value(self) -> float:
        return float(self)


class YoungFunction:
    """Convex Psi with Psi(0) = 0, plus its density and doubling metadata."""

    def __init__(self, evaluate: Callable[[np.ndarray], np.ndarray],
                 density: Callable[[np.ndarray], np.ndarray] | None,
                 descriptor: str):
        self._evaluate = evaluate
        self.density = density
        self.descriptor = descriptor

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self._evaluate(t)

    def __repr__(self):
        return f"YoungFunction({self.descriptor!r})"


def power_young(p: float, scale: float = 1.0) -> YoungFunction:
    if not 1.0 <= p <= 8.0:
        raise OrliczError(f"power exponent must lie in [1, 8], got {p}")
    if scale <= 0.0:
        raise OrliczError("scale must be positive")
    desc = f"power:p={p!r}" if scale == 1.0 else f"power:p={p!r},scale={scale!r}"
    return YoungFunction(
        lambda t: (scale * t) ** p,
        lambda t: p * scale * (scale * t) ** (p - 1.0),
        desc,
    )


def plog_young(p: float) -> YoungFunction:
    if not 1.0 <= p <= 8.0:
        raise OrliczError(f"power-log exponent must lie in [1, 8], got {p}")
    e = float(np.e)
    return YoungFunction(
        lambda t: t ** p * np.log(e + t),
        lambda t: p * t ** (p - 1.0) * np.log(e + t) + t ** p / (e + t),
        f"plog:p={p!r}",
    )


def llogl_young() -> YoungFunction:
    e = float(np.e)
    return YoungFunction(
        lambda t: t * np.log(e + t),
        lambda t: np.log(e + t) + t / (e + t),
        "llogl",
    )


def parse_young(spec: str) -> YoungFunction:
    """Config strings: "power:p=1.5", "plog:p=2", "llogl"."""
    family, _, body = spec.strip().partition(":")
    family = family.strip().lower()
    kv: dict[str, str] = {}
    for chunk in body.split(","):
        if chunk:
            key, _, val = chunk.partition("=")
            kv[key.strip()] = val.strip()
    if family == "power":
        return power_young(float(kv.get("p", 2.0)), float(kv.get("scale", 1.0)))
    if family == "plog":
        return plog_young(float(kv.get("p", 2.0)))
    if family == "llogl":
        return llogl_young()
    raise OrliczError(f"unknown Young function family {family!r}")


def modular(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
            region: Iterable[DyadicSquare], psi: YoungFunction,
            quad: Quadrature) -> ModularValue:
    """Integral of Psi(|f|) over the region by per-square tensor quadrature."""
    value = integrate(lambda x, y: psi(np.abs(f(x, y))), region, quad)
    return ModularValue(value)


class _CachedModular:
    """Node values of |f| sampled once; modular(f/lam) for many lam cheaply."""

    def __init__(self, f, region, psi, quad: Quadrature):
        from .fields import region_rects

        rects = region_rects(region)
        if rects.shape[0] == 0:
            self.absvals = np.zeros(0)
            self.weights = np.zeros(0)
        else:
            X, Y, W = quad.rect_nodes(rects)
            vals = np.abs(np.asarray(f(X, Y), dtype=float))
            if vals.shape != X.shape:
                vals = np.broadcast_to(vals, X.shape).copy()
            if not np.isfinite(vals).all():
                raise OrliczError("integrand is not finite at a quadrature node")
            self.absvals = vals
            self.weights = W
        self.psi = psi

    @classmethod
    def from_samples(cls, absvals, weights, psi) -> "_CachedModular":
        obj = cls.__new__(cls)
        obj.absvals = np.asarray(absvals, dtype=float)
        obj.weights = np.asarray(weights, dtype=float)
        if not np.isfinite(obj.absvals).all():
            raise OrliczError("sample values are not finite")
        obj.psi = psi
        return obj

    def at_scale(self, lam: float) -> float:
        if self.absvals.size == 0:
            return 0.0
        with np.errstate(over="ignore"):
            terms = self.psi(self.absvals / lam)
        total = float(self.weights @ terms)
        return np.inf if np.isnan(total) else total

    @property
    def plain(self) -> float:
        if self.absvals.size == 0:
            return 0.0
        with np.errstate(over="ignore"):
            return float(self.weights @ self.psi(self.absvals))


def luxemburg_norm(f, region, psi: YoungFunction, quad: Quadrature,
                   rel_tol: float = 1e-10) -> float:
    """inf { lam > 0 : modular(f/lam) <= 1 } by bracketing + bisection."""
    return _luxemburg_scale(_CachedModular(f, region, psi, quad), rel_tol)


def _luxemburg_scale(cache: _CachedModular, rel_tol: float = 1e-10) -> float:
    if cache.plain == 0.0:
        return 0.0
    lam = 1.0
    g = cache.at_scale(lam)
    if g > 1.0:
        for _ in range(200):
            lam *= 2.0
            if cache.at_scale(lam) <= 1.0:
                lo, hi = lam / 2.0, lam
                break
        else:
            raise BracketingError("no finite scale reaches modular <= 1 after 200 doublings")
    else:
        for _ in range(200):
            lam *= 0.5
            if cache.at_scale(lam) > 1.0:
                lo, hi = lam, lam * 2.0
                break
        else:
            # modular stays <= 1 at every positive scale we can represent
            return 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if cache.at_scale(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def doubling_constant_estimate(psi: YoungFunction, t_min: float = 1e-3,
                               t_max: float = 1e3, samples: int = 2048) -> float:
    """max over a log-spaced grid of Psi(2t)/Psi(t)."""
    if not 0.0 < t_min < t_max:
        raise OrliczError("need 0 < t_min < t_max")
    t = np.geomspace(t_min, t_max, samples)
    return float(np.max(psi(2.0 * t) / psi(t)))
