"""Young-function machinery: modulars, Luxemburg norms, doubling constants.

The Luxemburg bisection is checked against an independent scalar root-finder
(scipy brentq on the defining modular equation) and against closed forms for
constant fields, where the norm is c * m^(1/p) for Psi = t^p.
"""
import math

import numpy as np
import pytest

from orliczsmooth.fields import PolynomialField, Quadrature, TrigField, integrate
from orliczsmooth.geometry import DyadicSquare
from orliczsmooth.orlicz import (
    BracketingError,
    ModularValue,
    OrliczError,
    doubling_constant_estimate,
    llogl_young,
    luxemburg_norm,
    modular,
    parse_young,
    plog_young,
    power_young,
)

scipy_optimize = pytest.importorskip("scipy.optimize")

UNIT = [DyadicSquare(0, 0, 0)]
QUAD = Quadrature(8)

FAMILIES = [
    power_young(1.0),
    power_young(1.5),
    power_young(3.0),
    plog_young(2.0),
    llogl_young(),
]


class TestYoungFamilies:
    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_zero_monotone_convex(self, psi, rng):
        assert psi(0.0) == 0.0
        t = np.sort(rng.uniform(0.0, 50.0, size=200))
        vals = psi(t)
        assert (np.diff(vals) >= -1e-12).all()
        s, u = rng.uniform(0.0, 50.0, size=(2, 300))
        assert (psi((s + u) / 2) <= (psi(s) + psi(u)) / 2 + 1e-9).all()

    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_psi_over_t_nondecreasing(self, psi, rng):
        t = np.sort(rng.uniform(1e-6, 100.0, size=200))
        ratio = psi(t) / t
        assert (np.diff(ratio) >= -1e-12).all()

    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_density_matches_derivative(self, psi, rng):
        t = rng.uniform(0.1, 20.0, size=100)
        h = 1e-6
        fd = (psi(t + h) - psi(t - h)) / (2 * h)
        assert psi.density(t) == pytest.approx(fd, rel=1e-6)

    def test_power_range_enforced(self):
        with pytest.raises(OrliczError):
            power_young(0.5)
        with pytest.raises(OrliczError):
            power_young(9.0)

    def test_parse_young(self):
        assert parse_young("power:p=1.5").descriptor == "power:p=1.5"
        assert parse_young("plog:p=2").descriptor == "plog:p=2.0"
        assert parse_young("llogl").descriptor == "llogl"
        with pytest.raises(OrliczError):
            parse_young("expo:a=1")


class TestModular:
    def test_zero_field(self):
        psi = power_young(2.0)
        assert modular(lambda x, y: np.zeros_like(x), UNIT, psi, QUAD) == 0.0

    def test_constant_one(self):
        psi = power_young(2.0)
        assert modular(lambda x, y: np.ones_like(x), UNIT, psi, QUAD) == pytest.approx(1.0)

    def test_linear_field_closed_form(self):
        # integral of x^2 over the unit square = 1/3
        psi = power_young(2.0)
        got = modular(lambda x, y: x, UNIT, psi, QUAD)
        assert got == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_modular_value_type(self):
        psi = power_young(2.0)
        m = modular(lambda x, y: x, UNIT, psi, QUAD)
        assert isinstance(m, ModularValue)
        assert m.value == float(m)
        assert m >= 0.0


class TestLuxemburg:
    def test_constant_closed_form(self):
        psi = power_young(1.5)
        region = [DyadicSquare(1, 0, 0)]  # measure 1/4
        c = 0.7
        lam = luxemburg_norm(lambda x, y: np.full_like(x, c), region, psi, QUAD)
        assert lam == pytest.approx(c * 0.25 ** (1 / 1.5), rel=1e-9)

    def test_zero_field(self):
        psi = power_young(2.0)
        assert luxemburg_norm(lambda x, y: np.zeros_like(x), UNIT, psi, QUAD) == 0.0

    def test_llogl_against_brentq(self):
        psi = llogl_young()
        lam = luxemburg_norm(lambda x, y: np.ones_like(x), UNIT, psi, QUAD)
        root = scipy_optimize.brentq(
            lambda L: (1.0 / L) * math.log(math.e + 1.0 / L) - 1.0, 0.1, 10.0,
            xtol=1e-14)
        assert lam == pytest.approx(root, rel=1e-9)

    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_norm_modular_consistency(self, psi):
        f = PolynomialField([[0.3, 1.0], [2.0, -1.5]])
        lam = luxemburg_norm(f, UNIT, psi, QUAD)
        assert lam > 0.0
        assert modular(lambda x, y: f(x, y) / lam, UNIT, psi, QUAD) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_homogeneity(self, psi):
        f = TrigField(2.0, 3.0)
        base = luxemburg_norm(f, UNIT, psi, QUAD)
        for c in (0.2, 5.0, 37.0):
            scaled = luxemburg_norm(lambda x, y: c * f(x, y), UNIT, psi, QUAD)
            assert scaled == pytest.approx(c * base, rel=1e-8)

    def test_bracketing_failure(self):
        psi = power_young(8.0)
        huge = 1e308
        with pytest.raises(BracketingError):
            luxemburg_norm(lambda x, y: np.full_like(x, huge), UNIT, psi, QUAD)


class TestDoubling:
    def test_power_exact(self):
        for p in (1.0, 1.5, 2.0, 4.0):
            est = doubling_constant_estimate(power_young(p))
            assert est == pytest.approx(2.0 ** p, rel=1e-12)

    def test_llogl_in_window_and_matches_dense_oracle(self):
        est = doubling_constant_estimate(llogl_young(), 1e-3, 1e3, samples=4096)
        assert 2.0 < est < 4.0
        t = np.geomspace(1e-4, 1e4, 200001)
        oracle = float(np.max(2.0 * np.log(np.e + 2 * t) / np.log(np.e + t)))
        assert est == pytest.approx(oracle, rel=1e-3)

    def test_bad_range(self):
        with pytest.raises(OrliczError):
            doubling_constant_estimate(llogl_young(), 1.0, 0.5)


class TestJensen:
    @pytest.mark.parametrize("psi", FAMILIES, ids=lambda p: p.descriptor)
    def test_mean_inequality_on_random_unions(self, psi, rng):
        for _ in range(10):
            level = int(rng.integers(2, 4))
            cells = rng.choice((1 << level) ** 2, size=rng.integers(1, 6), replace=False)
            region = [DyadicSquare(level, int(c) % (1 << level), int(c) // (1 << level))
                      for c in cells]
            f = PolynomialField(rng.normal(size=(3, 3)))
            area = sum(q.side ** 2 for q in region)
            mean = integrate(lambda x, y: np.abs(f(x, y)), region, QUAD) / area
            mean_psi = integrate(lambda x, y: psi(np.abs(f(x, y))), region, QUAD) / area
            assert float(psi(mean)) <= mean_psi + 1e-9
