"""Jump-measure families: closed-form moments, tail masses, transforms."""
import math

import numpy as np
import pytest

from mmvlab import (ExpTails1D, FiniteAtoms, Gaussian1D, InvariantError,
                    TabulatedDensity1D, UnsupportedMeasure, merge_atoms)
from mmvlab.measures import CappedMeasure, ExpYieldMeasure


def ident(x):
    return np.asarray(x, dtype=float)


def square(x):
    x = np.asarray(x, dtype=float)
    return x * x


class TestFiniteAtoms:
    LAW = FiniteAtoms(np.array([[-0.5], [0.25], [1.0]]),
                      np.array([0.2, 0.5, 0.3]))

    def test_integrate_is_exact(self):
        want = 0.2 * 0.25 + 0.5 * 0.0625 + 0.3 * 1.0
        assert self.LAW.integrate(square) == pytest.approx(want, abs=1e-16)

    def test_mass_scaled_ge_boundary(self):
        # the point 0.25 sits exactly on the level 1 boundary at lam = 4
        assert self.LAW.mass_scaled_ge(4.0, 1.0) == pytest.approx(0.8)
        assert self.LAW.mass_scaled_ge(4.0, 1.0, strict=True) \
            == pytest.approx(0.3)
        assert self.LAW.mass_scaled_ge(-1.0, 0.4) == pytest.approx(0.2)

    def test_zero_direction_sees_the_origin(self):
        assert self.LAW.mass_scaled_ge(0.0, 1.0) == 0.0
        assert self.LAW.mass_scaled_ge(0.0, -1.0) == pytest.approx(1.0)

    def test_bounds_and_scale(self):
        assert self.LAW.effective_bounds() == (-0.5, 1.0)
        assert self.LAW.support_scale() == 1.0
        assert self.LAW.moment_sup_order(1) == math.inf

    def test_validation(self):
        with pytest.raises(InvariantError):
            FiniteAtoms(np.array([[0.1], [0.2]]), np.array([0.1]))
        with pytest.raises(InvariantError):
            FiniteAtoms(np.array([[0.1]]), np.array([-0.1]))

    def test_two_dimensional_direction(self):
        law = FiniteAtoms(np.array([[1.0, 0.0], [0.0, 1.0]]),
                          np.array([0.3, 0.4]))
        assert law.mass_scaled_ge([1.0, 0.0], 0.5) == pytest.approx(0.3)
        with pytest.raises(UnsupportedMeasure):
            law.effective_bounds()

    def test_sample_frequencies(self, rng):
        draws = self.LAW.sample(rng, 20000)
        freq = np.mean(np.isclose(draws, 1.0))
        assert freq == pytest.approx(0.3, abs=4 * math.sqrt(0.21 / 20000))


class TestGaussian:
    G = Gaussian1D(mean=0.1, variance=0.04, rate=0.7)

    def test_moments(self):
        assert self.G.total_mass() == 0.7
        assert self.G.integrate(ident) == pytest.approx(0.07, abs=1e-12)
        want = 0.7 * (0.04 + 0.01)
        assert self.G.integrate(square) == pytest.approx(want, abs=1e-12)

    def test_tail_mass_matches_erf(self):
        t = 0.3
        z = (t - 0.1) / 0.2
        want = 0.7 * 0.5 * math.erfc(z / math.sqrt(2.0))
        assert self.G.mass_scaled_ge(1.0, t) == pytest.approx(want, abs=1e-14)
        assert self.G.mass_scaled_ge(-1.0, -t) \
            == pytest.approx(0.7 - want, abs=1e-14)

    def test_breakpoints_do_not_change_the_integral(self):
        plain = self.G.integrate(square)
        split = self.G.integrate(square, breakpoints=(-0.2, 0.0, 0.3))
        assert split == pytest.approx(plain, abs=1e-11)

    def test_validation(self):
        with pytest.raises(InvariantError):
            Gaussian1D(0.0, 0.0, 1.0)
        with pytest.raises(InvariantError):
            Gaussian1D(0.0, 1.0, -1.0)

    def test_zero_rate_integrates_to_zero(self):
        assert Gaussian1D(0.0, 1.0, 0.0).integrate(square) == 0.0


class TestExpTails:
    # density 1.5 e^{4x} on x < 0 plus 0.5 e^{-2x} on x > 0
    M = ExpTails1D(c_minus=1.5, a=4.0, c_plus=0.5, b=2.0)

    def test_closed_form_moments(self):
        assert self.M.total_mass() == pytest.approx(1.5 / 4 + 0.5 / 2,
                                                    abs=1e-14)
        mean = 0.5 / 4 - 1.5 / 16
        assert self.M.integrate(ident) == pytest.approx(mean, abs=1e-12)
        second = 2 * 0.5 / 8 + 2 * 1.5 / 64
        assert self.M.integrate(square) == pytest.approx(second, abs=1e-12)

    def test_tail_mass(self):
        want = 0.25 * math.exp(-2.0 * 0.7)
        assert self.M.mass_scaled_ge(1.0, 0.7) == pytest.approx(want,
                                                                abs=1e-14)
        want_left = 0.375 * math.exp(-4.0 * 0.3)
        assert self.M.mass_scaled_ge(-1.0, 0.3) == pytest.approx(want_left,
                                                                 abs=1e-14)

    def test_all_polynomial_moments_exist(self):
        assert self.M.moment_sup_order(1) == math.inf
        assert self.M.moment_sup_order(-1) == math.inf

    def test_validation(self):
        with pytest.raises(InvariantError):
            ExpTails1D(1.0, 0.0, 1.0, 1.0)
        with pytest.raises(InvariantError):
            ExpTails1D(-1.0, 1.0, 1.0, 1.0)


class TestTabulated:
    T = TabulatedDensity1D(np.linspace(-1.0, 1.0, 201),
                           np.full(201, 0.5))

    def test_uniform_density_mass_and_mean(self):
        assert self.T.total_mass() == pytest.approx(1.0, abs=1e-12)
        assert self.T.integrate(ident) == pytest.approx(0.0, abs=1e-12)
        assert self.T.integrate(square) == pytest.approx(1.0 / 3.0, abs=1e-4)

    def test_tail_mass_inserts_the_threshold(self):
        # 0.3 is off the grid; exact mass of [0.3, 1] under density 1/2
        assert self.T.mass_scaled_ge(1.0, 0.3) == pytest.approx(0.35,
                                                                abs=1e-12)

    def test_validation(self):
        with pytest.raises(InvariantError):
            TabulatedDensity1D(np.array([0.0, 0.0, 1.0]), np.ones(3))
        with pytest.raises(InvariantError):
            TabulatedDensity1D(np.array([0.0, 1.0]), np.array([1.0, -1.0]))
        with pytest.raises(UnsupportedMeasure):
            TabulatedDensity1D(np.array([0.0, 1.0]), np.ones(2),
                               quadrature="simpson")

    def test_sample_within_bounds(self, rng):
        draws = self.T.sample(rng, 1000)
        assert np.all(draws >= -1.0) and np.all(draws <= 1.0)


class TestExpYield:
    BASE = ExpTails1D(c_minus=1.0, a=4.0, c_plus=1.0, b=1.0)
    Y = ExpYieldMeasure(BASE)

    def test_mass_preserved(self):
        assert self.Y.total_mass() == pytest.approx(self.BASE.total_mass(),
                                                    abs=1e-14)

    def test_tail_mass_is_the_log_level(self):
        lam = 1.1080932585715102
        want = self.BASE.mass_scaled_ge(1.0, math.log1p(1.0 / lam))
        assert self.Y.mass_scaled_ge(lam, 1.0) == pytest.approx(want,
                                                                abs=1e-14)
        # unit tail coefficient and rate make this exactly lam/(1+lam)
        assert self.Y.mass_scaled_ge(lam, 1.0) \
            == pytest.approx(lam / (1.0 + lam), abs=1e-14)

    def test_whole_support_below_minus_one(self):
        assert self.Y.mass_scaled_ge(1.0, -2.0) \
            == pytest.approx(self.Y.total_mass(), abs=1e-14)
        assert self.Y.mass_scaled_ge(-1.0, 2.0) == 0.0

    def test_moment_orders(self):
        assert self.Y.moment_sup_order(-1) == math.inf
        assert self.Y.moment_sup_order(1) == 1.0
        g = ExpYieldMeasure(Gaussian1D(0.0, 0.01, 1.0))
        assert g.moment_sup_order(1) == math.inf

    def test_capped_mean_closed_form(self):
        # E[min(e^X - 1, 1)] with tails e^{4x} / e^{-x}:
        # left integral -1/20, right log(2) - 1/2 below the kink, 1/2 above
        got = self.Y.integrate(lambda y: np.minimum(y, 1.0),
                               breakpoints=(1.0,))
        assert got == pytest.approx(math.log(2.0) - 0.05, abs=1e-9)


class TestCapped:
    BASE = Gaussian1D(mean=0.0, variance=1.0, rate=1.0)
    C = CappedMeasure(BASE, cap=0.5)

    def test_mass_preserved_and_no_mass_above_cap(self):
        assert self.C.total_mass() == 1.0
        assert self.C.mass_scaled_ge(1.0, 0.6) == 0.0
        assert self.C.mass_scaled_ge(1.0, 0.5, strict=True) == 0.0
        # everything at or above the cap collapses onto it
        want = self.BASE.mass_scaled_ge(1.0, 0.5)
        assert self.C.mass_scaled_ge(1.0, 0.5) == pytest.approx(want,
                                                                abs=1e-14)

    def test_first_moment(self):
        # E[min(Z, c)] = -(phi(c) - c (1 - Phi(c))) for a standard normal
        c = 0.5
        phi = math.exp(-c * c / 2.0) / math.sqrt(2.0 * math.pi)
        upper = 0.5 * math.erfc(c / math.sqrt(2.0))
        want = -(phi - c * upper)
        assert self.C.integrate(ident) == pytest.approx(want, abs=1e-9)

    def test_moment_orders(self):
        assert self.C.moment_sup_order(1) == math.inf
        assert self.C.moment_sup_order(-1) \
            == self.BASE.moment_sup_order(-1)

    def test_sample_respects_cap(self, rng):
        draws = self.C.sample(rng, 2000)
        assert np.max(draws) <= 0.5


def test_merge_atoms_combines_exact_duplicates():
    merged = merge_atoms(np.array([[0.25], [0.25], [1.0], [0.5]]),
                         np.array([0.1, 0.2, 0.0, 0.3]))
    rows = sorted((float(p[0]), float(m))
                  for p, m in zip(merged.points, merged.masses))
    assert len(rows) == 2
    assert rows[0][0] == 0.25
    assert rows[0][1] == pytest.approx(0.3, abs=1e-15)
    assert rows[1] == (0.5, 0.3)
