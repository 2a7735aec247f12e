"""Dual density diagnostics, sign moments, and kind-coincidence verdicts."""
import math

import numpy as np
import pytest

from mmvlab import (InfiniteValue, capped_variant, compare_mv_mmv,
                    cumulative_local_utility, density_diagnostics,
                    example_model, global_values, mellin_sign_moments,
                    mv_signed_measure, sigma_martingale_residual,
                    solve_schedule, zero_density_probability)

EX2_LAM_MV = 4.484438439009606


class TestResiduals:
    def test_optimal_schedule_is_a_sigma_martingale(self, ex2, ex2_sol_mv):
        res = sigma_martingale_residual(ex2, ex2_sol_mv, "mv")
        assert len(res) == 1
        assert float(np.abs(res[0]).max()) <= 1e-8

    def test_residual_accepts_raw_schedules(self, ex2):
        got = sigma_martingale_residual(ex2, [[EX2_LAM_MV]], "mv")
        assert float(np.abs(got[0]).max()) <= 1e-6

    def test_schedule_length_mismatch(self, ex2):
        with pytest.raises(ValueError):
            sigma_martingale_residual(ex2, [[1.0], [2.0]], "mv")


class TestZeroMass:
    def test_diffusive_crossing_probability(self, ex2, ex2_sol_mmv):
        p = zero_density_probability(ex2, ex2_sol_mmv)
        assert p == pytest.approx(0.0224430699, abs=1e-7)

    def test_heavy_tail_crossing_identity(self, ex3):
        sol = solve_schedule(ex3, "mmv")
        lam = float(sol.segment_optima[0].lambda_hat[0])
        theta = ex3.segments[0].chars.jumps.mass_scaled_ge(lam, 1.0)
        # the image law turns the bliss crossing into lam/(1+lam) exactly
        assert theta == pytest.approx(lam / (1.0 + lam), abs=1e-12)
        p = zero_density_probability(ex3, sol)
        assert p == pytest.approx(-math.expm1(-theta), abs=1e-12)
        assert p == pytest.approx(0.4088217409, abs=1e-7)

    def test_scheduled_jump_crossing_is_exact(self, ex1):
        sol = solve_schedule(ex1, "mmv")
        assert zero_density_probability(ex1, sol) \
            == pytest.approx(0.2, abs=1e-10)


class TestSignMoments:
    def test_pinned_values(self, ex2, ex2_sol_mv):
        sm0 = mellin_sign_moments(ex2, ex2_sol_mv, 0)
        assert sm0.phi_minus == pytest.approx(0.0215771468, abs=1e-6)
        sm1 = mellin_sign_moments(ex2, ex2_sol_mv, 1)
        assert sm1.phi_plus == pytest.approx(0.3662679769, abs=1e-6)
        assert sm1.phi_minus == pytest.approx(0.0017045740, abs=1e-6)
        sm2 = mellin_sign_moments(ex2, ex2_sol_mv, 2)
        assert sm2.phi_plus == pytest.approx(0.3638944177, abs=1e-6)
        assert sm2.phi_minus == pytest.approx(0.0006689852, abs=1e-6)

    def test_moment_identities_at_the_optimum(self, ex2, ex2_sol_mv):
        # stationarity makes the signed first moment of the gap equal
        # its even second moment, and one minus either is the squared
        # Hansen ratio computed on the primal side
        sm1 = mellin_sign_moments(ex2, ex2_sol_mv, 1)
        sm2 = mellin_sign_moments(ex2, ex2_sol_mv, 2)
        signed_gap = sm1.phi_plus - sm1.phi_minus
        assert signed_gap == pytest.approx(sm2.phi_plus + sm2.phi_minus,
                                           abs=1e-10)
        gv = global_values(cumulative_local_utility(ex2, "mv",
                                                    solution=ex2_sol_mv))
        assert 1.0 - signed_gap == pytest.approx(gv.mhr2, abs=5e-9)

    def test_order_out_of_range(self, ex2, ex2_sol_mv):
        with pytest.raises(ValueError):
            mellin_sign_moments(ex2, ex2_sol_mv, 3)


class TestSignedMeasure:
    def test_diffusive(self, ex2):
        sm = mv_signed_measure(ex2)
        assert sm.mean == 1.0
        assert sm.variance == pytest.approx(1.7430070930, abs=1e-6)
        assert sm.negative_mass == pytest.approx(0.0215771468, abs=1e-6)
        assert not sm.is_probability

    def test_scheduled_jump_exact(self, ex1):
        sm = mv_signed_measure(ex1)
        assert sm.variance == pytest.approx(441.0 / 664.0, abs=1e-12)
        assert sm.negative_mass == pytest.approx(0.2, abs=1e-12)
        assert not sm.is_probability

    def test_divergent_series_raises(self):
        with pytest.raises(InfiniteValue):
            mv_signed_measure(example_model(6, atoms_max=80))


class TestDensityDiagnostics:
    def test_diffusive(self, ex2, ex2_sol_mmv):
        d = density_diagnostics(ex2, solution=ex2_sol_mmv)
        assert d.mean == 1.0
        assert d.second_moment == pytest.approx(2.7481732205, abs=1e-6)
        assert d.variance == pytest.approx(1.7481732205, abs=1e-6)
        assert d.p_zero == pytest.approx(0.0224430699, abs=1e-7)
        assert len(d.sigma_mart_residual) == 1
        assert abs(d.sigma_mart_residual[0][0]) <= 1e-8
        assert not d.equivalent          # Gaussian jumps always cross
        assert d.is_sigma_martingale

    def test_degenerate_optimum_is_not_a_martingale(self, ex4):
        d = density_diagnostics(ex4)
        assert (d.mean, d.second_moment, d.variance) == (1.0, 1.0, 0.0)
        assert d.p_zero == 0.0
        assert d.equivalent
        assert d.sigma_mart_residual[0][0] == pytest.approx(-1.0, abs=1e-8)
        assert not d.is_sigma_martingale
        # the verdict is tolerance-dependent by design
        assert density_diagnostics(ex4, residual_tol=2.0).is_sigma_martingale

    def test_scheduled_jump(self, ex1):
        d = density_diagnostics(ex1)
        assert d.variance == pytest.approx(2.0 / 3.0, abs=1e-10)
        assert d.p_zero == pytest.approx(0.2, abs=1e-10)
        assert len(d.sigma_mart_residual) == 2
        assert not d.equivalent
        assert d.is_sigma_martingale


class TestCoincidence:
    def test_scheduled_jump_differs(self, ex1):
        rep = compare_mv_mmv(ex1)
        assert rep.verdict == "differ"
        assert rep.square_integrable is True
        assert rep.cap_condition is False
        assert rep.max_lambda_gap > 1e-2

    def test_diffusive_differs(self, ex2):
        rep = compare_mv_mmv(ex2)
        assert rep.verdict == "differ"
        assert rep.cap_condition is False

    def test_small_cap_forces_coincidence(self, ex2):
        rep = compare_mv_mmv(capped_variant(ex2, 0.1))
        assert rep.verdict == "coincide"
        assert rep.cap_condition is True
        assert rep.max_lambda_gap == 0.0

    def test_cap_at_the_bliss_level_still_differs(self, ex2):
        rep = compare_mv_mmv(capped_variant(ex2, 1.0 / EX2_LAM_MV))
        assert rep.verdict == "differ"

    def test_heavy_tails_not_applicable(self, ex3, ex4):
        for model in (ex3, ex4):
            rep = compare_mv_mmv(model)
            assert rep.verdict == "not_applicable"
            assert rep.square_integrable is False
            assert rep.cap_condition is None
            assert rep.max_lambda_gap is None
            assert "square integrable" in rep.note

    def test_divergent_series_not_applicable(self):
        rep = compare_mv_mmv(example_model(6, atoms_max=100))
        assert rep.verdict == "not_applicable"
        assert rep.square_integrable is True
        assert "infinite" in rep.note
