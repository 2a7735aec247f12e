"""Local utility maximization: pinned optima, flags, grid cross-checks."""
import math

import numpy as np
import pytest

from mmvlab import (LocalCharacteristics, foc_residual, local_utility,
                    maximize_local_utility)

import properties

# frozen independently computed optima for the diffusive lognormal segment
EX2_LAM_MV = 4.484438439009606
EX2_VAL2_MV = 1.0090547978
EX2_LAM_MMV = 4.5142830857
EX3_LAM_MMV = 1.1080932585715102
EX3_VAL2_MMV = 0.6572578891


class TestDiffusiveSegment:
    def test_quadratic_optimum(self, ex2):
        opt = maximize_local_utility(ex2.segments[0].chars, "mv")
        assert opt.boundedness == "interior"
        assert float(opt.lambda_hat[0]) == pytest.approx(EX2_LAM_MV, abs=1e-9)
        assert 2.0 * opt.value == pytest.approx(EX2_VAL2_MV, abs=1e-8)
        assert np.max(np.abs(opt.foc_residual)) <= 1e-8

    def test_monotone_optimum(self, ex2):
        opt = maximize_local_utility(ex2.segments[0].chars, "mmv")
        assert opt.boundedness == "interior"
        assert float(opt.lambda_hat[0]) == pytest.approx(EX2_LAM_MMV,
                                                         abs=1e-6)

    def test_perturbation_certificate(self, ex2):
        chars = ex2.segments[0].chars
        for kind in ("mv", "mmv"):
            opt = maximize_local_utility(chars, kind)
            lam = float(opt.lambda_hat[0])
            for eps in (-1e-3, 1e-3):
                assert local_utility(lam + eps, chars, kind) \
                    <= opt.value + 1e-9


class TestHeavyTails:
    def test_monotone_optimum_has_exact_crossing_identity(self, ex3):
        opt = maximize_local_utility(ex3.segments[0].chars, "mmv")
        assert opt.boundedness == "interior"
        assert float(opt.lambda_hat[0]) == pytest.approx(EX3_LAM_MMV,
                                                         abs=1e-8)
        assert 2.0 * opt.value == pytest.approx(EX3_VAL2_MMV, abs=1e-8)

    def test_quadratic_domain_collapses_to_zero(self, ex3):
        opt = maximize_local_utility(ex3.segments[0].chars, "mv")
        assert float(opt.lambda_hat[0]) == 0.0
        assert opt.value == 0.0
        assert opt.boundedness == "flat_direction"
        assert opt.foc_residual is None

    def test_negative_drift_pins_monotone_at_zero(self, ex4):
        opt = maximize_local_utility(ex4.segments[0].chars, "mmv")
        assert float(opt.lambda_hat[0]) == 0.0
        assert opt.value == 0.0
        assert opt.boundedness == "flat_direction"
        assert float(opt.foc_residual[0]) == pytest.approx(-1.0, abs=1e-8)

    def test_foc_at_zero_is_the_identity_drift(self, ex4):
        chars = ex4.segments[0].chars
        for kind in ("mv", "mmv"):
            assert float(foc_residual([0.0], chars, kind)[0]) \
                == pytest.approx(-1.0, abs=1e-8)


class TestScheduledJump:
    def test_quadratic_optimum_exact(self, ex1):
        opt = maximize_local_utility(ex1.atoms[0].chars, "mv")
        assert opt.boundedness == "interior"
        assert not opt.tie_break_applied
        assert opt.lambda_hat == pytest.approx([105 / 221, 105 / 221],
                                               abs=1e-8)
        assert opt.value == pytest.approx(441 / 2210, abs=1e-12)

    def test_monotone_plateau_resolved_by_minimum_norm(self, ex1):
        # the argmax is a whole segment; the tie-break picks its center
        opt = maximize_local_utility(ex1.atoms[0].chars, "mmv")
        assert opt.tie_break_applied
        assert opt.lambda_hat == pytest.approx([0.5, 0.5], abs=1e-4)
        assert opt.value == pytest.approx(0.2, abs=1e-10)


def test_optimizer_matches_dense_grid():
    assert properties.check_optimizer_vs_grid(n_models=50, seed=13) <= 1e-8


def test_unbounded_ray_is_flagged():
    chars = LocalCharacteristics(np.array([0.5]), np.zeros((1, 1)), None)
    opt = maximize_local_utility(chars, "mv")
    assert opt.boundedness == "unbounded_flagged"
    assert math.isfinite(opt.value)
