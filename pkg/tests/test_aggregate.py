"""Clock aggregation, global values, ratio conversions, strategies."""
import math

import numpy as np
import pytest

from mmvlab import (CumulativeUtility, DomainError, InfiniteValue,
                    UtilityKind, compounding_dual, cumulative_local_utility,
                    det_stoch_exponential, example_model, global_values,
                    sharpe_hansen_convert, solve_schedule,
                    strategy_descriptor)

import properties


def test_solution_structure(ex2_sol_mmv):
    assert ex2_sol_mmv.kind is UtilityKind.MMV
    assert len(ex2_sol_mmv.segment_optima) == 1
    assert ex2_sol_mmv.atom_optima == ()
    assert len(ex2_sol_mmv.segment_lambdas()) == 1


def test_single_jump_aggregation_is_exact(ex1):
    cu = cumulative_local_utility(ex1, "mmv")
    assert cu.continuous_part == 0.0
    assert cu.finite
    assert len(cu.atom_increments) == 1
    t, inc = cu.atom_increments[0]
    assert t == 1.0
    assert inc == pytest.approx(0.4, abs=1e-12)
    gv = global_values(cu)
    assert gv.finite
    assert gv.u0 == pytest.approx(0.2, abs=1e-12)
    assert gv.v0 == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert gv.msr2 == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert gv.mhr2 == pytest.approx(0.4, abs=1e-12)
    assert gv.scale == pytest.approx(5.0 / 3.0, abs=1e-12)


def test_diffusive_global_values(ex2, ex2_sol_mv, ex2_sol_mmv):
    gv_mv = global_values(cumulative_local_utility(ex2, "mv",
                                                   solution=ex2_sol_mv))
    assert gv_mv.msr2 == pytest.approx(1.7430070930, abs=1e-6)
    assert gv_mv.mhr2 == pytest.approx(0.6354365971, abs=1e-7)
    gv_mmv = global_values(cumulative_local_utility(ex2, "mmv",
                                                    solution=ex2_sol_mmv))
    assert gv_mmv.msr2 == pytest.approx(1.7481732205, abs=1e-6)
    assert gv_mmv.mhr2 == pytest.approx(0.6361219182, abs=1e-7)
    # the monotone repair can only enlarge the attainable utility
    assert gv_mmv.u0 >= gv_mv.u0


def test_exponential_inversion_identity():
    assert properties.check_exponential_inversion(n_cases=500,
                                                  seed=17) <= 1e-12


def test_compounding_dual_rejects_unit_increment():
    cu = CumulativeUtility(0.0, ((0.5, 1.0),), True)
    with pytest.raises(DomainError):
        compounding_dual(cu)


def test_nonpositive_factor_is_flagged():
    cu = CumulativeUtility(0.2, ((0.3, 1.0), (0.6, 0.5)), True)
    det = det_stoch_exponential(cu, -1.0)
    assert det.nonpositive_factor
    assert det.value == 0.0


def test_divergent_series_yields_the_saturated_values():
    gv = global_values(CumulativeUtility(0.3, (), False))
    assert (gv.u0, gv.mhr2, gv.finite) == (0.5, 1.0, False)
    assert gv.v0 == math.inf and gv.msr2 == math.inf and gv.scale == math.inf


def test_ratio_identity_on_random_clock_sums():
    gen = np.random.default_rng(29)
    for _ in range(200):
        n = int(gen.integers(0, 8))
        incs = tuple((float(t), float(k)) for t, k in
                     zip(np.sort(gen.uniform(0.0, 1.0, size=n)),
                         gen.uniform(0.0, 0.9, size=n)))
        gv = global_values(CumulativeUtility(float(gen.uniform(0.0, 2.0)),
                                             incs, True))
        # compare in the bounded coordinate: mhr2 = 1 - 1/scale is
        # well-conditioned even when the scale is huge
        assert gv.mhr2 == pytest.approx(1.0 - 1.0 / gv.scale, abs=5e-15)
        assert sharpe_hansen_convert(sr2=gv.msr2) \
            == pytest.approx(gv.mhr2, abs=5e-15)


def test_ratio_conversion_roundtrip_and_domain():
    assert properties.check_sr_hr_roundtrip(n_points=1000) <= 1e-14
    with pytest.raises(DomainError):
        sharpe_hansen_convert()
    with pytest.raises(DomainError):
        sharpe_hansen_convert(hr2=0.5, sr2=1.0)
    with pytest.raises(DomainError):
        sharpe_hansen_convert(hr2=1.0)
    with pytest.raises(DomainError):
        sharpe_hansen_convert(hr2=-0.1)
    with pytest.raises(DomainError):
        sharpe_hansen_convert(sr2=math.inf)
    with pytest.raises(DomainError):
        sharpe_hansen_convert(sr2=-1.0)


def test_strategy_descriptor_diffusive(ex2, ex2_sol_mv):
    desc = strategy_descriptor(ex2, "mv", x=0.0, gamma=2.0,
                               solution=ex2_sol_mv)
    assert desc.scale == pytest.approx(2.7430070930, abs=1e-6)
    assert desc.gamma == 2.0
    assert len(desc.lambda_schedule) == 1
    entry = desc.lambda_schedule[0]
    assert entry["type"] == "segment"
    assert entry["lambda"] == pytest.approx([4.484438439009606], abs=1e-6)


def test_strategy_schedule_is_clock_ordered(ex1):
    desc = strategy_descriptor(ex1, "mmv")
    kinds = [e["type"] for e in desc.lambda_schedule]
    assert kinds == ["segment", "atom"]
    assert desc.lambda_schedule[1]["time"] == 1.0


def test_strategy_descriptor_rejects_bad_gamma(ex1):
    with pytest.raises(DomainError):
        strategy_descriptor(ex1, "mmv", gamma=0.0)


def test_strategy_descriptor_requires_finite_dual():
    model = example_model(6, atoms_max=100)
    with pytest.raises(InfiniteValue):
        strategy_descriptor(model, "mv")


def test_unbounded_time_point_raises():
    # a deterministic nonzero-drift segment has unbounded local utility
    from mmvlab import build_model
    model = build_model({
        "horizon": 1.0, "dimension": 1,
        "segments": [{"t_start": 0.0, "t_end": 1.0, "b_kind": "trunc",
                      "b": [0.5], "c": [[0.0]]}],
    })
    with pytest.raises(InfiniteValue):
        cumulative_local_utility(model, "mv")
