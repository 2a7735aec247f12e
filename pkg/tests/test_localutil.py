"""Utility shapes, their variations, and the no-free-lunch scan."""
import math

import numpy as np
import pytest

from mmvlab import (FiniteAtoms, LocalCharacteristics, build_model,
                    check_instantaneous_no_arbitrage, local_utility, utility,
                    maximize_local_utility)
from mmvlab.localutil import (asymptotic_slope, slope_variation,
                              utility_slope, utility_variation)

import properties


def test_utility_values_and_vectorization():
    u = np.array([0.0, 0.5, 1.0, 2.0, -1.0])
    assert utility("mv", u) == pytest.approx([0.0, 0.375, 0.5, 0.0, -1.5])
    assert utility("mmv", u) == pytest.approx([0.0, 0.375, 0.5, 0.5, -1.5])
    assert utility("mv", 2.0) == pytest.approx(0.0)


def test_utility_slopes():
    u = np.array([0.0, 0.5, 1.0, 2.0])
    assert utility_slope("mv", u) == pytest.approx([1.0, 0.5, 0.0, -1.0])
    # the monotone slope vanishes at bliss, not just beyond it
    assert utility_slope("mmv", u) == pytest.approx([1.0, 0.5, 0.0, 0.0])


def test_monotone_dominates_quadratic_pointwise():
    u = np.linspace(-3.0, 3.0, 601)
    assert np.all(utility("mmv", u) >= utility("mv", u))
    assert np.max(utility("mmv", u)) <= 0.5


def test_local_utility_concavity():
    assert properties.check_concavity(n_triples=1000, seed=11) >= -1e-9


def test_utility_variation_expansion():
    lam = np.array([0.5, -0.25])
    xi = utility_variation(lam, "mmv")
    assert xi.grad0 == pytest.approx(lam)
    assert xi.hess0 == pytest.approx(-np.outer(lam, lam))
    assert xi.kinks == ()                    # kink tracking is 1d only
    one = utility_variation(2.0, "mmv", dim=1)
    assert one.kinks == (0.5,)
    assert utility_variation(0.0, "mmv", dim=1).growth == "bounded"
    assert utility_variation(2.0, "mv", dim=1).growth == "quadratic"


def test_slope_variation_structure():
    assert slope_variation(0.0, "mv", dim=1).growth == "linear"
    xi = slope_variation([0.5, 0.25], "mv", component=1)
    assert xi.grad0 == pytest.approx([0.0, 1.0])
    with pytest.raises(ValueError):
        slope_variation([0.5, 0.25], "mv", component=2)


def test_monotone_value_dominates_quadratic_on_random_laws():
    gen = np.random.default_rng(23)
    for _ in range(40):
        chars = properties.random_atom_chars(gen)
        lam = float(gen.uniform(-2.0, 2.0))
        assert local_utility(lam, chars, "mmv") \
            >= local_utility(lam, chars, "mv") - 1e-12
        v_mv = maximize_local_utility(chars, "mv").value
        v_mmv = maximize_local_utility(chars, "mmv").value
        assert v_mmv >= v_mv - 1e-10


def test_asymptotic_slope_against_diffusion():
    chars = LocalCharacteristics(np.array([0.3]), np.array([[0.1]]), None)
    assert asymptotic_slope(1.0, chars) == -math.inf


def test_asymptotic_slope_against_opposing_jumps():
    law = FiniteAtoms(np.array([[-0.5], [0.2]]), np.array([0.1, 0.2]))
    chars = LocalCharacteristics(np.array([0.3]), np.zeros((1, 1)), law)
    assert asymptotic_slope(1.0, chars) == -math.inf
    assert asymptotic_slope(-1.0, chars) == -math.inf


def test_asymptotic_slope_pure_drift():
    bare = LocalCharacteristics(np.array([0.3]), np.zeros((1, 1)), None)
    assert asymptotic_slope(1.0, bare) == 0.3
    law = FiniteAtoms(np.array([[0.2]]), np.array([0.4]))
    chars = LocalCharacteristics(np.array([0.3]), np.zeros((1, 1)), law)
    # jumps along the ray survive; only the small-jump mean is subtracted
    assert asymptotic_slope(1.0, chars) == pytest.approx(0.22, abs=1e-15)


def test_no_arbitrage_holds_on_the_examples(ex1, ex2, ex3, ex4):
    for model in (ex1, ex2, ex3, ex4):
        report = check_instantaneous_no_arbitrage(model)
        assert report.holds
        assert report.witness_direction is None
        assert report.atom_violations == ()


def test_no_arbitrage_flags_a_pure_drift_segment():
    model = build_model({
        "horizon": 1.0, "dimension": 1,
        "segments": [{"t_start": 0.0, "t_end": 1.0, "b_kind": "trunc",
                      "b": [0.2], "c": [[0.0]]}],
    })
    report = check_instantaneous_no_arbitrage(model)
    assert not report.holds
    assert report.witness_direction == pytest.approx([1.0])
    assert report.witness_time == 0.0
    assert report.methods["segments"] == "exact-signs"


def test_no_arbitrage_flags_a_one_sided_atom():
    model = build_model({
        "horizon": 1.0, "dimension": 1,
        "segments": [{"t_start": 0.0, "t_end": 1.0, "b_kind": "trunc",
                      "b": [0.0], "c": [[0.04]]}],
        "atoms": [{"time": 0.5,
                   "points": [[0.5], [1.0]], "masses": [0.2, 0.3]}],
    })
    report = check_instantaneous_no_arbitrage(model)
    assert not report.holds
    assert report.witness_direction is None      # the segment is clean
    assert len(report.atom_violations) == 1
    t, w = report.atom_violations[0]
    assert t == 0.5
    pts = model.atoms[0].law.points
    assert np.all(pts @ w >= -1e-9)
    assert np.max(pts @ w) > 1e-9
    assert report.methods["atoms"] == "exact-cone"
