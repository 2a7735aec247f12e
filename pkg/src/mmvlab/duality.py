"""Dual-side diagnostics: candidate densities and their sign structure.

The optimal-utility dual candidate is the terminal value of the
exponential of minus the capped optimal gains: nonnegative, mean one,
second moment 1 + msr2.  It can vanish with positive probability (the
cap absorbs at zero once a jump crosses the bliss level) and its
martingale property is certified locally by the same drift whose zero
is the first-order condition of the primal problem.

The plain quadratic kind produces a signed object instead: its density
candidate keeps mean one but may charge negative values.  The mass it
places on either sign is recovered from exponentials of sign-moment
variations of |1 - u|^p type, which also yield the second moment and
cross-checks of the wealth identities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._quad import DEFAULT_QUAD, QuadConfig
from .aggregate import Solution, cumulative_local_utility, global_values, solve_schedule
from .drift import VariationFunction, drift_of_variation
from .errors import InfiniteValue
from .localutil import UtilityKind, _kind
from .model import MarketModel
from .optimize import foc_residual

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class DensityDiagnostics:
    """Analytic moments and pathologies of the dual density candidate.

    sigma_mart_residual holds one tuple per time point (segments in
    schedule order, then scheduled jumps); each entry is the
    componentwise drift of the density-weighted increments, zero for a
    true local martingale.
    """

    mean: float
    second_moment: float
    variance: float
    p_zero: float
    sigma_mart_residual: tuple[tuple[float, ...], ...]
    equivalent: bool
    is_sigma_martingale: bool


@dataclass(frozen=True)
class SignMoments:
    """Exponential moments of the signed density split by sign.

    phi_plus + phi_minus is the p-th absolute moment; their difference
    is the signed one.  p = 0 gives the sign masses themselves.
    """

    p: int
    phi_plus: float
    phi_minus: float


@dataclass(frozen=True)
class MVSignedMeasure:
    """Sign structure of the plain-quadratic dual candidate."""

    mean: float
    variance: float
    negative_mass: float
    is_probability: bool


@dataclass(frozen=True)
class CoincidenceReport:
    """Whether the two preference kinds pick the same strategy and dual."""

    verdict: str                      # "coincide" | "differ" | "not_applicable"
    square_integrable: bool | None
    cap_condition: bool | None        # no jump ever crosses the bliss cap
    max_lambda_gap: float | None
    note: str


def _schedules(model: MarketModel, schedule) -> tuple[list, list]:
    if isinstance(schedule, Solution):
        return list(schedule.segment_lambdas()), list(schedule.atom_lambdas())
    lams = [np.atleast_1d(np.asarray(v, dtype=float)) for v in schedule]
    n_seg = len(model.segments)
    if len(lams) != n_seg + len(model.atoms):
        raise ValueError("schedule length does not match the model's time points")
    return lams[:n_seg], lams[n_seg:]


def sigma_martingale_residual(model: MarketModel, schedule, kind,
                              cfg: QuadConfig = DEFAULT_QUAD) -> tuple[np.ndarray, ...]:
    """Drift of the density-weighted increments at each time point.

    Identical to the first-order-condition gradient at the scheduled
    directions, so a zero residual certifies simultaneously optimality
    of the schedule and the local martingale property of the dual
    candidate.  Raises NonIntegrable when a defining integral diverges.
    """
    kind = _kind(kind)
    seg_lams, atom_lams = _schedules(model, schedule)
    out = [foc_residual(lam, seg.chars, kind, cfg)
           for seg, lam in zip(model.segments, seg_lams)]
    out.extend(foc_residual(lam, atom.chars, kind, cfg)
               for atom, lam in zip(model.atoms, atom_lams))
    return tuple(out)


def zero_density_probability(model: MarketModel, schedule,
                             cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Probability that the dual density candidate hits zero.

    The density is absorbed at zero as soon as some increment crosses
    the cap, so the complement is a survival event: exponential in the
    segment crossing intensities, one factor per scheduled jump.
    """
    seg_lams, atom_lams = _schedules(model, schedule)
    theta = 0.0
    for seg, lam in zip(model.segments, seg_lams):
        jumps = seg.chars.jumps
        if jumps is None:
            continue
        theta += seg.length * jumps.mass_scaled_ge(lam, 1.0, strict=False)
    survival = math.exp(-theta)
    for atom, lam in zip(model.atoms, atom_lams):
        survival *= 1.0 - atom.law.mass_scaled_ge(lam, 1.0, strict=False)
    return 1.0 - survival


def _crossing_free(model: MarketModel, seg_lams, atom_lams, strict: bool) -> bool:
    for seg, lam in zip(model.segments, seg_lams):
        jumps = seg.chars.jumps
        if jumps is None:
            continue
        if jumps.mass_scaled_ge(lam, 1.0, strict) \
                > _MASS_TOL * (1.0 + jumps.total_mass()):
            return False
    for atom, lam in zip(model.atoms, atom_lams):
        if atom.law.mass_scaled_ge(lam, 1.0, strict) \
                > _MASS_TOL * (1.0 + atom.law.total_mass()):
            return False
    return True


def density_diagnostics(model: MarketModel, cfg: QuadConfig = DEFAULT_QUAD,
                        solution: Solution | None = None,
                        residual_tol: float = 1e-8) -> DensityDiagnostics:
    """Moments, zero mass, equivalence and martingale check of the dual.

    Solves the monotone problem if no solution is passed.  Raises
    InfiniteValue when the dual value diverges (no density exists).
    """
    sol = solution if solution is not None else solve_schedule(
        model, UtilityKind.MMV, cfg)
    gv = global_values(cumulative_local_utility(model, sol.kind, cfg, sol))
    if not gv.finite:
        raise InfiniteValue("dual value is infinite; no density candidate exists")
    residuals = sigma_martingale_residual(model, sol, sol.kind, cfg)
    max_resid = max((float(np.abs(r).max()) for r in residuals), default=0.0)
    seg_lams, atom_lams = _schedules(model, sol)
    return DensityDiagnostics(
        mean=1.0,
        second_moment=gv.scale,
        variance=gv.msr2,
        p_zero=zero_density_probability(model, sol, cfg),
        sigma_mart_residual=tuple(tuple(float(v) for v in r) for r in residuals),
        equivalent=_crossing_free(model, seg_lams, atom_lams, strict=False),
        is_sigma_martingale=max_resid <= residual_tol,
    )


_Z_GRAD = {0: 0.0, 1: -1.0, 2: -2.0}
_Z_HESS = {0: 0.0, 1: 0.0, 2: 2.0}
_Z_GROWTH = {0: "bounded", 1: "linear", 2: "quadratic"}


def _zeta(u: np.ndarray, p: int, even: bool) -> np.ndarray:
    """Sign-moment integrand |1-u|^p (even, or split by sign) minus one."""
    u = np.asarray(u, dtype=float)
    at_one = np.abs(u - 1.0) <= 1e-12 * (1.0 + np.abs(u))
    if even:
        if p == 0:
            return np.where(at_one, -1.0, 0.0)
        a = np.abs(1.0 - u)
        core = a if p == 1 else a * a
        return np.where(at_one, -1.0, core - 1.0)
    sign = np.where(u < 1.0, 1.0, -1.0)
    if p == 0:
        core = sign
    elif p == 1:
        core = np.abs(1.0 - u) * sign
    else:
        core = (1.0 - u) * (1.0 - u) * sign
    return np.where(at_one, -1.0, core - 1.0)


def _mellin_variation(lam, p: int, even: bool) -> VariationFunction:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    d = lam.size
    if d == 1:
        l0 = float(lam[0])

        def fn(x):
            return _zeta(l0 * np.asarray(x, dtype=float), p, even)
    else:
        def fn(x):
            return _zeta(np.asarray(x, dtype=float) @ lam, p, even)

    kinks = (1.0 / float(lam[0]),) if d == 1 and lam[0] != 0.0 else ()
    return VariationFunction(fn=fn, grad0=_Z_GRAD[p] * lam,
                             hess0=_Z_HESS[p] * np.outer(lam, lam),
                             growth=_Z_GROWTH[p], kinks=kinks)


def mellin_sign_moments(model: MarketModel, schedule, p: int,
                        cfg: QuadConfig = DEFAULT_QUAD) -> SignMoments:
    """Sign-split p-th moment of the signed dual density, p in {0, 1, 2}.

    Each half is a combination of two exponentials: drifts of the
    sign-moment variations accumulate over segments, one exact factor
    per scheduled jump.
    """
    if p not in (0, 1, 2):
        raise ValueError("moment order p must be 0, 1 or 2")
    seg_lams, atom_lams = _schedules(model, schedule)
    exps = []
    for even in (True, False):
        acc = 0.0
        for seg, lam in zip(model.segments, seg_lams):
            acc += seg.length * drift_of_variation(
                _mellin_variation(lam, p, even), seg.chars, cfg)
        factor = math.exp(acc)
        for atom, lam in zip(model.atoms, atom_lams):
            xi = _mellin_variation(lam, p, even)
            factor *= 1.0 + atom.law.integrate(xi.fn, xi.kinks, cfg)
        exps.append(factor)
    return SignMoments(p=p, phi_plus=0.5 * (exps[0] + exps[1]),
                       phi_minus=0.5 * (exps[0] - exps[1]))


def mv_signed_measure(model: MarketModel,
                      cfg: QuadConfig = DEFAULT_QUAD) -> MVSignedMeasure:
    """Sign structure of the plain-quadratic dual candidate.

    Raises InfiniteValue when the quadratic dual value diverges, in
    which case no separating object of this kind exists at all.
    """
    sol = solve_schedule(model, UtilityKind.MV, cfg)
    gv = global_values(cumulative_local_utility(model, UtilityKind.MV, cfg, sol))
    if not gv.finite:
        raise InfiniteValue(
            "quadratic dual value is infinite; no separating measure exists")
    sm0 = mellin_sign_moments(model, sol, 0, cfg)
    seg_lams, atom_lams = _schedules(model, sol)
    return MVSignedMeasure(
        mean=1.0,
        variance=gv.msr2,
        negative_mass=sm0.phi_minus,
        is_probability=_crossing_free(model, seg_lams, atom_lams, strict=True),
    )


def _square_integrable(model: MarketModel) -> bool | None:
    """Second moments of all increments finite?  None when undecidable."""
    known = True
    for chars in [seg.chars for seg in model.segments] \
            + [atom.chars for atom in model.atoms]:
        jumps = chars.jumps
        if jumps is None:
            continue
        for side in (-1, +1):
            order = jumps.moment_sup_order(side)
            if math.isnan(order):
                known = False
            elif order <= 2.0:
                return False
    return True if known else None


def compare_mv_mmv(model: MarketModel,
                   cfg: QuadConfig = DEFAULT_QUAD) -> CoincidenceReport:
    """Do the monotone and plain kinds share strategy and dual measure?

    Needs square-integrable increments and a finite monotone dual
    value; otherwise the equivalence theory does not apply and the
    verdict is not_applicable.  The authoritative test is the cap
    condition: no jump may cross the bliss level under the quadratic
    optimum.  The direction gap between the two optima is reported as a
    cross-check and any disagreement is noted.
    """
    sq = _square_integrable(model)
    if sq is None:
        return CoincidenceReport("not_applicable", None, None, None,
                                 "jump tail decay unknown; cannot certify "
                                 "square integrability")
    if not sq:
        return CoincidenceReport("not_applicable", False, None, None,
                                 "increments are not square integrable; the "
                                 "equivalence theory does not apply")
    sol_mmv = solve_schedule(model, UtilityKind.MMV, cfg)
    gv_mmv = global_values(cumulative_local_utility(
        model, UtilityKind.MMV, cfg, sol_mmv))
    if not gv_mmv.finite:
        return CoincidenceReport("not_applicable", True, None, None,
                                 "monotone dual value is infinite")
    sol_mv = solve_schedule(model, UtilityKind.MV, cfg)
    seg_mv, atom_mv = _schedules(model, sol_mv)
    cap_ok = _crossing_free(model, seg_mv, atom_mv, strict=True)
    gaps = [float(np.abs(a.lambda_hat - b.lambda_hat).max())
            / (1.0 + float(np.abs(b.lambda_hat).max()))
            for a, b in zip((*sol_mmv.segment_optima, *sol_mmv.atom_optima),
                            (*sol_mv.segment_optima, *sol_mv.atom_optima))]
    max_gap = max(gaps, default=0.0)
    directions_agree = max_gap <= 1e-6
    verdict = "coincide" if cap_ok else "differ"
    note = ""
    if cap_ok != directions_agree:
        note = ("cap condition and direction gap disagree; the cap condition "
                "is authoritative")
    return CoincidenceReport(verdict, True, cap_ok, max_gap, note)
