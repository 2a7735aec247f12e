"""Maximization of the local utility over position directions.

The map lam -> local utility is concave, equals 0 at lam = 0, and may
be -inf outside a convex domain when the jump tails are too heavy for
the quadratic penalty.  The search therefore starts by restricting to
the directions whose tail moments support a finite value, classifies
rays by their asymptotic slope (a positive slope means the value is
unbounded and is only flagged, never chased), and then runs
derivative-free golden-section refinement: directly in one dimension,
coordinate sweeps plus a gradient polish in several.

Optima need not be unique: the monotone utility is flat beyond its
bliss level, so whole segments of directions can attain the maximum.
Ties are resolved toward the minimum-norm maximizer, first along the
segment between the two sweep orders' results, then along the ray to
the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._quad import DEFAULT_QUAD, QuadConfig
from .drift import drift_of_variation
from .errors import NonIntegrable, OptimizationError, QuadratureError
from .localutil import (UtilityKind, _kind, asymptotic_slope, slope_variation,
                        utility_variation)
from .measures import FiniteAtoms
from .model import LocalCharacteristics

_INVPHI = 0.6180339887498949
_FOC_TOL = 1e-8
_MAX_DIM = 4


@dataclass(frozen=True)
class LocalOptimum:
    """Maximizer of the local utility at one time point.

    boundedness is "interior" for a stationary maximum, "flat_direction"
    when the maximizer is pinned by the finiteness domain or a null or
    flat model direction (the first-order residual need not vanish
    there), and "unbounded_flagged" when some ray has positive
    asymptotic slope, in which case lambda_hat is only the best point
    the capped search visited.
    """

    lambda_hat: np.ndarray
    value: float
    foc_residual: np.ndarray | None
    boundedness: str
    tie_break_applied: bool = False


def foc_residual(lam, chars: LocalCharacteristics, kind,
                 cfg: QuadConfig = DEFAULT_QUAD) -> np.ndarray:
    """Gradient of the local utility: drift of x_i g'(lam . x) per component."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.empty(chars.dim)
    for i in range(chars.dim):
        out[i] = drift_of_variation(slope_variation(lam, kind, i, chars.dim),
                                    chars, cfg)
    return out


def _try_foc(lam, chars, kind, cfg) -> np.ndarray | None:
    try:
        res = foc_residual(lam, chars, kind, cfg)
    except (NonIntegrable, QuadratureError):
        return None
    return res if np.all(np.isfinite(res)) else None


def _objective(chars: LocalCharacteristics, kind, cfg):
    """Scalar objective for d = 1, plain closure on finite atoms for speed."""
    kind = _kind(kind)
    jumps = chars.jumps
    b = float(chars.b_trunc[0])
    cc = float(chars.cov[0, 0])
    if isinstance(jumps, FiniteAtoms):
        xs = [float(x) for x in jumps.points[:, 0]]
        ms = [float(m) for m in jumps.masses]
        hs = [x if abs(x) <= 1.0 else 0.0 for x in xs]
        terms = list(zip(xs, ms, hs))
        if kind is UtilityKind.MMV:
            def f(lam: float) -> float:
                s = b * lam - 0.5 * cc * lam * lam
                for x, m, h in terms:
                    u = lam * x
                    s += m * ((u - 0.5 * u * u if u < 1.0 else 0.5) - lam * h)
                return s
        else:
            def f(lam: float) -> float:
                s = b * lam - 0.5 * cc * lam * lam
                for x, m, h in terms:
                    u = lam * x
                    s += m * (u - 0.5 * u * u - lam * h)
                return s
        return f

    def f(lam: float) -> float:
        return drift_of_variation(utility_variation([lam], kind, 1), chars, cfg)

    return f


def _foc_closure(chars: LocalCharacteristics, kind):
    """Exact scalar gradient for d = 1 finite-atom laws, or None."""
    kind = _kind(kind)
    jumps = chars.jumps
    if jumps is not None and not isinstance(jumps, FiniteAtoms):
        return None
    b = float(chars.b_trunc[0])
    cc = float(chars.cov[0, 0])
    if jumps is None:
        terms = []
    else:
        xs = [float(x) for x in jumps.points[:, 0]]
        ms = [float(m) for m in jumps.masses]
        hs = [x if abs(x) <= 1.0 else 0.0 for x in xs]
        terms = list(zip(xs, ms, hs))
    mmv = kind is UtilityKind.MMV

    def foc(lam: float) -> float:
        s = b - cc * lam
        for x, m, h in terms:
            u = lam * x
            gp = (1.0 - u) if (u < 1.0 or not mmv) else 0.0
            s += m * (x * gp - h)
        return s

    return foc


def _golden_max(f, a: float, b: float) -> tuple[float, float]:
    """Golden-section maximum of a concave f on [a, b].

    Stops when the interval is below 1e-10 relative width or the best
    value stalls at the 1e-14 level.  Ties between -inf probes are
    broken toward the origin, where the value is finite by definition.
    """
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best = max(fc, fd)
    stall = 0
    for _ in range(400):
        if (b - a) <= 1e-10 * (1.0 + max(abs(a), abs(b))):
            break
        if fc == fd and fc == -math.inf:
            left = d <= 0.0   # finite region (which holds 0) lies rightward
        else:
            left = fc >= fd
        if left:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        now = max(fc, fd)
        if abs(now - best) <= 1e-14 * (1.0 + abs(now)):
            stall += 1
            if stall >= 12:
                break
        else:
            stall = 0
        if now > best:
            best = now
    return (c, fc) if fc >= fd else (d, fd)


def _expand(f, width: float, allow_neg: bool, allow_pos: bool,
            max_steps: int = 40) -> tuple[float, float, bool]:
    """Grow [lo, hi] around 0 by factors of 4 until the ends stop improving."""
    hit_cap = False
    lo = -width if allow_neg else 0.0
    hi = width if allow_pos else 0.0
    for sign in (-1.0, 1.0):
        if sign < 0 and not allow_neg:
            continue
        if sign > 0 and not allow_pos:
            continue
        end = sign * width
        fend = f(end)
        steps = 0
        while steps < max_steps:
            new = 4.0 * end
            fnew = f(new)
            end = new
            if not (fnew > fend + 1e-14 * (1.0 + abs(fend))):
                break
            fend = fnew
            steps += 1
        if steps >= max_steps:
            hit_cap = True
        if sign < 0:
            lo = end
        else:
            hi = end
    return lo, hi, hit_cap


def _ray_shrink(f, lam: np.ndarray, val: float) -> tuple[np.ndarray, float, bool]:
    """Pull the maximizer toward the origin through any flat plateau.

    Finds the smallest t with f(t lam) within 1e-13 of the maximum.  A
    capped objective is exactly constant over a macroscopic stretch of
    the ray, while around a strict maximum the tolerance band has width
    sqrt(noise/curvature), which can reach 1e-5 of the ray under
    quadrature noise.  Only shrinks spanning more than 1% of the ray
    are treated as real plateaus; anything narrower keeps the polished
    point.
    """
    if not np.any(lam) or not math.isfinite(val):
        return lam, val, False
    eps = 1e-13 * (1.0 + abs(val))

    def ok(t: float) -> bool:
        return f(t * lam if lam.size > 1 else float(t * lam[0])) >= val - eps

    if ok(0.0):
        return np.zeros_like(lam), 0.0, True
    t_lo, t_hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        if ok(mid):
            t_hi = mid
        else:
            t_lo = mid
    if t_hi >= 1.0 - 1e-2:
        return lam, val, False
    new = t_hi * lam
    new_val = f(new if lam.size > 1 else float(new[0]))
    return new, float(new_val), True


def _secant_polish(obj, foc, x: float, lo: float, hi: float) -> float:
    """Sharpen a 1-d stationary point by secant iteration on the gradient."""
    x0 = x
    f0 = foc(x0)
    if f0 is None:
        return x
    x1 = x0 + 1e-6 * (1.0 + abs(x0))
    if x1 > hi:
        x1 = x0 - 1e-6 * (1.0 + abs(x0))
    f1 = foc(x1)
    if f1 is None:
        return x
    for _ in range(8):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not math.isfinite(x2) or x2 < lo or x2 > hi \
                or abs(x2 - x1) > 0.5 * (1.0 + abs(x1)):
            break
        x0, f0 = x1, f1
        x1 = x2
        f1 = foc(x1)
        if f1 is None:
            return x0
        if abs(f1) <= 1e-15:
            break
    better = x1 if abs(f1) <= abs(f0) else x0
    # Quadrature-backed objectives carry relative noise around rtol, so
    # a polished point may look slightly worse than the incumbent even
    # when its gradient is orders of magnitude smaller.
    return better if obj(better) >= obj(x) - 1e-9 * (1.0 + abs(obj(x))) else x


def _maximize_1d(chars: LocalCharacteristics, kind, cfg) -> LocalOptimum:
    kind = _kind(kind)
    jumps = chars.jumps
    if jumps is None:
        orders = (math.inf, math.inf)
        total = 0.0
    else:
        orders = (jumps.moment_sup_order(-1), jumps.moment_sup_order(+1))
        total = jumps.total_mass()

    def heavy_ok(order: float) -> bool:
        return math.isnan(order) or order > 2.0

    if kind is UtilityKind.MV:
        allow_pos = allow_neg = heavy_ok(orders[0]) and heavy_ok(orders[1])
    else:
        allow_pos = heavy_ok(orders[0])   # losses come from the left tail
        allow_neg = heavy_ok(orders[1])

    def finish(lam, val, foc_at, flag, tie):
        res = _try_foc([lam], chars, kind, cfg) if foc_at else None
        if flag is None:
            if res is not None and float(np.abs(res).max()) <= _FOC_TOL:
                flag = "interior"
            else:
                flag = "flat_direction"
        return LocalOptimum(np.array([lam]), float(val), res, flag, tie)

    if not (allow_pos or allow_neg):
        return finish(0.0, 0.0, True, "flat_direction", False)

    tol_m = 1e-13 * (1.0 + total)
    mass_pos = jumps.mass_scaled_ge(np.array([1.0]), 0.0, strict=True) \
        if jumps is not None else 0.0
    mass_neg = jumps.mass_scaled_ge(np.array([-1.0]), 0.0, strict=True) \
        if jumps is not None else 0.0
    cc = float(chars.cov[0, 0])
    if cc <= 0.0 and mass_pos <= tol_m and mass_neg <= tol_m:
        # no risk at all: the value is linear in lam
        slope = asymptotic_slope([1.0], chars, cfg)
        if abs(slope) <= 1e-12 * (1.0 + abs(float(chars.b_trunc[0]))):
            return finish(0.0, 0.0, True, "flat_direction", False)
        return finish(0.0, 0.0, False, "unbounded_flagged", False)

    slope_tol = 1e-12 * (1.0 + float(np.abs(chars.b_trunc).max()))
    flagged = False
    if allow_pos and asymptotic_slope([1.0], chars, cfg) > slope_tol:
        flagged = True
    if allow_neg and asymptotic_slope([-1.0], chars, cfg) > slope_tol:
        flagged = True

    f = _objective(chars, kind, cfg)
    scale = jumps.support_scale() if jumps is not None else max(math.sqrt(cc), 1e-6)
    width = 1.0 / max(scale, 1e-12)
    lo, hi, hit_cap = _expand(f, width, allow_neg, allow_pos)
    flagged = flagged or hit_cap
    lam, val = _golden_max(f, lo, hi)
    if val < 0.0:
        lam, val = 0.0, 0.0

    fast_foc = _foc_closure(chars, kind)

    def foc_scalar(x: float) -> float | None:
        if fast_foc is not None:
            return fast_foc(x)
        r = _try_foc([x], chars, kind, cfg)
        return None if r is None else float(r[0])

    if not flagged and val > 0.0:
        lam = _secant_polish(f, foc_scalar, lam, lo, hi)
        val = f(lam)
    arr, val, tie = _ray_shrink(f, np.array([lam]), val)
    lam = float(arr[0])

    if flagged:
        return finish(lam, val, True, "unbounded_flagged", tie)
    constrained = (lam == 0.0) and not (allow_pos and allow_neg)
    if constrained:
        return finish(0.0, 0.0, True, "flat_direction", tie)
    return finish(lam, val, True, None, tie)


def _coordinate_sweep(f, d: int, order, width: float) -> tuple[np.ndarray, float]:
    lam = np.zeros(d)
    val = 0.0
    stalled = 0
    for _ in range(80):
        moved = 0.0
        prev_val = val
        for i in order:
            base = lam.copy()

            def g(t: float) -> float:
                v = base.copy()
                v[i] = t
                return f(v)

            center = base[i]
            end_lo, end_hi = center - width, center + width
            flo, fhi = g(end_lo), g(end_hi)
            for _ in range(40):
                new = center + 4.0 * (end_hi - center)
                fnew = g(new)
                end_hi = new
                if not (fnew > fhi + 1e-14 * (1.0 + abs(fhi))):
                    break
                fhi = fnew
            for _ in range(40):
                new = center + 4.0 * (end_lo - center)
                fnew = g(new)
                end_lo = new
                if not (fnew > flo + 1e-14 * (1.0 + abs(flo))):
                    break
                flo = fnew
            t, vt = _golden_max(g, end_lo, end_hi)
            moved = max(moved, abs(t - base[i]))
            lam = base
            lam[i] = t
            val = vt
        if moved <= 1e-12 * (1.0 + float(np.linalg.norm(lam))):
            break
        # a capped objective is flat on its maximizer set, so the point
        # can wander forever without gaining value; stop and leave the
        # rest to the polish and tie-break stages
        if val <= prev_val + 1e-14 * (1.0 + abs(val)):
            stalled += 1
            if stalled >= 2:
                break
        else:
            stalled = 0
    return lam, val


def _gradient_polish(f, lam, val, chars, kind, cfg):
    for _ in range(40):
        grad = _try_foc(lam, chars, kind, cfg)
        if grad is None or float(np.abs(grad).max()) <= 1e-10:
            break
        direction = grad / float(np.linalg.norm(grad))

        def g(s: float) -> float:
            return f(lam + s * direction)

        hi = 1.0
        fhi = g(hi)
        for _ in range(30):
            fnew = g(4.0 * hi)
            if not (fnew > fhi + 1e-14 * (1.0 + abs(fhi))):
                break
            hi *= 4.0
            fhi = fnew
        s, vs = _golden_max(g, 0.0, 4.0 * hi)
        if vs <= val + 1e-16 * (1.0 + abs(val)):
            break
        lam = lam + s * direction
        val = vs
    return lam, val


def _newton_polish(f, lam, val, chars, kind, cfg):
    """Damped Newton on the stationarity system.

    Steepest ascent crawls in the narrow valleys of an ill-conditioned
    second moment; Newton restores them in a handful of steps.  Steps
    are accepted only on strict improvement, so a singular or useless
    Jacobian (plateaus, kink crossings) degrades to a no-op and points
    on a flat maximizer set are left where they are for the tie-break.
    """
    d = lam.size
    for _ in range(30):
        g = _try_foc(lam, chars, kind, cfg)
        if g is None:
            return lam, val
        if float(np.abs(g).max()) <= 1e-12:
            break
        jac = np.empty((d, d))
        h = 1e-6 * (1.0 + float(np.abs(lam).max()))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            gj = _try_foc(lam + e, chars, kind, cfg)
            if gj is None:
                return lam, val
            jac[:, j] = (gj - g) / h
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            return lam, val
        if not np.all(np.isfinite(step)):
            return lam, val
        t = 1.0
        for _ in range(20):
            cand = lam + t * step
            vc = f(cand)
            if vc > val + 1e-13 * (1.0 + abs(val)):
                lam, val = cand, vc
                break
            t *= 0.5
        else:
            return lam, val
    return lam, val


def _maximize_nd(chars: LocalCharacteristics, kind, cfg) -> LocalOptimum:
    kind = _kind(kind)
    d = chars.dim
    jumps = chars.jumps

    def f(lam: np.ndarray) -> float:
        return drift_of_variation(utility_variation(lam, kind, d), chars, cfg)

    scale = jumps.support_scale() if jumps is not None else 1.0
    width = 1.0 / max(scale, 1e-12)
    lam_a, val_a = _coordinate_sweep(f, d, range(d), width)
    lam_a, val_a = _gradient_polish(f, lam_a, val_a, chars, kind, cfg)
    lam_a, val_a = _newton_polish(f, lam_a, val_a, chars, kind, cfg)
    lam_b, val_b = _coordinate_sweep(f, d, range(d - 1, -1, -1), width)
    lam_b, val_b = _gradient_polish(f, lam_b, val_b, chars, kind, cfg)
    lam_b, val_b = _newton_polish(f, lam_b, val_b, chars, kind, cfg)

    tie = False
    lam, val = (lam_a, val_a) if val_a >= val_b else (lam_b, val_b)
    gap = float(np.linalg.norm(lam_a - lam_b))
    if gap > 1e-8 * (1.0 + float(np.linalg.norm(lam_a))) \
            and abs(val_a - val_b) <= 1e-12 * (1.0 + abs(val_a)):
        # the maximizer set contains the whole segment; take its
        # minimum-norm point, in closed form
        seg = lam_b - lam_a
        t = float(np.clip(-(lam_a @ seg) / (seg @ seg), 0.0, 1.0))
        cand = lam_a + t * seg
        v = f(cand)
        if v >= val - 1e-12 * (1.0 + abs(val)):
            lam, val, tie = cand, v, True
    lam, val, shrunk = _ray_shrink(f, lam, val)
    tie = tie or shrunk
    if val < 0.0:
        lam, val = np.zeros(d), 0.0

    res = _try_foc(lam, chars, kind, cfg)
    if res is not None and float(np.abs(res).max()) <= _FOC_TOL:
        flag = "interior"
    else:
        flag = "flat_direction"
    return LocalOptimum(lam, float(val), res, flag, tie)


def maximize_local_utility(chars: LocalCharacteristics, kind,
                           cfg: QuadConfig = DEFAULT_QUAD) -> LocalOptimum:
    """Globally maximize the concave local utility in the position direction.

    One-dimensional models get domain restriction by tail moments, slope
    classification, bracketed golden section and a secant polish of the
    stationarity residual; multidimensional models (finite atom laws
    only, d <= 4) get coordinate sweeps in both orders with a gradient
    polish and the segment tie-break.
    """
    if chars.dim > _MAX_DIM:
        raise OptimizationError(f"dimension {chars.dim} exceeds the cap {_MAX_DIM}")
    if chars.dim == 1:
        opt = _maximize_1d(chars, kind, cfg)
    else:
        opt = _maximize_nd(chars, kind, cfg)
    if not math.isfinite(opt.value) or opt.value < 0.0:
        raise OptimizationError("search did not produce a finite nonnegative value")
    return opt
