"""Jump-measure families and their integral calculus.

Every family supports the same small protocol:

* ``integrate(f, breakpoints)``: integral of a vectorized integrand
  against the (unnormalized) measure, with the domain split at the given
  outer-coordinate breakpoints before quadrature,
* ``mass_scaled_ge(lam, level, strict)``: measure of the half-space
  ``{x : lam . x >= level}`` (strictly greater when asked),
* ``moment_sup_order(side)``: supremum of the orders k for which the
  one-sided tail integral of |x|^k is finite (exclusive bound; ``inf``
  when every polynomial moment exists, ``nan`` when unknown),
* ``sample(gen, size)``: draws from the normalized probability law,
* ``total_mass``, ``support_scale``, ``effective_bounds``.

Wrapper families (exponential yield transform, cap, generic injective
image) translate breakpoints and half-space queries into base
coordinates recursively, so a capped exponential-yield Gaussian still
integrates with exact kink placement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import (DEFAULT_QUAD, QuadConfig, hermite_gaussian, laguerre_tail,
                    legendre_panel, split_points)
from .errors import InvariantError, UnsupportedMeasure

TRUNCATION_BOUND = 1.0


@dataclass(frozen=True)
class TruncationSpec:
    """Marker for the fixed truncation convention.

    The truncation function is componentwise: h(x)_i = x_i when
    |x_i| <= 1 and 0 otherwise.  The bound is not configurable; the
    dataclass exists so signatures can state which convention they use.
    """

    bound: float = TRUNCATION_BOUND


def truncate(x: np.ndarray) -> np.ndarray:
    """Componentwise truncation h(x)_i = x_i * 1{|x_i| <= 1}."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= TRUNCATION_BOUND, x, 0.0)


def _as_direction(lam, dim: int | None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(lam, dtype=float))
    if dim is None:
        dim = v.size
    if v.shape != (dim,):
        raise UnsupportedMeasure(f"direction shape {v.shape} for dimension {dim}")
    return v


class JumpMeasure:
    """Base class; concrete families override the protocol methods."""

    dim: int = 1

    def total_mass(self) -> float:
        raise NotImplementedError

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        raise NotImplementedError

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        raise NotImplementedError

    def moment_sup_order(self, side: int) -> float:
        raise NotImplementedError

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def support_scale(self) -> float:
        raise NotImplementedError

    def effective_bounds(self) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class FiniteAtoms(JumpMeasure):
    """Finitely many weighted points in R^d; all integrals are exact sums."""

    points: np.ndarray   # shape (n, d)
    masses: np.ndarray   # shape (n,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        ms = np.asarray(self.masses, dtype=float).ravel()
        if pts.shape[0] != ms.shape[0]:
            raise InvariantError("points and masses disagree in length")
        if np.any(ms < 0.0):
            raise InvariantError("negative atom mass")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        object.__setattr__(self, "dim", pts.shape[1])

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        if self.masses.size == 0:
            return 0.0
        x = self.points[:, 0] if self.dim == 1 else self.points
        return float(np.dot(self.masses, np.asarray(f(x), dtype=float)))

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        if self.masses.size == 0:
            return 0.0
        v = _as_direction(lam, self.dim)
        s = self.points @ v
        tol = 1e-12 * (1.0 + abs(level) + float(np.max(np.abs(s), initial=0.0)))
        if strict:
            sel = s > level + tol
        else:
            sel = s >= level - tol
        return float(self.masses[sel].sum())

    def moment_sup_order(self, side: int) -> float:
        return math.inf

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        p = self.masses / self.total_mass()
        idx = gen.choice(self.masses.size, size=size, p=p)
        out = self.points[idx]
        return out[:, 0] if self.dim == 1 else out

    def support_scale(self) -> float:
        if self.masses.size == 0:
            return 1.0
        return float(np.max(np.abs(self.points)))

    def effective_bounds(self) -> tuple[float, float]:
        if self.dim != 1 or self.masses.size == 0:
            raise UnsupportedMeasure("bounds are one-dimensional")
        x = self.points[:, 0]
        return float(x.min()), float(x.max())


def merge_atoms(points: np.ndarray, masses: np.ndarray) -> FiniteAtoms:
    """Combine exactly coincident points and drop zero-mass rows."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ms = np.asarray(masses, dtype=float).ravel()
    seen: dict[tuple, int] = {}
    out_p, out_m = [], []
    for p, m in zip(pts, ms):
        key = tuple(p)
        if key in seen:
            out_m[seen[key]] += m
        else:
            seen[key] = len(out_p)
            out_p.append(p)
            out_m.append(m)
    keep = [i for i, m in enumerate(out_m) if m > 0.0]
    return FiniteAtoms(np.array([out_p[i] for i in keep], dtype=float).reshape(len(keep), pts.shape[1]),
                       np.array([out_m[i] for i in keep], dtype=float))


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class Gaussian1D(JumpMeasure):
    """Gaussian jump density with intensity ``rate``: rate * N(mean, variance)."""

    mean: float
    variance: float
    rate: float

    def __post_init__(self):
        if self.variance <= 0.0:
            raise InvariantError("gaussian variance must be positive")
        if self.rate < 0.0:
            raise InvariantError("negative jump rate")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def total_mass(self) -> float:
        return self.rate

    def _pdf(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.sd
        return self.rate * np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2.0 * math.pi))

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        if self.rate == 0.0:
            return 0.0
        lo = self.mean - cfg.gauss_span * self.sd
        hi = self.mean + cfg.gauss_span * self.sd
        inner = [p for p in breakpoints if lo < p < hi]
        if not inner:
            return self.rate * hermite_gaussian(f, self.mean, self.sd, cfg)
        total = 0.0
        edges = split_points(lo, hi, inner)
        for a, b in zip(edges[:-1], edges[1:]):
            total += legendre_panel(lambda x: np.asarray(f(x)) * self._pdf(x), a, b, cfg)
        return total

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.rate if hit else 0.0
        t = level / lam
        z = (t - self.mean) / self.sd
        upper = self.rate * (1.0 - _norm_cdf(z))
        return upper if lam > 0.0 else self.rate - upper

    def moment_sup_order(self, side: int) -> float:
        return math.inf

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.normal(self.mean, self.sd, size=size)

    def support_scale(self) -> float:
        return abs(self.mean) + 3.0 * self.sd

    def effective_bounds(self) -> tuple[float, float]:
        return (self.mean - DEFAULT_QUAD.gauss_span * self.sd,
                self.mean + DEFAULT_QUAD.gauss_span * self.sd)


@dataclass(frozen=True)
class ExpTails1D(JumpMeasure):
    """Two-sided exponential density c_minus e^{a x} 1{x<0} + c_plus e^{-b x} 1{x>0}."""

    c_minus: float
    a: float
    c_plus: float
    b: float

    def __post_init__(self):
        if self.a <= 0.0 or self.b <= 0.0:
            raise InvariantError("tail rates must be positive")
        if self.c_minus < 0.0 or self.c_plus < 0.0:
            raise InvariantError("negative tail coefficient")

    def total_mass(self) -> float:
        return self.c_minus / self.a + self.c_plus / self.b

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        total = 0.0
        left_edges = sorted(set([0.0] + [float(p) for p in breakpoints if p < 0.0]))
        right_edges = sorted(set([0.0] + [float(p) for p in breakpoints if p > 0.0]))
        if self.c_minus > 0.0:
            e0 = left_edges[0]
            total += (self.c_minus * math.exp(self.a * e0)
                      * laguerre_tail(f, e0, self.a, -1, cfg))
            for lo, hi in zip(left_edges[:-1], left_edges[1:]):
                total += legendre_panel(
                    lambda x: np.asarray(f(x)) * self.c_minus * np.exp(self.a * x),
                    lo, hi, cfg)
        if self.c_plus > 0.0:
            s0 = right_edges[-1]
            total += (self.c_plus * math.exp(-self.b * s0)
                      * laguerre_tail(f, s0, self.b, +1, cfg))
            for lo, hi in zip(right_edges[:-1], right_edges[1:]):
                total += legendre_panel(
                    lambda x: np.asarray(f(x)) * self.c_plus * np.exp(-self.b * x),
                    lo, hi, cfg)
        return total

    def _mass_above(self, t: float) -> float:
        if t >= 0.0:
            return (self.c_plus / self.b) * math.exp(-self.b * t)
        return self.total_mass() - (self.c_minus / self.a) * math.exp(self.a * t)

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.total_mass() if hit else 0.0
        t = level / lam
        above = self._mass_above(t)
        return above if lam > 0.0 else self.total_mass() - above

    def moment_sup_order(self, side: int) -> float:
        return math.inf

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        p_plus = (self.c_plus / self.b) / self.total_mass()
        side = gen.random(size) < p_plus
        mag = gen.exponential(1.0, size=size)
        return np.where(side, mag / self.b, -mag / self.a)

    def support_scale(self) -> float:
        return 3.0 * max(1.0 / self.a, 1.0 / self.b)

    def effective_bounds(self) -> tuple[float, float]:
        return (-60.0 / self.a, 60.0 / self.b)


@dataclass(frozen=True)
class TabulatedDensity1D(JumpMeasure):
    """Density given on a finite grid, integrated by the trapezoid rule."""

    grid: np.ndarray
    density: np.ndarray
    quadrature: str = "trapezoid"

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float).ravel()
        d = np.asarray(self.density, dtype=float).ravel()
        if x.size != d.size or x.size < 2:
            raise InvariantError("grid and density must match, length >= 2")
        if np.any(np.diff(x) <= 0.0):
            raise InvariantError("grid must be strictly increasing")
        if np.any(d < 0.0):
            raise InvariantError("negative density value")
        if self.quadrature != "trapezoid":
            raise UnsupportedMeasure(f"unknown quadrature rule {self.quadrature!r}")
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "density", d)

    def _with_points(self, extra) -> tuple[np.ndarray, np.ndarray]:
        pts = [p for p in extra if self.grid[0] < p < self.grid[-1]]
        if not pts:
            return self.grid, self.density
        x = np.unique(np.concatenate([self.grid, np.asarray(pts, dtype=float)]))
        return x, np.interp(x, self.grid, self.density)

    def total_mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        x, d = self._with_points(breakpoints)
        return float(np.trapezoid(np.asarray(f(x), dtype=float) * d, x))

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.total_mass() if hit else 0.0
        t = level / lam
        x, d = self._with_points([t])
        # clip the range instead of masking the integrand: the threshold is
        # a grid point after insertion, so no cell straddles the jump
        keep = (x >= t) if lam > 0.0 else (x <= t)
        if np.count_nonzero(keep) < 2:
            return 0.0
        return float(np.trapezoid(d[keep], x[keep]))

    def moment_sup_order(self, side: int) -> float:
        return math.inf

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.concatenate([[0.0], np.cumsum(
            0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid))])
        cdf /= cdf[-1]
        return np.interp(gen.random(size), cdf, self.grid)

    def support_scale(self) -> float:
        return max(abs(float(self.grid[0])), abs(float(self.grid[-1])))

    def effective_bounds(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])


@dataclass(frozen=True)
class ExpYieldMeasure(JumpMeasure):
    """Image of a one-dimensional base measure under x -> e^x - 1."""

    base: JumpMeasure

    def __post_init__(self):
        if self.base.dim != 1:
            raise UnsupportedMeasure("exponential yield transform is one-dimensional")

    def total_mass(self) -> float:
        return self.base.total_mass()

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        inner = [math.log1p(p) for p in breakpoints if p > -1.0]
        return self.base.integrate(lambda x: f(np.expm1(x)), inner, cfg)

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.total_mass() if hit else 0.0
        t = level / lam
        if lam > 0.0:
            if t <= -1.0:
                return self.total_mass()
            return self.base.mass_scaled_ge(1.0, math.log1p(t), strict)
        if t <= -1.0:
            return 0.0
        return self.base.mass_scaled_ge(-1.0, -math.log1p(t), strict)

    def moment_sup_order(self, side: int) -> float:
        if side < 0:
            return math.inf          # the image is bounded below by -1
        if isinstance(self.base, ExpTails1D):
            return self.base.b       # |y|^k integrable on the right iff k < b
        if isinstance(self.base, (Gaussian1D, TabulatedDensity1D, FiniteAtoms)):
            return math.inf
        raise UnsupportedMeasure("unknown base family for tail order")

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.expm1(self.base.sample(gen, size))

    def support_scale(self) -> float:
        s = self.base.support_scale()
        return max(abs(math.expm1(s)), abs(math.expm1(-s)))

    def effective_bounds(self) -> tuple[float, float]:
        lo, hi = self.base.effective_bounds()
        return math.expm1(lo), math.expm1(hi)


@dataclass(frozen=True)
class CappedMeasure(JumpMeasure):
    """Image of a one-dimensional base measure under y -> min(y, cap)."""

    base: JumpMeasure
    cap: float

    def __post_init__(self):
        if self.base.dim != 1:
            raise UnsupportedMeasure("cap transform is one-dimensional")

    def total_mass(self) -> float:
        return self.base.total_mass()

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        inner = [p for p in breakpoints if p < self.cap] + [self.cap]
        return self.base.integrate(lambda y: f(np.minimum(y, self.cap)), inner, cfg)

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.total_mass() if hit else 0.0
        t = level / lam
        if lam > 0.0:
            if t > self.cap or (strict and t >= self.cap):
                return 0.0
            return self.base.mass_scaled_ge(1.0, t, strict)
        # lam < 0: event is min(y, cap) <= t (or <)
        if self.cap < t or (not strict and self.cap == t):
            return self.total_mass()
        return self.base.mass_scaled_ge(-1.0, -t, strict)

    def moment_sup_order(self, side: int) -> float:
        if side > 0:
            return math.inf
        return self.base.moment_sup_order(side)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.minimum(self.base.sample(gen, size), self.cap)

    def support_scale(self) -> float:
        return self.base.support_scale()

    def effective_bounds(self) -> tuple[float, float]:
        lo, hi = self.base.effective_bounds()
        return lo, min(hi, self.cap)


@dataclass(frozen=True)
class GenericMapped1D(JumpMeasure):
    """Image of a one-dimensional base measure under an injective map.

    Monotonicity is verified on a probe grid at construction; half-space
    queries and breakpoint translation invert the map by bisection, so
    this wrapper is slower and less exact than the named transforms but
    supports arbitrary strictly monotone images.
    """

    base: JumpMeasure
    fwd: object                      # vectorized callable
    increasing: bool = field(init=False)

    def __post_init__(self):
        if self.base.dim != 1:
            raise UnsupportedMeasure("generic image of a multidimensional measure")
        lo, hi = self.base.effective_bounds()
        grid = np.linspace(lo, hi, 513)
        vals = np.asarray(self.fwd(grid), dtype=float)
        d = np.diff(vals)
        if np.all(d > 0.0):
            inc = True
        elif np.all(d < 0.0):
            inc = False
        else:
            raise UnsupportedMeasure("image map is not strictly monotone on the support")
        object.__setattr__(self, "increasing", inc)

    def total_mass(self) -> float:
        return self.base.total_mass()

    def _preimage(self, y: float) -> float | None:
        lo, hi = self.base.effective_bounds()
        flo = float(self.fwd(np.array([lo]))[0])
        fhi = float(self.fwd(np.array([hi]))[0])
        ylo, yhi = (flo, fhi) if self.increasing else (fhi, flo)
        if not (ylo < y < yhi):
            return None
        a, b = lo, hi
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = float(self.fwd(np.array([m]))[0])
            if (fm < y) == self.increasing:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    def integrate(self, f, breakpoints=(), cfg: QuadConfig = DEFAULT_QUAD) -> float:
        inner = [p for p in (self._preimage(b) for b in breakpoints) if p is not None]
        return self.base.integrate(lambda x: f(np.asarray(self.fwd(x))), inner, cfg)

    def mass_scaled_ge(self, lam, level: float, strict: bool = False) -> float:
        lam = float(_as_direction(lam, 1)[0])
        if lam == 0.0:
            hit = (0.0 > level) if strict else (0.0 >= level)
            return self.total_mass() if hit else 0.0
        t = level / lam
        bot, top = self.effective_bounds()
        if t <= bot:
            above = self.total_mass()
        elif t >= top:
            above = 0.0
        else:
            x0 = self._preimage(t)
            upper = self.base.mass_scaled_ge(1.0, x0, strict)
            above = upper if self.increasing else self.total_mass() - upper
        return above if lam > 0.0 else self.total_mass() - above

    def moment_sup_order(self, side: int) -> float:
        return math.nan              # unknown: callers must not trust tails

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.fwd(self.base.sample(gen, size)))

    def support_scale(self) -> float:
        lo, hi = self.effective_bounds()
        return max(abs(lo), abs(hi), 1e-12)

    def effective_bounds(self) -> tuple[float, float]:
        lo, hi = self.base.effective_bounds()
        a = float(self.fwd(np.array([lo]))[0])
        b = float(self.fwd(np.array([hi]))[0])
        return (a, b) if a <= b else (b, a)
