"""Local quadratic utilities and instantaneous no-arbitrage checks.

Two normalized utility shapes are supported: the plain quadratic
u - u^2/2 (kind "mv") and its monotone repair, which freezes at the
bliss level 1 and stays at the value 1/2 beyond it (kind "mmv").  Both
vanish at 0 with unit slope and curvature -1, so they share their local
expansion; they differ only past the bliss point.

The local utility of a position direction lam is the drift of the
variation u -> g(lam . u) of the increments.  Its supremum over lam is
finite exactly when the model admits no instantaneous free lunch, which
`check_instantaneous_no_arbitrage` tests directly: exactly on finite
atom laws via a cone test, and on a direction grid for diffusive or
density-driven segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._quad import DEFAULT_QUAD, QuadConfig
from .drift import ExtendedReal, VariationFunction, drift_of_variation
from .measures import _as_direction
from .model import LocalCharacteristics, MarketModel, small_jump_mean


class UtilityKind(str, Enum):
    MV = "mv"
    MMV = "mmv"


def _kind(kind) -> UtilityKind:
    return kind if isinstance(kind, UtilityKind) else UtilityKind(str(kind))


def utility(kind, u):
    """Normalized utility g(u); vectorized, g(0) = 0, g'(0) = 1."""
    u = np.asarray(u, dtype=float)
    if _kind(kind) is UtilityKind.MV:
        return u - 0.5 * u * u
    v = np.minimum(u, 1.0)
    return v - 0.5 * v * v


def utility_slope(kind, u):
    """Derivative g'(u); the monotone kind clamps to zero past bliss."""
    u = np.asarray(u, dtype=float)
    if _kind(kind) is UtilityKind.MV:
        return 1.0 - u
    return np.where(u < 1.0, 1.0 - u, 0.0)


def utility_variation(lam, kind, dim: int | None = None) -> VariationFunction:
    """The variation x -> g(lam . x) with its expansion and kink data."""
    kind = _kind(kind)
    lam = _as_direction(lam, dim)
    d = lam.size
    if d == 1:
        l0 = float(lam[0])

        def fn(x):
            return utility(kind, l0 * np.asarray(x, dtype=float))
    else:
        def fn(x):
            return utility(kind, np.asarray(x, dtype=float) @ lam)

    kinks: tuple[float, ...] = ()
    if kind is UtilityKind.MMV and d == 1 and lam[0] != 0.0:
        kinks = (1.0 / float(lam[0]),)
    growth = "bounded" if not np.any(lam) else "quadratic"
    return VariationFunction(fn=fn, grad0=lam, hess0=-np.outer(lam, lam),
                             growth=growth, kinks=kinks)


def slope_variation(lam, kind, component: int = 0,
                    dim: int | None = None) -> VariationFunction:
    """The variation x -> x_i g'(lam . x), the i-th local utility gradient.

    Its drift is simultaneously the first-order condition residual at
    lam and the drift rate of the candidate density-weighted increment,
    so a zero drift certifies both optimality and the martingale
    property of the dual candidate.
    """
    kind = _kind(kind)
    lam = _as_direction(lam, dim)
    d = lam.size
    if component < 0 or component >= d:
        raise ValueError("component out of range")
    if d == 1:
        l0 = float(lam[0])

        def fn(x):
            x = np.asarray(x, dtype=float)
            return x * utility_slope(kind, l0 * x)
    else:
        def fn(x):
            x = np.asarray(x, dtype=float)
            return x[:, component] * utility_slope(kind, x @ lam)

    e = np.zeros(d)
    e[component] = 1.0
    kinks: tuple[float, ...] = ()
    if kind is UtilityKind.MMV and d == 1 and lam[0] != 0.0:
        kinks = (1.0 / float(lam[0]),)
    growth = "linear" if not np.any(lam) else "quadratic"
    return VariationFunction(fn=fn, grad0=e,
                             hess0=-(np.outer(e, lam) + np.outer(lam, e)),
                             growth=growth, kinks=kinks)


def local_utility(lam, chars: LocalCharacteristics, kind,
                  cfg: QuadConfig = DEFAULT_QUAD) -> ExtendedReal:
    """Drift of the utility variation at position direction lam."""
    return drift_of_variation(utility_variation(lam, kind, chars.dim), chars, cfg)


def asymptotic_slope(direction, chars: LocalCharacteristics,
                     cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Limit slope of the local utility along a ray, per unit of |lam|.

    The utility decays quadratically against any diffusion and drops to
    minus infinity against jumps opposite the ray, so the slope is -inf
    in those cases.  Otherwise every jump along the ray is eventually
    capped or fully penalized and only the zero-truncation drift
    survives.
    """
    lam = _as_direction(direction, chars.dim)
    if float(lam @ chars.cov @ lam) > 1e-14 * (1.0 + float(np.trace(chars.cov))):
        return -math.inf
    jumps = chars.jumps
    if jumps is not None:
        tol = 1e-13 * (1.0 + jumps.total_mass())
        if jumps.mass_scaled_ge(-lam, 0.0, strict=True) > tol:
            return -math.inf
        sjm = small_jump_mean(chars, cfg)
    else:
        sjm = np.zeros(chars.dim)
    return float(lam @ (chars.b_trunc - sjm))


@dataclass(frozen=True)
class NoArbReport:
    """Result of the instantaneous no-free-lunch scan.

    `witness_direction` (with `witness_time`) is a direction whose
    positions win without risk on some segment; `atom_violations` lists
    (time, direction) pairs for scheduled jumps whose outcomes all lie
    weakly on one side of a hyperplane.  `methods` records whether each
    part of the scan was exact or grid-based.
    """

    holds: bool
    witness_direction: np.ndarray | None
    witness_time: float | None
    atom_violations: tuple[tuple[float, np.ndarray], ...]
    methods: dict


def _nnls(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative least squares min |A c - y| over c >= 0.

    Active-set iteration; returns (c, residual y - A c).  The residual
    r satisfies r . a_i <= 0 for every column, which is what the cone
    test needs from it.
    """
    m, n = A.shape
    c = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    scale = float(np.abs(A).max()) * (1.0 + float(np.abs(y).max()))
    tol = 1e-12 * (scale + 1.0)
    for _ in range(4 * n + 8):
        r = y - A @ c
        w = A.T @ r
        w[passive] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            break
        passive[j] = True
        for _ in range(2 * n + 4):
            idx = np.flatnonzero(passive)
            s = np.linalg.lstsq(A[:, idx], y, rcond=None)[0]
            if s.size == 0 or s.min() > 0.0:
                c[:] = 0.0
                c[idx] = s
                break
            cur = c[idx]
            neg = s <= 0.0
            denom = np.where(cur[neg] - s[neg] > 0.0, cur[neg] - s[neg], 1.0)
            alpha = float(np.min(np.where(cur[neg] - s[neg] > 0.0,
                                          cur[neg] / denom, 0.0)))
            c[idx] = cur + alpha * (s - cur)
            drop = idx[c[idx] <= tol * max(1.0, float(np.abs(c).max()))]
            c[drop] = 0.0
            passive[drop] = False
    return c, y - A @ c


def _atom_witness(points: np.ndarray, masses: np.ndarray) -> np.ndarray | None:
    """Direction with lam . x_i >= 0 for all outcomes, > 0 for one, or None.

    No such direction exists exactly when every -x_j lies in the convex
    cone of the outcomes; the nonnegative least squares residual of that
    membership problem is itself a witness when membership fails.
    """
    pts = points[masses > 0.0]
    A = pts.T
    for j in range(pts.shape[0]):
        xj = pts[j]
        _, r = _nnls(A, -xj)
        nrm2 = float(r @ r)
        if nrm2 > (1e-9 * (1.0 + float(np.linalg.norm(xj)))) ** 2:
            return -r / math.sqrt(nrm2)
    return None


def _direction_grid(dim: int, n: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if dim == 3:
        # Fibonacci lattice on the sphere
        i = np.arange(n) + 0.5
        phi = np.pi * (1.0 + math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    gen = np.random.Generator(np.random.Philox(key=np.array([7, dim],
                                                            dtype=np.uint64)))
    pts = gen.standard_normal((n, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def check_instantaneous_no_arbitrage(model: MarketModel,
                                     cfg: QuadConfig = DEFAULT_QUAD,
                                     n_directions: int = 1000) -> NoArbReport:
    """Scan every segment and scheduled jump for riskless-win directions.

    A direction violates on a segment when it sees no diffusion, no
    jumps against it, and either jumps along it with a nonnegative
    zero-truncation drift, or no jumps at all with a nonzero drift.
    Scheduled jumps are tested exactly through the cone criterion.  In
    one dimension the segment scan over the two signs is exact as well,
    since all the conditions are invariant under positive scaling.
    """
    witness = None
    witness_time = None
    grid_cache: dict[int, np.ndarray] = {}
    for seg in model.segments:
        ch = seg.chars
        dirs = grid_cache.setdefault(ch.dim, _direction_grid(ch.dim, n_directions))
        tol_c = 1e-14 * (1.0 + float(np.trace(ch.cov)))
        jumps = ch.jumps
        total = jumps.total_mass() if jumps is not None else 0.0
        tol_m = 1e-13 * (1.0 + total)
        b0 = ch.b_trunc - (small_jump_mean(ch, cfg) if jumps is not None
                           else np.zeros(ch.dim))
        tol_d = 1e-11 * (1.0 + float(np.abs(ch.b_trunc).max()) + total)
        for lam in dirs:
            if float(lam @ ch.cov @ lam) > tol_c:
                continue
            if jumps is not None:
                if jumps.mass_scaled_ge(-lam, 0.0, strict=True) > tol_m:
                    continue
                mpos = jumps.mass_scaled_ge(lam, 0.0, strict=True)
            else:
                mpos = 0.0
            drift0 = float(lam @ b0)
            bad = (drift0 > -tol_d) if mpos > tol_m else (abs(drift0) > tol_d)
            if bad and witness is None:
                # a deterministic segment wins in the direction of its drift
                flip = mpos <= tol_m and drift0 < 0.0
                witness = -np.array(lam, dtype=float) if flip \
                    else np.array(lam, dtype=float)
                witness_time = seg.t_start
    atom_violations = []
    for atom in model.atoms:
        w = _atom_witness(atom.law.points, atom.law.masses)
        if w is not None:
            atom_violations.append((atom.time, w))
    methods = {
        "atoms": "exact-cone",
        "segments": ("exact-signs" if model.dim == 1
                     else f"direction-grid-{n_directions}"),
    }
    return NoArbReport(holds=witness is None and not atom_violations,
                       witness_direction=witness, witness_time=witness_time,
                       atom_violations=tuple(atom_violations), methods=methods)
