"""Bundled example models.

Six ready-made markets exercise every code path: a two-asset one-shot
bet, a jump diffusion in exponential form, two pure-jump yield models
with one-sided heavy tails, and two countable families of scheduled
bets accumulating toward the horizon.  Examples 1-4 ship as JSON
configs; 5 and 6 are generated programmatically because their atom
count is a parameter.
"""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ._quad import DEFAULT_QUAD, QuadConfig
from .errors import SchemaError
from .measures import FiniteAtoms, merge_atoms
from .model import (JumpAtom, LocalCharacteristics, MarketModel, Segment,
                    build_model, cap_jumps)

EXAMPLE_IDS = (1, 2, 3, 4, 5, 6)

# Ids 5 and 6 take an atom-count cutoff; these defaults are large enough
# for the asymptotic checks while staying fast to solve.
DEFAULT_ATOMS_MAX = {5: 10_000, 6: 1_000}


def example_config(example_id: int) -> dict:
    """Plain-dict model config for a bundled example.

    Ids 1 through 4 are complete.  Ids 5 and 6 are countable families,
    so their stored config is a snapshot truncated at bet index 100;
    use `example_model` to build them at any cutoff.
    """
    if example_id not in EXAMPLE_IDS:
        raise SchemaError("example id must be one of 1..6")
    ref = resources.files("mmvlab").joinpath(f"examples_data/ex{example_id}.json")
    return json.loads(ref.read_text())


def _series_segment() -> Segment:
    chars = LocalCharacteristics(
        b_trunc=np.zeros(1), cov=np.zeros((1, 1)), jumps=None)
    return Segment(0.0, 2.0, chars)


def _example5_atoms(n_max: int) -> tuple[JumpAtom, ...]:
    # Bet n: tiny loss 1/n^3, even-money gain 1/n^2, rare unit windfall.
    # Index starts at 2 so every mass is strictly positive.
    atoms = []
    for n in range(2, n_max + 1):
        w = 1.0 / n ** 2
        law = FiniteAtoms(
            points=np.array([[-1.0 / n ** 3], [1.0 / n ** 2], [1.0]]),
            masses=np.array([0.5 - w, 0.5, w]))
        atoms.append(JumpAtom(time=2.0 - 1.0 / n, law=law, activity_weight=w))
    return tuple(atoms)


def _example6_atoms(n_max: int) -> tuple[JumpAtom, ...]:
    # Bet n: near-certain small loss against a rare gain close to 1,
    # tuned so the squared Hansen ratio is exactly 1/(n+1).
    atoms = []
    for n in range(2, n_max + 1):
        d = float(n ** 3 + 1)
        law = FiniteAtoms(
            points=np.array([[-(n + 1.0) / d], [(n ** 3 - n) / d]]),
            masses=np.array([n ** 3 / d, 1.0 / d]))
        atoms.append(JumpAtom(time=2.0 - 1.0 / n, law=law,
                              activity_weight=1.0 / n ** 2))
    return tuple(atoms)


def example_model(example_id: int, atoms_max: int | None = None,
                  cfg: QuadConfig = DEFAULT_QUAD) -> MarketModel:
    """Build a bundled example market.

    `atoms_max` truncates the countable families (ids 5 and 6) at the
    given bet index; it is rejected for the other ids, where it has no
    meaning.
    """
    if example_id not in EXAMPLE_IDS:
        raise SchemaError("example id must be one of 1..6")
    if example_id in (5, 6):
        n_max = DEFAULT_ATOMS_MAX[example_id] if atoms_max is None else int(atoms_max)
        if n_max < 2:
            raise SchemaError("atoms_max must be at least 2")
        atoms = _example5_atoms(n_max) if example_id == 5 else _example6_atoms(n_max)
        return MarketModel(horizon=2.0, dim=1, segments=(_series_segment(),),
                           atoms=atoms, source=None)
    if atoms_max is not None:
        raise SchemaError("atoms_max applies only to examples 5 and 6")
    return build_model(example_config(example_id), cfg)


def capped_variant(model: MarketModel, cap: float,
                   cfg: QuadConfig = DEFAULT_QUAD) -> MarketModel:
    """The same market with every jump capped at `cap` from above.

    Capping bounds the upside, which restores square integrability for
    heavy right tails and, for small enough caps, makes the monotone
    and quadratic problems provably coincide.
    """
    if model.dim != 1:
        raise SchemaError("jump capping is implemented for one asset only")
    segments = tuple(
        Segment(seg.t_start, seg.t_end, cap_jumps(seg.chars, cap, cfg))
        for seg in model.segments)
    atoms = tuple(
        JumpAtom(atom.time,
                 merge_atoms(np.minimum(atom.law.points, cap), atom.law.masses),
                 atom.activity_weight)
        for atom in model.atoms)
    return MarketModel(horizon=model.horizon, dim=model.dim,
                       segments=segments, atoms=atoms, source=None)
