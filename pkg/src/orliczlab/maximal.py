"""Maximal operators on mesh fields, level cubes and sparse decompositions.

All suprema run over a ``CubeSet``: one shifted dyadic grid, all 2^d grids,
or every fine-lattice cube (the exhaustive oracle).  Values are computed on
the fine lattice and returned on base cells when that is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dyadic import CubeSet, DyadicCube, GridBatch, Mesh, SparseFamily, validate_sparse
from .errors import DecompositionError, UsageError
from .field import MeshField, common_mesh
from .growth import GrowthFunction, product_compose
from .orlicz import luxemburg_norm

GRID_DOMINATION_BASE = 6.0


@dataclass(frozen=True)
class MaximalResult:
    field: MeshField
    cube_set: CubeSet
    alpha: float
    n: int

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def _wrap(mesh: Mesh, fine: np.ndarray, cube_set: CubeSet, alpha: float, n: int) -> MaximalResult:
    fld = MeshField(mesh, fine, 3, "function")
    if cube_set.kind == "single" and not any(cube_set.shift):
        fld = fld.coarsened()
    return MaximalResult(fld, cube_set, alpha, n)


def sup_over_cubes(mesh: Mesh, cube_set: CubeSet, value_fn: Callable) -> np.ndarray:
    """Pointwise max over cubes of value_fn(batch), as a fine-lattice array (0 where uncovered)."""
    out = np.zeros(mesh.shape)
    for batch in mesh.batches(cube_set):
        vals = value_fn(batch)
        np.maximum(out, batch.spread(vals, 0.0), out=out)
    return out


def _check(fields: Sequence[MeshField]) -> Mesh:
    if not fields:
        raise UsageError("need at least one input")
    return common_mesh(*fields)


def _weighted_value(sigmas: Sequence[MeshField], fs: Sequence[MeshField]):
    nums = [np.abs(f.fine) * s.fine for f, s in zip(fs, sigmas)]
    dens = [s.fine for s in sigmas]

    def value(batch):
        out = None
        for num, den in zip(nums, dens):
            term = batch.sum(num) / batch.sum(den)
            out = term if out is None else out * term
        return out

    return value


def multilinear_weighted_maximal(
    sigmas: Sequence[MeshField], fs: Sequence[MeshField], cube_set: CubeSet | None = None
) -> MaximalResult:
    """sup over cubes containing x of prod_i m_{sigma_i}(f_i, Q)."""
    if len(sigmas) != len(fs):
        raise UsageError("need one weight per function")
    mesh = _check([*sigmas, *fs])
    cube_set = cube_set or CubeSet.single((0,) * mesh.d)
    fine = sup_over_cubes(mesh, cube_set, _weighted_value(sigmas, fs))
    return _wrap(mesh, fine, cube_set, 0.0, len(fs))


def _fractional_value(mesh: Mesh, arrays: Sequence[np.ndarray], alpha: float):
    d = mesh.d
    fv = mesh.fine_volume

    def value(batch):
        vol = batch.volume
        out = np.full(batch.counts, vol ** (alpha / d))
        for a in arrays:
            out = out * (batch.sum(a) * fv / vol)
        return out

    return value


def fractional_multilinear_maximal(
    fs: Sequence[MeshField], alpha: float = 0.0, cube_set: CubeSet | None = None
) -> MaximalResult:
    """sup over cubes containing x of |Q|^{alpha/d} prod_i avg_Q |f_i|."""
    mesh = _check(fs)
    n = len(fs)
    if not 0 <= alpha < n * mesh.d:
        raise UsageError(f"alpha must lie in [0, {n * mesh.d})")
    cube_set = cube_set or CubeSet.single((0,) * mesh.d)
    arrays = [np.abs(f.fine) for f in fs]
    fine = sup_over_cubes(mesh, cube_set, _fractional_value(mesh, arrays, alpha))
    return _wrap(mesh, fine, cube_set, alpha, n)


def hardy_littlewood(f: MeshField, cube_set: CubeSet | None = None) -> MaximalResult:
    return fractional_multilinear_maximal([f], 0.0, cube_set)


def log_maximal(f: MeshField, cube_set: CubeSet | None = None) -> MaximalResult:
    """sup over cubes containing x of exp(avg_Q log f); zero cells annihilate a cube."""
    mesh = f.mesh
    if np.any(f.values < 0):
        raise UsageError("logarithmic maximal function needs f >= 0")
    cube_set = cube_set or CubeSet.single((0,) * mesh.d)
    with np.errstate(divide="ignore"):
        logs = np.log(f.fine)
    fv = mesh.fine_volume

    def value(batch):
        return np.exp(batch.sum(logs) * fv / batch.volume)

    fine = sup_over_cubes(mesh, cube_set, value)
    return _wrap(mesh, fine, cube_set, 0.0, 1)


# ------------------------------------------------------------ level cubes


def _grid_values(mesh: Mesh, shift: Sequence[int], value_fn) -> list[tuple[GridBatch, np.ndarray]]:
    return [(b, value_fn(b)) for b in mesh.grid_levels(tuple(shift))]


def _select(mesh: Mesh, levels: list[tuple[GridBatch, np.ndarray]], lam: float) -> tuple[list[DyadicCube], np.ndarray]:
    covered = np.zeros(mesh.shape)
    cubes: list[DyadicCube] = []
    for batch, vals in levels:
        sel = (vals > lam) & ~(batch.max(covered) > 0)
        if not sel.any():
            continue
        for idx in zip(*np.nonzero(sel)):
            cubes.append(batch.cube(idx))
        covered = np.maximum(covered, batch.spread(sel.astype(float)))
    return cubes, covered > 0


def level_cubes(
    sigmas: Sequence[MeshField], fs: Sequence[MeshField], lam: float, shift: Sequence[int] | None = None
) -> list[DyadicCube]:
    """Inclusion-maximal grid cubes whose product of weighted averages exceeds lam."""
    if not lam > 0:
        raise UsageError("lambda must be positive")
    mesh = _check([*sigmas, *fs])
    shift = tuple(shift) if shift is not None else (0,) * mesh.d
    levels = _grid_values(mesh, shift, _weighted_value(sigmas, fs))
    return _select(mesh, levels, lam)[0]


def _top_value(mesh: Mesh, levels) -> float:
    """Largest value among grid cubes that have no parent inside the window."""
    top = 0.0
    seen = np.zeros(mesh.shape, dtype=bool)
    for batch, vals in levels:
        fresh = ~(batch.max(seen.astype(float)) > 0)
        if fresh.any():
            top = max(top, float(vals[fresh].max()))
            seen |= batch.spread(fresh.astype(float)) > 0
    return top


def sparse_decompose(
    sigmas: Sequence[MeshField],
    fs: Sequence[MeshField],
    a: float = 2.0,
    shift: Sequence[int] | None = None,
    retries: int = 6,
) -> SparseFamily:
    """Level cubes at lam = a^k with E_Q = Q minus A_{k+1}, validated; a doubles on packing failure.

    k runs from the first level whose threshold reaches the largest average
    over top-level window cubes, so every selected cube has a parent in the
    window, up to the last level with a nonempty superlevel set.
    """
    if not a > 1:
        raise UsageError("base must exceed 1")
    mesh = _check([*sigmas, *fs])
    if all(not np.any(f.values) for f in fs):
        raise UsageError("all inputs vanish")
    shift = tuple(shift) if shift is not None else (0,) * mesh.d
    levels = _grid_values(mesh, shift, _weighted_value(sigmas, fs))
    top = _top_value(mesh, levels)
    peak = max(float(v.max()) for _, v in levels)
    last_packing = math.nan
    for _ in range(retries + 1):
        fam = _decompose_at(mesh, levels, a, top, peak)
        fam.base = a
        report = validate_sparse(fam)
        fam.packing = report.packing
        if report.ok:
            return fam
        last_packing = report.packing
        a *= 2.0
    raise DecompositionError(f"packing {last_packing:.4g} exceeds 1/2 after {retries} retries", last_packing)


def _decompose_at(mesh: Mesh, levels, a: float, top: float, peak: float) -> SparseFamily:
    fam = SparseFamily(mesh)
    if top <= 0:
        return fam
    k = math.floor(math.log(top, a)) - 1
    while a**k < top:
        k += 1
    per_level: list[tuple[int, list[DyadicCube], np.ndarray]] = []
    while a**k < peak:
        cubes, covered = _select(mesh, levels, a**k)
        if not cubes:
            break
        per_level.append((k, cubes, covered))
        k += 1
    for j, (k, cubes, _) in enumerate(per_level):
        nxt = per_level[j + 1][2] if j + 1 < len(per_level) else np.zeros(mesh.shape, dtype=bool)
        for cube in cubes:
            e = np.zeros(mesh.shape, dtype=bool)
            sl = mesh.fine_span(cube)
            e[sl] = ~nxt[sl]
            fam.cubes.append((cube, k))
            fam.e_masks.append(e)
    return fam


# --------------------------------------------------------------- weak type


@dataclass(frozen=True)
class WeakTypeProfile:
    lambdas: np.ndarray
    values: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


def normalized(phis: Sequence[GrowthFunction], sigmas: Sequence[MeshField], fs: Sequence[MeshField]) -> list[MeshField]:
    """f_i / ||f_i||_{Phi_i, sigma_i}; zero inputs rejected."""
    out = []
    for phi, s, f in zip(phis, sigmas, fs):
        nrm = luxemburg_norm(phi, f, s).value
        if nrm == 0:
            raise UsageError("input function vanishes identically")
        out.append(f.scaled(1.0 / nrm))
    return out


def weak_type_profile(
    sigmas: Sequence[MeshField],
    fs: Sequence[MeshField],
    phis: Sequence[GrowthFunction],
    phi: GrowthFunction | None = None,
    lambdas: np.ndarray | None = None,
    shift: Sequence[int] | None = None,
    points: int = 64,
) -> WeakTypeProfile:
    """lam -> nu(E_lam) Phi(lam) for the single-grid maximal function of the normalised inputs."""
    from .weights import WeightSystem

    mesh = _check([*sigmas, *fs])
    phi = phi or product_compose(phis)
    gs = normalized(phis, sigmas, fs)
    shift = tuple(shift) if shift is not None else (0,) * mesh.d
    M = multilinear_weighted_maximal(sigmas, gs, CubeSet.single(shift)).field.fine
    nu = WeightSystem(list(sigmas), list(phis)).nu.fine
    if lambdas is None:
        pos = M[M > 0]
        lo, hi = float(pos.min()), float(pos.max())
        if hi <= lo:
            lambdas = np.array([lo * (1 - 1e-9)])
        else:
            lambdas = np.exp(np.linspace(math.log(lo), math.log(hi), points + 1)[:-1])
    lambdas = np.asarray(lambdas, dtype=float)
    vals = np.array(
        [phi(lam) * math.fsum(nu[M > lam].tolist()) * mesh.fine_volume for lam in lambdas]
    )
    return WeakTypeProfile(lambdas, vals)


# ---------------------------------------------------------- domination


def grid_domination(fs: Sequence[MeshField], alpha: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """(all-mesh-aligned M_alpha, 6^{nd - alpha} * sum over grids of single-grid M_alpha), fine arrays."""
    mesh = _check(fs)
    n = len(fs)
    lhs = fractional_multilinear_maximal(fs, alpha, CubeSet("mesh")).field.fine
    total = np.zeros(mesh.shape)
    from .dyadic import shifts

    for flags in shifts(mesh.d):
        total += fractional_multilinear_maximal(fs, alpha, CubeSet.single(flags)).field.fine
    return lhs, GRID_DOMINATION_BASE ** (n * mesh.d - alpha) * total
