"""Carleson sequences on one shifted dyadic grid: constants, embedding and level-set sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dyadic import DyadicCube, GridBatch, Mesh, SparseFamily
from .errors import FieldFormatError, UsageError
from .field import MeshField, common_mesh
from .growth import GrowthFunction, Power, product_compose, psi_phi_inverse
from .maximal import level_cubes, normalized


@dataclass
class CarlesonSequence:
    """Positive numbers lambda_Q on cubes of the grid with the given shift."""

    shift: tuple[int, ...]
    entries: dict[DyadicCube, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def total(self) -> float:
        return math.fsum(self.entries.values())


@dataclass(frozen=True)
class CarlesonConstant:
    value: float
    argmax: DyadicCube | None


def _as_sequence(seq: CarlesonSequence | Mapping[DyadicCube, float], d: int) -> CarlesonSequence:
    if isinstance(seq, CarlesonSequence):
        return seq
    entries = dict(seq)
    shifts = {c.shift for c in entries}
    if len(shifts) > 1:
        raise UsageError("sequence mixes cubes from different grids")
    shift = shifts.pop() if shifts else (0,) * d
    return CarlesonSequence(shift, entries)


def _deposits(mesh: Mesh, seq: CarlesonSequence) -> list[tuple[GridBatch, np.ndarray]]:
    """Per grid level (coarse first), the array of lambda_Q at each cube position."""
    levels = mesh.grid_levels(seq.shift)
    by_level = {b.level: (b, np.zeros(b.counts)) for b in levels}
    for cube, lam in seq.entries.items():
        if cube.shift != seq.shift or cube.d != mesh.d:
            raise UsageError(f"cube {cube} is not on the sequence grid")
        if lam < 0 or not math.isfinite(lam):
            raise UsageError("sequence entries must be finite and nonnegative")
        if cube.level not in by_level:
            raise UsageError(f"cube {cube} is off the mesh")
        batch, arr = by_level[cube.level]
        start = tuple(sl.start for sl in mesh.fine_span(cube))
        idx = tuple((s - o) // batch.block for s, o in zip(start, batch.offsets))
        if any(i < 0 or i >= c for i, c in zip(idx, batch.counts)):
            raise UsageError(f"cube {cube} is not inside the window")
        arr[idx] += lam
    return [by_level[b.level] for b in levels]


def subset_sums(mesh: Mesh, seq: CarlesonSequence) -> list[tuple[GridBatch, np.ndarray]]:
    """sum_{Q inside R} lambda_Q for every grid cube R, by one fine-to-coarse sweep."""
    deps = _deposits(mesh, seq)
    out: list[tuple[GridBatch, np.ndarray]] = []
    below = np.zeros(mesh.shape)
    for batch, arr in reversed(deps):
        total = arr + batch.sum(below)
        # each cube's subtotal sits at its first fine cell, so a parent sums its children
        below = np.zeros(mesh.shape)
        corner = tuple(slice(o, o + c * batch.block, batch.block) for o, c in zip(batch.offsets, batch.counts))
        below[corner] = total
        out.append((batch, total))
    return out[::-1]


def carleson_constant(
    seq: CarlesonSequence | Mapping[DyadicCube, float],
    nu: MeshField,
    theta: GrowthFunction,
) -> CarlesonConstant:
    """sup over grid cubes R of Theta(1/nu(R)) sum_{Q inside R} lambda_Q."""
    mesh = nu.mesh
    seq = _as_sequence(seq, mesh.d)
    if not seq.entries:
        return CarlesonConstant(0.0, None)
    w = nu.fine
    fv = mesh.fine_volume
    best, arg = -math.inf, None
    for batch, sums in subset_sums(mesh, seq):
        vals = theta(1.0 / (batch.sum(w) * fv)) * sums
        i = int(np.argmax(vals))
        if vals.flat[i] > best:
            best = float(vals.flat[i])
            arg = batch.cube(np.unravel_index(i, vals.shape))
    return CarlesonConstant(best, arg)


def _average_product(batch, sig: Sequence[np.ndarray], gs: Sequence[np.ndarray]) -> np.ndarray:
    out = None
    for s, g in zip(sig, gs):
        term = batch.sum(g * s) / batch.sum(s)
        out = term if out is None else out * term
    return out


def embedding_sum_normalized(
    seq: CarlesonSequence, psi: GrowthFunction, sigmas: Sequence[MeshField], gs: Sequence[MeshField]
) -> float:
    """sum_Q lambda_Q Psi(prod_i m_{sigma_i}(g_i, Q)) for already normalised g_i."""
    mesh = common_mesh(*sigmas, *gs)
    sig = [s.fine for s in sigmas]
    garr = [np.abs(g.fine) for g in gs]
    terms = []
    for batch, lam in _deposits(mesh, seq):
        if not lam.any():
            continue
        vals = psi(_average_product(batch, sig, garr))
        terms.extend((lam * vals)[lam > 0].tolist())
    return math.fsum(terms)


def embedding_sum(
    seq: CarlesonSequence | Mapping[DyadicCube, float],
    psi: GrowthFunction,
    sigmas: Sequence[MeshField],
    fs: Sequence[MeshField],
    phis: Sequence[GrowthFunction],
) -> float:
    """sum_Q lambda_Q Psi(prod_i m_{sigma_i}(f_i / ||f_i||, Q))."""
    mesh = common_mesh(*sigmas, *fs)
    seq = _as_sequence(seq, mesh.d)
    gs = normalized(phis, sigmas, fs)
    return embedding_sum_normalized(seq, psi, sigmas, gs)


@dataclass(frozen=True)
class LevelSetSums:
    left: float
    right: float
    cubes: int

    @property
    def ratio(self) -> float:
        if self.right == 0:
            return 0.0 if self.left == 0 else math.inf
        return self.left / self.right


def levelset_sum(
    sigmas: Sequence[MeshField],
    fs: Sequence[MeshField],
    phis: Sequence[GrowthFunction],
    psi: GrowthFunction,
    lam: float,
    shift: Sequence[int] | None = None,
    phi: GrowthFunction | None = None,
) -> LevelSetSums:
    """(sum over level cubes R of 1/Theta(1/nu(R)), Phi(lam)/Psi(lam) nu(E_lam)) with Theta = Psi o Phi^{-1}."""
    from .weights import WeightSystem

    mesh = common_mesh(*sigmas, *fs)
    phi = phi or product_compose(phis)
    gs = normalized(phis, sigmas, fs)
    cubes = level_cubes(sigmas, gs, lam, shift)
    nu = WeightSystem(list(sigmas), list(phis)).nu.fine
    theta = psi_phi_inverse(psi, phi)
    fv = mesh.fine_volume
    covered = np.zeros(mesh.shape, dtype=bool)
    left = []
    for cube in cubes:
        sl = mesh.fine_span(cube)
        mass = math.fsum(nu[sl].ravel().tolist()) * fv
        left.append(1.0 / theta(1.0 / mass))
        covered[sl] = True
    e_mass = math.fsum(nu[covered].tolist()) * fv
    right = phi(lam) / psi(lam) * e_mass
    return LevelSetSums(math.fsum(left), right, len(cubes))


# ---------------------------------------------------------- from sparse families


def lebesgue_factor(family: SparseFamily) -> list[float]:
    fv = family.mesh.fine_volume
    return [float(e.sum()) * fv for e in family.e_masks]


def sequence_from_sparse(
    family: SparseFamily,
    payload: str = "lebesgue_E",
    omega: MeshField | None = None,
    psi: GrowthFunction | None = None,
    factor: Callable[[DyadicCube], float] | None = None,
) -> CarlesonSequence:
    """lambda_Q = |E_Q|, omega(E_Q) or omega(E_Q) Psi(factor(Q)); zero entries are omitted."""
    mesh = family.mesh
    fv = mesh.fine_volume
    if payload == "lebesgue_E":
        values = lebesgue_factor(family)
    elif payload in ("weight_E", "psi_weighted"):
        if omega is None:
            raise UsageError(f"payload {payload} needs a weight")
        w = omega.fine
        values = [math.fsum(w[e].tolist()) * fv for e in family.e_masks]
        if payload == "psi_weighted":
            if psi is None or factor is None:
                raise UsageError("psi_weighted payload needs psi and a factor")
            values = [v * float(psi(factor(c))) for v, (c, _) in zip(values, family.cubes)]
    else:
        raise UsageError(f"unknown payload {payload!r}")
    shift = family.cubes[0][0].shift if family.cubes else (0,) * mesh.d
    seq = CarlesonSequence(shift)
    for (cube, _), v in zip(family.cubes, values):
        if v > 0:
            seq.entries[cube] = seq.entries.get(cube, 0.0) + v
    return seq


def average_factor(sigma: MeshField, g: MeshField) -> Callable[[DyadicCube], float]:
    """Q -> m_sigma(g, Q), for the psi_weighted payload."""
    mesh = common_mesh(sigma, g)
    s, a = sigma.fine, np.abs(g.fine)

    def factor(cube: DyadicCube) -> float:
        sl = mesh.fine_span(cube)
        return math.fsum((a[sl] * s[sl]).ravel().tolist()) / math.fsum(s[sl].ravel().tolist())

    return factor


# ----------------------------------------------------------------- file format


def write_sequence(seq: CarlesonSequence, path: str | Path) -> None:
    lines = [f"{cube.descriptor()},{value!r}" for cube, value in sorted(seq.entries.items())]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_sequence(path: str | Path) -> CarlesonSequence:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FieldFormatError(f"cannot read sequence {path}: {exc}") from exc
    entries: dict[DyadicCube, float] = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        desc, sep, value = line.rpartition(",")
        if not sep:
            raise FieldFormatError(f"{path}:{n}: expected 'descriptor,value'")
        try:
            entries[DyadicCube.parse(desc)] = float(value)
        except ValueError as exc:
            raise FieldFormatError(f"{path}:{n}: bad value {value!r}") from exc
    if not entries:
        return CarlesonSequence((0,))
    shifts = {c.shift for c in entries}
    if len(shifts) > 1:
        raise FieldFormatError(f"{path}: sequence mixes grids")
    return CarlesonSequence(shifts.pop(), entries)


IDENTITY = Power(1.0)
