"""The composed weight nu, weight-class constants and reverse Hoelder checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .dyadic import CubeSet, DyadicCube, GridBatch, Mesh, MeshBatch, MeshCube, _sliding
from .errors import UsageError
from .field import MeshField, common_mesh
from .growth import GrowthFunction, Power, product_compose
from .maximal import _fractional_value, sup_over_cubes


@dataclass(eq=False)
class WeightSystem:
    """Input weights sigma_i with their growth functions Phi_i."""

    sigmas: list[MeshField]
    phis: list[GrowthFunction]

    def __post_init__(self):
        if len(self.sigmas) != len(self.phis) or not self.sigmas:
            raise UsageError("need one growth function per weight")
        common_mesh(*self.sigmas)

    @property
    def n(self) -> int:
        return len(self.sigmas)

    @property
    def mesh(self) -> Mesh:
        return self.sigmas[0].mesh

    @cached_property
    def phi(self) -> GrowthFunction:
        return product_compose(self.phis)

    @cached_property
    def nu(self) -> MeshField:
        return nu_sigma(self)

    def phi_inverse_product(self, ys: Sequence[np.ndarray]) -> np.ndarray:
        """prod_i Phi_i^{-1}(y_i)."""
        out = None
        for phi, y in zip(self.phis, ys):
            term = phi.inverse(y)
            out = term if out is None else out * term
        return out


def _same_sub(fields: Sequence[MeshField]) -> tuple[list[np.ndarray], int]:
    subs = {f.sub for f in fields}
    if len(subs) == 1:
        return [f.values for f in fields], subs.pop()
    return [f.fine for f in fields], 3


def nu_generic(ws: WeightSystem) -> MeshField:
    """Cellwise 1 / Phi(prod Phi_i^{-1}(1/sigma_i)) by numeric inversion."""
    vals, sub = _same_sub(ws.sigmas)
    inner = ws.phi_inverse_product([1.0 / v for v in vals])
    return MeshField(ws.mesh, 1.0 / ws.phi(inner), sub, "weight")


def nu_sigma(ws: WeightSystem) -> MeshField:
    """nu_sigma; closed form prod sigma_i^{p/p_i} for unscaled power families."""
    if all(isinstance(p, Power) and p.c == 1.0 for p in ws.phis):
        vals, sub = _same_sub(ws.sigmas)
        p = 1.0 / sum(1.0 / q.p for q in ws.phis)
        out = np.ones_like(vals[0])
        for v, q in zip(vals, ws.phis):
            out = out * v ** (p / q.p)
        return MeshField(ws.mesh, out, sub, "weight")
    return nu_generic(ws)


@dataclass
class ClassConstant:
    kind: str
    value: float
    argmax_cube: DyadicCube | MeshCube | None
    cube_set: CubeSet
    params: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "value": self.value,
            "argmax_cube": self.argmax_cube.descriptor() if self.argmax_cube is not None else None,
            "cube_set": self.cube_set.text(),
        }


def sup_with_argmax(mesh: Mesh, cube_set: CubeSet, value_fn: Callable) -> tuple[float, DyadicCube | MeshCube | None]:
    """Largest value_fn over the cube set; ties go to the first cube in enumeration order."""
    best, arg = -math.inf, None
    for batch in mesh.batches(cube_set):
        vals = np.asarray(value_fn(batch), dtype=float)
        if vals.size == 0:
            continue
        flat = np.where(np.isnan(vals), -math.inf, vals).ravel()
        i = int(np.argmax(flat))
        if flat[i] > best:
            best = float(flat[i])
            arg = batch.cube(np.unravel_index(i, vals.shape))
    return best, arg


def _default_set(mesh: Mesh, cube_set: CubeSet | None) -> CubeSet:
    return cube_set or CubeSet.single((0,) * mesh.d)


def _iter_cubes(mesh: Mesh, cube_set: CubeSet):
    for batch in mesh.batches(cube_set):
        for idx in np.ndindex(*batch.counts):
            yield batch, idx


def _cube_slices(batch, idx) -> tuple[slice, ...]:
    side = batch.block if isinstance(batch, GridBatch) else batch.side_fine
    return tuple(slice(s, s + side) for s in batch.start(idx))


def _local_maximal(mesh: Mesh, arrays: Sequence[np.ndarray], alpha: float = 0.0) -> np.ndarray:
    return sup_over_cubes(mesh, CubeSet("grids"), _fractional_value(mesh, arrays, alpha))


def _per_cube_sup(mesh: Mesh, cube_set: CubeSet, fn: Callable) -> tuple[float, DyadicCube | MeshCube | None]:
    """Supremum of fn(slices, volume) over cubes, evaluated one cube at a time."""
    best, arg = -math.inf, None
    for batch, idx in _iter_cubes(mesh, cube_set):
        val = fn(_cube_slices(batch, idx), batch.volume)
        if val > best:
            best, arg = val, batch.cube(idx)
    return best, arg


# ------------------------------------------------------- single weight classes


def muckenhoupt_constant(
    kind: str, omega: MeshField, cube_set: CubeSet | None = None, p: float | None = None
) -> ClassConstant:
    """AP, A1, A_INF_FW, A_INF_EXP or DOUBLING constant of one weight."""
    mesh = omega.mesh
    cube_set = _default_set(mesh, cube_set)
    w = omega.fine
    kind = kind.upper()
    params: dict = {}
    if kind == "AP":
        if p is None or not p > 1:
            raise UsageError("AP needs p > 1")
        params["p"] = p
        dual = w ** (1 - p / (p - 1))
        ones = np.ones_like(w)

        def value(b):
            cnt = b.sum(ones)
            return (b.sum(w) / cnt) * (b.sum(dual) / cnt) ** (p - 1)

    elif kind == "A1":
        ones = np.ones_like(w)

        def value(b):
            return b.sum(w) / b.sum(ones) / b.min(w)

    elif kind == "A_INF_EXP":
        ones = np.ones_like(w)
        logs = np.log(w)

        def value(b):
            cnt = b.sum(ones)
            return b.sum(w) / cnt * np.exp(-b.sum(logs) / cnt)

    elif kind == "A_INF_FW":
        def fw(sl, vol):
            masked = np.zeros_like(w)
            masked[sl] = w[sl]
            M = _local_maximal(mesh, [masked])
            return math.fsum(M[sl].ravel().tolist()) / math.fsum(w[sl].ravel().tolist())

        val, arg = _per_cube_sup(mesh, cube_set, fw)
        return ClassConstant(kind, val, arg, cube_set, params)
    elif kind == "DOUBLING":
        val, arg = _doubling(mesh, w, cube_set)
        return ClassConstant(kind, val, arg, cube_set, params)
    else:
        raise UsageError(f"unknown weight class {kind!r}")
    val, arg = sup_with_argmax(mesh, cube_set, value)
    return ClassConstant(kind, val, arg, cube_set, params)


def _doubling(mesh: Mesh, w: np.ndarray, cube_set: CubeSet) -> tuple[float, DyadicCube | MeshCube | None]:
    best, arg = 1.0, None
    if cube_set.kind == "mesh":
        n = mesh.n_fine
        for s in range(3, n + 1):
            s2 = min(2 * s, n)
            small = MeshBatch(mesh, s).sum(w)
            big = MeshBatch(mesh, s2).sum(w)
            inner = small
            for ax in range(mesh.d):
                inner = _sliding(inner, s2 - s + 1, ax, np.minimum)
            ratio = big / inner
            i = int(np.argmax(ratio))
            if ratio.flat[i] > best:
                best = float(ratio.flat[i])
                arg = MeshCube(tuple(int(x) for x in np.unravel_index(i, ratio.shape)), s2)
        return best, arg
    flags_list = [cube_set.shift] if cube_set.kind == "single" else None
    if flags_list is None:
        from .dyadic import shifts

        flags_list = shifts(mesh.d)
    for flags in flags_list:
        levels = mesh.grid_levels(flags)
        for parent, child in zip(levels, levels[1:]):
            if parent.level != child.level + 1:
                continue
            spread = parent.spread(parent.sum(w), 0.0)
            psum = child.max(spread)
            csum = child.sum(w)
            ratio = np.where(psum > 0, psum / csum, 0.0)
            i = int(np.argmax(ratio))
            if ratio.flat[i] > best:
                best = float(ratio.flat[i])
                arg = child.cube(np.unravel_index(i, ratio.shape))
    return best, arg


# --------------------------------------------------------------- pair classes


def sawyer_integral(
    mesh: Mesh, sig: Sequence[np.ndarray], w: np.ndarray, psi: GrowthFunction, sl: tuple[slice, ...], alpha: float
) -> float:
    """int_Q Psi(M_alpha(sigma_1 chi_Q, ..., sigma_n chi_Q)) w over fine arrays, M over all grids."""
    masked = []
    for s in sig:
        m = np.zeros_like(s)
        m[sl] = s[sl]
        masked.append(m)
    Mq = _local_maximal(mesh, masked, alpha)
    return math.fsum((psi(Mq[sl]) * w[sl]).ravel().tolist()) * mesh.fine_volume


PAIR_KINDS = ("M", "K", "S_ALPHA", "L_ALPHA", "A_ALPHA", "A_TILDE_ALPHA", "B_ALPHA")


def pair_class_constant(
    kind: str,
    ws: WeightSystem,
    omega: MeshField,
    psi: GrowthFunction,
    cube_set: CubeSet | None = None,
    alpha: float = 0.0,
) -> ClassConstant:
    """Supremum over cubes of the defining expression of a two-weight class."""
    kind = kind.upper()
    if kind not in PAIR_KINDS:
        raise UsageError(f"unknown pair class {kind!r}")
    mesh = common_mesh(*ws.sigmas, omega)
    cube_set = _default_set(mesh, cube_set)
    n, d = ws.n, mesh.d
    if not 0 <= alpha < n * d:
        raise UsageError(f"alpha must lie in [0, {n * d})")
    fv = mesh.fine_volume
    sig = [s.fine for s in ws.sigmas]
    w = omega.fine
    params = {"alpha": alpha, "psi": psi.descriptor(), "phis": [p.descriptor() for p in ws.phis]}

    def masses(b):
        return [b.sum(s) * fv for s in sig]

    if kind == "M":
        nu = ws.nu.fine

        def value(b):
            return b.sum(w) * fv * psi(ws.phi.inverse(1.0 / (b.sum(nu) * fv)))

    elif kind == "K":

        def value(b):
            out = b.sum(w) * fv
            for phi, m in zip(ws.phis, masses(b)):
                out = out * psi(phi.inverse(1.0 / m))
            return out

    elif kind in ("A_ALPHA", "B_ALPHA"):
        logs = [np.log(s) for s in sig]
        ones = np.ones_like(w)

        def value(b):
            vol = b.volume
            ms = masses(b)
            prod_mass = np.ones(b.counts)
            for m in ms:
                prod_mass = prod_mass * (m / vol ** (1 - alpha / (n * d)))
            if kind == "A_ALPHA":
                args = [1.0 / m for m in ms]
            else:
                cnt = b.sum(ones)
                args = [np.exp(-b.sum(lg) / cnt) / vol for lg in logs]
            return b.sum(w) * fv * psi(prod_mass) * psi(ws.phi_inverse_product(args))

    elif kind == "A_TILDE_ALPHA":

        def value(b):
            vol = b.volume
            args = [m / vol for m in masses(b)]
            return b.sum(w) * fv / vol * psi(vol ** (alpha / d) * ws.phi_inverse_product(args))

    else:  # S_ALPHA and L_ALPHA need the inner maximal function per cube
        nu = ws.nu.fine

        def per_cube(sl, vol):
            integral = sawyer_integral(mesh, sig, w, psi, sl, alpha)
            if kind == "S_ALPHA":
                pre = psi(ws.phi.inverse(1.0 / (math.fsum(nu[sl].ravel().tolist()) * fv)))
            else:
                pre = 1.0
                for phi, s in zip(ws.phis, sig):
                    pre *= psi(phi.inverse(1.0 / (math.fsum(s[sl].ravel().tolist()) * fv)))
            return pre * integral

        val, arg = _per_cube_sup(mesh, cube_set, per_cube)
        return ClassConstant(kind, val, arg, cube_set, params)
    val, arg = sup_with_argmax(mesh, cube_set, value)
    return ClassConstant(kind, val, arg, cube_set, params)


def w_class_constant(ws: WeightSystem, psi: GrowthFunction, cube_set: CubeSet | None = None) -> ClassConstant:
    """sup Psi o Phi^{-1}(1/nu(Q)) int_Q Psi(prod Phi_i^{-1}(M(sigma_i chi_Q))) dx."""
    mesh = ws.mesh
    cube_set = _default_set(mesh, cube_set)
    fv = mesh.fine_volume
    sig = [s.fine for s in ws.sigmas]
    nu = ws.nu.fine

    def per_cube(sl, vol):
        inner = []
        for s in sig:
            m = np.zeros_like(s)
            m[sl] = s[sl]
            inner.append(_local_maximal(mesh, [m])[sl])
        integral = math.fsum(psi(ws.phi_inverse_product(inner)).ravel().tolist()) * fv
        pre = psi(ws.phi.inverse(1.0 / (math.fsum(nu[sl].ravel().tolist()) * fv)))
        return pre * integral

    val, arg = _per_cube_sup(mesh, cube_set, per_cube)
    params = {"psi": psi.descriptor(), "phis": [p.descriptor() for p in ws.phis]}
    return ClassConstant("W", val, arg, cube_set, params)


# ------------------------------------------------------------ reverse Hoelder


@dataclass
class ReverseHolderReport:
    upper: float
    lower: float
    upper_cube: DyadicCube | MeshCube | None
    lower_cube: DyadicCube | MeshCube | None


def reverse_holder_check(ws: WeightSystem, cube_set: CubeSet | None = None) -> ReverseHolderReport:
    """Extremes over cubes of Phi(prod Phi_i^{-1}(1/sigma_i(Q))) * nu(Q)."""
    mesh = ws.mesh
    cube_set = _default_set(mesh, cube_set)
    fv = mesh.fine_volume
    sig = [s.fine for s in ws.sigmas]
    nu = ws.nu.fine

    def value(b):
        args = [1.0 / (b.sum(s) * fv) for s in sig]
        return ws.phi(ws.phi_inverse_product(args)) * b.sum(nu) * fv

    up, up_cube = sup_with_argmax(mesh, cube_set, value)
    neg, lo_cube = sup_with_argmax(mesh, cube_set, lambda b: -value(b))
    return ReverseHolderReport(up, -neg, up_cube, lo_cube)
