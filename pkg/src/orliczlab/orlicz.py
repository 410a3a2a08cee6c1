"""Modulars and Luxemburg norms of mesh fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketOverflowError, UsageError
from .field import MeshField, common_mesh
from .growth import GrowthFunction


@dataclass(frozen=True)
class NormResult:
    value: float
    iterations: int
    residual: float

    def __float__(self) -> float:
        return self.value


def _aligned(f: MeshField, sigma: MeshField) -> tuple[np.ndarray, np.ndarray, float]:
    common_mesh(f, sigma)
    if f.sub == sigma.sub:
        return np.abs(f.values), sigma.values, f.cell_volume
    return np.abs(f.fine), sigma.fine, f.mesh.fine_volume


def _modular_arrays(phi: GrowthFunction, a: np.ndarray, w: np.ndarray, vol: float) -> float:
    vals = phi(a) * w
    if not np.all(np.isfinite(vals)):
        return math.inf
    return math.fsum(vals.ravel().tolist()) * vol


def modular(phi: GrowthFunction, f: MeshField, sigma: MeshField) -> float:
    """int Phi(|f|) sigma, summed exactly over cells."""
    a, w, vol = _aligned(f, sigma)
    return _modular_arrays(phi, a, w, vol)


def luxemburg_norm(
    phi: GrowthFunction, f: MeshField, sigma: MeshField, tol: float = 1e-10, max_iter: int = 200
) -> NormResult:
    """inf{lam > 0 : int Phi(|f|/lam) sigma <= 1} by bisection on lam."""
    if not tol > 0:
        raise UsageError("tolerance must be positive")
    a, w, vol = _aligned(f, sigma)
    if not np.all(np.isfinite(a)):
        return NormResult(math.inf, 0, math.nan)
    # only cells where f is nonzero contribute
    keep = a > 0
    if not keep.any():
        return NormResult(0.0, 0, 0.0)
    a, w = a[keep], w[keep]

    def mod(lam: float) -> float:
        with np.errstate(over="ignore"):
            return _modular_arrays(phi, a / lam, w, vol)

    lam0 = min(max(_modular_arrays(phi, a, w, vol), 1e-300), 1e300)
    lo = hi = lam0
    iters = 0
    while mod(hi) > 1:
        hi *= 2.0
        iters += 1
        if hi > 1e308:
            raise BracketOverflowError("norm bracket exceeded floating range")
    while mod(lo) <= 1:
        lo *= 0.5
        iters += 1
        if lo < 1e-308:
            raise BracketOverflowError("norm bracket fell below floating range")
    for _ in range(max_iter):
        if hi - lo <= tol * hi:
            break
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            mid = 0.5 * (lo + hi)
        if mod(mid) > 1:
            lo = mid
        else:
            hi = mid
        iters += 1
    return NormResult(hi, iters, abs(mod(hi) - 1.0))


def norm_from_modular_bound(phi: GrowthFunction, f: MeshField, sigma: MeshField, c: float) -> bool:
    """True iff int Phi(|f|/c) sigma <= 1, which certifies ||f|| <= c."""
    if not c > 0:
        raise UsageError("bound must be positive")
    return modular(phi, f.scaled(1.0 / c), sigma) <= 1.0


def indicator_norm(phi: GrowthFunction, mass: float) -> float:
    """Closed form 1 / Phi^{-1}(1 / sigma(Q)) for the norm of an indicator."""
    return 1.0 / phi.inverse(1.0 / mass)
