"""Piecewise-constant weights and functions on a dyadic mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .dyadic import DyadicCube, Mesh, MeshCube, Window
from .errors import DegenerateFunctionError, FieldFormatError, UsageError

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MeshField:
    """Cell values on the base mesh (sub=1) or on the fine x3 lattice (sub=3)."""

    mesh: Mesh
    values: np.ndarray
    sub: int = 1
    kind: str = "function"

    def __post_init__(self):
        if self.sub not in (1, 3):
            raise UsageError("sub must be 1 or 3")
        n = self.mesh.n_base * self.sub
        if self.values.shape != (n,) * self.mesh.d:
            raise UsageError(f"values shape {self.values.shape} does not match mesh {(n,) * self.mesh.d}")
        if self.kind not in ("weight", "function"):
            raise UsageError(f"unknown field kind {self.kind!r}")

    @property
    def window(self) -> Window:
        return self.mesh.window

    @property
    def L(self) -> int:
        return self.mesh.L

    @property
    def d(self) -> int:
        return self.mesh.d

    @cached_property
    def fine(self) -> np.ndarray:
        """Values on the fine lattice (each base cell repeated 3 times per axis)."""
        if self.sub == 3:
            return self.values
        out = self.values
        for ax in range(self.d):
            out = np.repeat(out, 3, axis=ax)
        return out

    def with_values(self, values: np.ndarray, kind: str | None = None) -> "MeshField":
        return MeshField(self.mesh, values, self.sub, kind or self.kind)

    def refined(self) -> "MeshField":
        return MeshField(self.mesh, self.fine, 3, self.kind)

    def coarsened(self) -> "MeshField":
        """Base-cell version; only valid when each base cell is constant."""
        if self.sub == 1:
            return self
        sl = tuple(slice(1, None, 3) for _ in range(self.d))
        base = self.values[sl]
        again = base
        for ax in range(self.d):
            again = np.repeat(again, 3, axis=ax)
        if not np.array_equal(again, self.values):
            raise UsageError("field is not constant on base cells")
        return MeshField(self.mesh, base, 1, self.kind)

    def scaled(self, c: float) -> "MeshField":
        return self.with_values(self.values * c)

    @property
    def cell_volume(self) -> float:
        return (float(self.window.side) / (self.mesh.n_base * self.sub)) ** self.d


def common_mesh(*fields: MeshField) -> Mesh:
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh != mesh:
            raise UsageError("fields live on different meshes")
    return mesh


def cell_centers(mesh: Mesh, sub: int = 1) -> list[np.ndarray]:
    """Per-axis coordinates of cell centres (absolute units)."""
    n = mesh.n_base * sub
    h = float(mesh.window.side) / n
    out = []
    for lo in mesh.window.lower:
        out.append(float(lo) + h * (np.arange(n) + 0.5))
    return out


def _grid(mesh: Mesh) -> list[np.ndarray]:
    axes = cell_centers(mesh)
    return np.meshgrid(*axes, indexing="ij")


def _vec(x, d: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, d)
    if arr.size != d or not np.all(np.isfinite(arr)):
        raise UsageError("parameters must be finite with one entry per axis")
    return arr


def _finalize(mesh: Mesh, values: np.ndarray, kind: str) -> MeshField:
    values = np.asarray(values, dtype=float)
    if kind == "weight":
        values = np.maximum(values, WEIGHT_FLOOR)
    return MeshField(mesh, values, 1, kind)


def constant(mesh: Mesh, c: float, kind: str = "weight") -> MeshField:
    if not math.isfinite(c):
        raise UsageError("constant must be finite")
    return _finalize(mesh, np.full((mesh.n_base,) * mesh.d, float(c)), kind)


def indicator(mesh: Mesh, lo, hi, kind: str = "function") -> MeshField:
    """1 on cells whose centre lies in the box [lo, hi), else 0."""
    lo, hi = _vec(lo, mesh.d), _vec(hi, mesh.d)
    inside = np.ones((mesh.n_base,) * mesh.d, dtype=bool)
    for ax, x in enumerate(_grid(mesh)):
        inside &= (x >= lo[ax]) & (x < hi[ax])
    return _finalize(mesh, inside.astype(float), kind)


def power_singularity(mesh: Mesh, center, gamma: float, kind: str = "weight") -> MeshField:
    """max(|x - center|, half cell side)**gamma at each cell centre."""
    center = _vec(center, mesh.d)
    if not math.isfinite(gamma):
        raise UsageError("gamma must be finite")
    if gamma <= -mesh.d:
        raise UsageError("gamma must exceed -d for local integrability")
    dist2 = sum((x - c) ** 2 for x, c in zip(_grid(mesh), center))
    half = 0.5 * float(mesh.window.side) / mesh.n_base
    r = np.maximum(np.sqrt(dist2), half)
    return _finalize(mesh, r**gamma, kind)


def gaussian_series(mesh: Mesh, seed: int, modes: int = 12) -> np.ndarray:
    """Seeded smooth random field with unit variance, independent of the resolution.

    A random trigonometric series with coefficients decaying like 1/|k|, so the
    same seed gives the same underlying function at every mesh level.
    """
    rng = np.random.default_rng(seed)
    d = mesh.d
    ks = [k for k in np.ndindex(*(modes + 1,) * d) if any(k)]
    ks = np.array(ks, dtype=float)
    amp = 1.0 / np.linalg.norm(ks, axis=1)
    a = rng.standard_normal(len(ks)) * amp
    b = rng.standard_normal(len(ks)) * amp
    side = float(mesh.window.side)
    coords = [(x - float(lo)) / side for x, lo in zip(_grid(mesh), mesh.window.lower)]
    field = np.zeros(coords[0].shape)
    for j, k in enumerate(ks):
        phase = 2 * np.pi * sum(kk * x for kk, x in zip(k, coords))
        field += a[j] * np.cos(phase) + b[j] * np.sin(phase)
    norm = math.sqrt(0.5 * float(np.sum(a**2 + b**2)))
    return field / norm


def lognormal(mesh: Mesh, seed: int, roughness: float = 0.5, kind: str = "weight") -> MeshField:
    """exp(roughness * G) with G the seeded smooth Gaussian series."""
    if not math.isfinite(roughness):
        raise UsageError("roughness must be finite")
    return _finalize(mesh, np.exp(roughness * gaussian_series(mesh, seed)), kind)


def from_values(mesh: Mesh, values: Sequence[float] | np.ndarray, kind: str = "function") -> MeshField:
    arr = np.asarray(values, dtype=float)
    n = mesh.n_base
    if arr.size != n**mesh.d:
        raise UsageError(f"expected {n ** mesh.d} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise UsageError("values must be finite")
    if kind == "weight" and np.any(arr < 0):
        raise UsageError("weights must be nonnegative")
    return _finalize(mesh, arr.reshape((n,) * mesh.d), kind)


def _kv(body: str) -> dict[str, str]:
    out = {}
    for item in filter(None, body.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"bad generator parameter {item!r}")
        out[key.strip()] = val.strip()
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split("|")]


def make_field(mesh: Mesh, generator: str, *, kind: str = "weight", seed: int | None = None) -> MeshField:
    """Build a field from a text generator.

    ``constant:c=2``, ``indicator:lo=0,hi=0.25`` (vectors as ``0|0``),
    ``singular:center=0,gamma=-0.5``, ``lognormal:roughness=0.5[,seed=7]``.
    """
    name, _, body = generator.strip().partition(":")
    kv = _kv(body)
    try:
        if name == "constant":
            return constant(mesh, float(kv.get("c", 1.0)), kind)
        if name == "indicator":
            return indicator(mesh, _floats(kv["lo"]), _floats(kv["hi"]), kind)
        if name in ("singular", "power_singularity"):
            return power_singularity(mesh, _floats(kv.get("center", "0")), float(kv["gamma"]), kind)
        if name == "lognormal":
            s = int(kv["seed"]) if "seed" in kv else seed
            if s is None:
                raise UsageError("lognormal generator needs a seed")
            return lognormal(mesh, s, float(kv.get("roughness", 0.5)), kind)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad generator {generator!r}: {exc}") from exc
    raise UsageError(f"unknown generator {generator!r}")


# --------------------------------------------------------------- integrals


def _region(field: MeshField, Q: DyadicCube | MeshCube | tuple[slice, ...]) -> np.ndarray:
    if isinstance(Q, tuple):
        return field.fine[Q]
    return field.fine[field.mesh.slices(Q)]


def integrate(field: MeshField, Q: DyadicCube | MeshCube | tuple[slice, ...] | None = None) -> float:
    """Sum of value times cell volume over the cells of Q (whole window if None), compensated."""
    if Q is None:
        return math.fsum(field.values.ravel().tolist()) * field.cell_volume
    return math.fsum(_region(field, Q).ravel().tolist()) * field.mesh.fine_volume


def average(f: MeshField, sigma: MeshField, Q: DyadicCube | MeshCube | tuple[slice, ...]) -> float:
    """m_sigma(f, Q) = (1/sigma(Q)) int_Q |f| sigma."""
    common_mesh(f, sigma)
    den = math.fsum(_region(sigma, Q).ravel().tolist())
    if den <= 0:
        raise DegenerateFunctionError("weight has zero mass on the cube")
    num = math.fsum((np.abs(_region(f, Q)) * _region(sigma, Q)).ravel().tolist())
    return num / den


# ----------------------------------------------------------- serialization


def write_field(field: MeshField, path: str | Path) -> None:
    header = f"# {field.window.text()};L={field.L};sub={field.sub};kind={field.kind}"
    body = "\n".join(repr(float(v)) for v in field.values.ravel())
    Path(path).write_text(header + "\n" + body + "\n")


def read_field(path: str | Path) -> MeshField:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FieldFormatError(f"cannot read field {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise FieldFormatError(f"{path}: missing header line")
    try:
        meta = dict(item.split("=", 1) for item in lines[0][1:].strip().split(";"))
        window = Window(int(meta["d"]), int(meta["w"]), tuple(int(x) for x in meta["origin"].split(",")))
        mesh = Mesh(window, int(meta["L"]))
        sub = int(meta.get("sub", 1))
        kind = meta.get("kind", "function")
        vals = np.array([float(x) for x in lines[1:] if x.strip()])
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(f"{path}: malformed field file ({exc})") from exc
    n = mesh.n_base * sub
    if vals.size != n**window.d or not np.all(np.isfinite(vals)):
        raise FieldFormatError(f"{path}: expected {n ** window.d} finite values, got {vals.size}")
    if kind == "weight" and np.any(vals <= 0):
        raise FieldFormatError(f"{path}: weight values must be positive")
    try:
        return MeshField(mesh, vals.reshape((n,) * window.d), sub, kind)
    except UsageError as exc:
        raise FieldFormatError(str(exc)) from exc
