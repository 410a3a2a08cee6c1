"""Shifted dyadic grids, the three-lattice cover, mesh cube sets and sparse families.

A cube of the grid with shift flags ``s`` (0 or 1 per axis, meaning a shift
of 0 or 1/3) at level k with index m is 2^k([0,1)^d + m + (-1)^k s/3).
Meshes work in fine units: a window of side 2^w at resolution L is split
into 3*2^L fine cells per axis, so every grid cube of level >= w - L has
integer fine coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import FieldFormatError, ResolutionError, UsageError

THIRD = Fraction(1, 3)


def shifts(d: int) -> list[tuple[int, ...]]:
    """All 2^d shift-flag vectors in lexicographic order."""
    return list(itertools.product((0, 1), repeat=d))


def _beta_text(flags: Sequence[int]) -> str:
    return ",".join("1/3" if f else "0" for f in flags)


def parse_beta(text: str, d: int | None = None) -> tuple[int, ...]:
    flags = []
    for item in text.split(","):
        item = item.strip()
        if item == "0":
            flags.append(0)
        elif item == "1/3":
            flags.append(1)
        else:
            raise UsageError(f"shift entries must be 0 or 1/3, got {item!r}")
    if d is not None and len(flags) == 1 and d > 1:
        flags = flags * d
    if d is not None and len(flags) != d:
        raise UsageError(f"shift has {len(flags)} entries, expected {d}")
    return tuple(flags)


@dataclass(frozen=True)
class Window:
    """The box 2^level([0,1)^d + origin)."""

    d: int = 1
    level: int = 0
    origin: tuple[int, ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise UsageError("dimension must be positive")
        if not self.origin:
            object.__setattr__(self, "origin", (0,) * self.d)
        if len(self.origin) != self.d:
            raise UsageError("window origin has wrong dimension")

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** self.level

    @property
    def lower(self) -> tuple[Fraction, ...]:
        return tuple(self.side * m for m in self.origin)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> "Window":
        lo = [Fraction(x) for x in lo]
        hi = [Fraction(x) for x in hi]
        sides = {h - l for l, h in zip(lo, hi)}
        if len(sides) != 1:
            raise UsageError("window must be a cube")
        side = sides.pop()
        level = _exact_log2(side)
        if level is None:
            raise UsageError("window side is not a power of two")
        origin = []
        for l in lo:
            q = l / side
            if q.denominator != 1:
                raise UsageError("window is not dyadic-aligned")
            origin.append(int(q))
        return cls(len(lo), level, tuple(origin))

    def text(self) -> str:
        return f"d={self.d};w={self.level};origin={','.join(map(str, self.origin))}"

    @classmethod
    def parse(cls, text: str) -> "Window":
        kv = dict(item.split("=", 1) for item in text.split(";") if item)
        return cls(int(kv["d"]), int(kv["w"]), tuple(int(x) for x in kv["origin"].split(",")))


def _exact_log2(x: Fraction) -> int | None:
    if x <= 0:
        return None
    num, den = x.numerator, x.denominator
    if num & (num - 1) or den & (den - 1):
        return None
    return num.bit_length() - den.bit_length()


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube 2^k([0,1)^d + m + (-1)^k beta) of a shifted dyadic grid."""

    shift: tuple[int, ...]
    level: int
    index: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def beta(self) -> tuple[Fraction, ...]:
        return tuple(THIRD * s for s in self.shift)

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** self.level

    @property
    def lower(self) -> tuple[Fraction, ...]:
        sign = 1 if self.level % 2 == 0 else -1
        return tuple(self.side * (m + sign * b) for m, b in zip(self.index, self.beta))

    @property
    def upper(self) -> tuple[Fraction, ...]:
        return tuple(l + self.side for l in self.lower)

    @property
    def volume(self) -> float:
        return float(self.side**self.d)

    def contains(self, other: "DyadicCube") -> bool:
        return all(
            a <= c and d <= b
            for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def intersects(self, other: "DyadicCube") -> bool:
        return all(
            max(a, c) < min(b, d) for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def parent(self) -> "DyadicCube":
        """The unique grid cube one level up containing this one."""
        k = self.level + 1
        sign = 1 if k % 2 == 0 else -1
        side = Fraction(2) ** k
        idx = tuple(
            math.floor(l / side - sign * b) for l, b in zip(self.lower, self.beta)
        )
        return DyadicCube(self.shift, k, idx)

    def descriptor(self) -> str:
        return f"beta={_beta_text(self.shift)};k={self.level};m={','.join(map(str, self.index))}"

    @classmethod
    def parse(cls, text: str) -> "DyadicCube":
        try:
            kv = dict(item.split("=", 1) for item in text.strip().split(";"))
            index = tuple(int(x) for x in kv["m"].split(","))
            return cls(parse_beta(kv["beta"], len(index)), int(kv["k"]), index)
        except (KeyError, ValueError) as exc:
            raise FieldFormatError(f"bad cube descriptor {text!r}") from exc

    def __str__(self) -> str:
        return self.descriptor()


def enumerate_cubes(
    window: Window, shift: Sequence[int], min_level: int, max_level: int
) -> Iterator[DyadicCube]:
    """Every cube of the grid with level in range lying inside the window.

    Order: level descending, index lexicographic.
    """
    if min_level > max_level:
        raise UsageError("min_level exceeds max_level")
    shift = tuple(shift)
    if len(shift) != window.d:
        raise UsageError("shift dimension differs from window dimension")
    wlo = window.lower
    whi = tuple(l + window.side for l in wlo)
    for k in range(max_level, min_level - 1, -1):
        side = Fraction(2) ** k
        sign = 1 if k % 2 == 0 else -1
        ranges = []
        for lo, hi, s in zip(wlo, whi, shift):
            off = sign * THIRD * s
            first = math.ceil(lo / side - off)
            last = math.floor(hi / side - off) - 1
            ranges.append(range(first, last + 1))
        for idx in itertools.product(*ranges):
            yield DyadicCube(shift, k, tuple(idx))


def cover_cube(lower: Sequence[float | Fraction], side: float | Fraction) -> tuple[tuple[Fraction, ...], DyadicCube]:
    """A cube R of one of the 2^d shifted grids with Q inside R and side(R) <= 6 side(Q).

    Shifts are tried in lexicographic order; within a shift the level rises
    from the smallest with 2^k >= side(Q), at most three times.
    """
    lo = [Fraction(x) for x in lower]
    ell = Fraction(side)
    if ell <= 0:
        raise UsageError("cube must be nondegenerate")
    k0 = math.ceil(math.log2(ell))
    while Fraction(2) ** k0 < ell:
        k0 += 1
    while Fraction(2) ** (k0 - 1) >= ell:
        k0 -= 1
    for flags in shifts(len(lo)):
        for k in range(k0, k0 + 4):
            s = Fraction(2) ** k
            if s > 6 * ell:
                break
            sign = 1 if k % 2 == 0 else -1
            idx = []
            ok = True
            for x, f in zip(lo, flags):
                off = sign * THIRD * f
                m = math.floor(x / s - off)
                if x + ell > s * (m + off + 1):
                    ok = False
                    break
                idx.append(m)
            if ok:
                cube = DyadicCube(flags, k, tuple(idx))
                return cube.beta, cube
    raise AssertionError("three-lattice cover not found")  # pragma: no cover


# ------------------------------------------------------------ mesh geometry


@dataclass(frozen=True)
class CubeSet:
    """Which cubes a supremum ranges over: one grid, all 2^d grids, or all mesh-aligned cubes."""

    kind: str = "grids"
    shift: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("single", "grids", "mesh"):
            raise UsageError(f"unknown cube set {self.kind!r}")

    @classmethod
    def single(cls, shift: Sequence[int]) -> "CubeSet":
        return cls("single", tuple(shift))

    @classmethod
    def parse(cls, text: str, d: int) -> "CubeSet":
        name, _, rest = text.strip().partition(":")
        if name == "single":
            return cls.single(parse_beta(rest, d) if rest else (0,) * d)
        if name in ("grids", "all-grids"):
            return cls("grids")
        if name in ("mesh", "all-mesh-aligned"):
            return cls("mesh")
        raise UsageError(f"unknown cube set {text!r}")

    def text(self) -> str:
        if self.kind == "single":
            return f"single:{_beta_text(self.shift)}"
        return self.kind


@dataclass(frozen=True, order=True)
class MeshCube:
    """Axis-parallel cube with corners on the fine lattice, in fine units relative to the window."""

    lower: tuple[int, ...]
    side: int

    def descriptor(self) -> str:
        return f"mesh;lo={','.join(map(str, self.lower))};s={self.side}"

    def __str__(self) -> str:
        return self.descriptor()


@dataclass(frozen=True)
class Mesh:
    """Window plus resolution level L; fine lattice has 3*2^L cells per axis."""

    window: Window
    L: int

    def __post_init__(self):
        if self.L < 0:
            raise UsageError("resolution level must be nonnegative")

    @property
    def d(self) -> int:
        return self.window.d

    @property
    def n_base(self) -> int:
        return 2**self.L

    @property
    def n_fine(self) -> int:
        return 3 * 2**self.L

    @property
    def fine_side(self) -> float:
        return float(self.window.side) / self.n_fine

    @property
    def fine_volume(self) -> float:
        return self.fine_side**self.d

    @property
    def min_level(self) -> int:
        return self.window.level - self.L

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_fine,) * self.d

    def fine_span(self, cube: DyadicCube) -> tuple[slice, ...]:
        """Fine-cell slices covered by a grid cube (must lie inside the window)."""
        if cube.d != self.d:
            raise UsageError("cube dimension differs from mesh")
        if cube.level < self.min_level:
            raise ResolutionError(f"cube {cube} is finer than the mesh")
        e = 2 ** (cube.level - self.min_level)
        S = 3 * e
        sign = 1 if cube.level % 2 == 0 else -1
        out = []
        for m, s, m0 in zip(cube.index, cube.shift, self.window.origin):
            start = S * m + sign * s * e - m0 * self.n_fine
            if start < 0 or start + S > self.n_fine:
                raise UsageError(f"cube {cube} is not inside the window")
            out.append(slice(start, start + S))
        return tuple(out)

    def mask(self, cube: DyadicCube | MeshCube) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.slices(cube)] = True
        return m

    def slices(self, cube: DyadicCube | MeshCube) -> tuple[slice, ...]:
        if isinstance(cube, MeshCube):
            return tuple(slice(l, l + cube.side) for l in cube.lower)
        return self.fine_span(cube)

    def volume(self, cube: DyadicCube | MeshCube) -> float:
        if isinstance(cube, MeshCube):
            return (cube.side * self.fine_side) ** self.d
        return cube.volume

    def grid_levels(self, shift: Sequence[int], coarse_first: bool = True) -> list["GridBatch"]:
        levels = range(self.window.level, self.min_level - 1, -1)
        if not coarse_first:
            levels = reversed(levels)
        out = []
        for k in levels:
            batch = GridBatch.make(self, tuple(shift), k)
            if batch is not None:
                out.append(batch)
        return out

    def batches(self, cube_set: CubeSet) -> Iterator["GridBatch | MeshBatch"]:
        if cube_set.kind == "single":
            if len(cube_set.shift) != self.d:
                raise UsageError("shift dimension differs from mesh")
            yield from self.grid_levels(cube_set.shift)
        elif cube_set.kind == "grids":
            for flags in shifts(self.d):
                yield from self.grid_levels(flags)
        else:
            for s in range(self.n_fine, 2, -1):
                yield MeshBatch(self, s)

    def cubes(self, cube_set: CubeSet) -> Iterator[DyadicCube | MeshCube]:
        for batch in self.batches(cube_set):
            for idx in np.ndindex(*batch.counts):
                yield batch.cube(idx)


def _sliding(a: np.ndarray, s: int, axis: int, op) -> np.ndarray:
    """op-reduction over every window of length s along an axis (binary doubling)."""
    n = a.shape[axis]
    m = n - s + 1
    result = None
    offset = 0
    block = a
    width = 1
    while s:
        if s & 1:
            piece = np.take(block, np.arange(offset, offset + m), axis=axis)
            result = piece if result is None else op(result, piece)
            offset += width
        s >>= 1
        if s:
            length = block.shape[axis]
            block = op(
                np.take(block, np.arange(0, length - width), axis=axis),
                np.take(block, np.arange(width, length), axis=axis),
            )
            width *= 2
    return result


@dataclass(frozen=True)
class GridBatch:
    """All cubes of one grid level inside the window, as a regular block array."""

    mesh: Mesh
    shift: tuple[int, ...]
    level: int
    block: int
    offsets: tuple[int, ...]
    counts: tuple[int, ...]

    @classmethod
    def make(cls, mesh: Mesh, shift: tuple[int, ...], k: int) -> "GridBatch | None":
        e = 2 ** (k - mesh.min_level)
        S = 3 * e
        sign = 1 if k % 2 == 0 else -1
        offs, counts = [], []
        for s in shift:
            o = (sign * s * e) % S
            offs.append(o)
            counts.append((mesh.n_fine - o) // S)
        if min(counts) <= 0:
            return None
        return cls(mesh, shift, k, S, tuple(offs), tuple(counts))

    @property
    def volume(self) -> float:
        return 2.0 ** (self.level * self.mesh.d)

    @property
    def side(self) -> float:
        return 2.0**self.level

    def _view(self, a: np.ndarray) -> np.ndarray:
        sl = tuple(slice(o, o + c * self.block) for o, c in zip(self.offsets, self.counts))
        shape = []
        for c in self.counts:
            shape += [c, self.block]
        return a[sl].reshape(shape)

    def _axes(self) -> tuple[int, ...]:
        return tuple(range(1, 2 * self.mesh.d, 2))

    def sum(self, a: np.ndarray) -> np.ndarray:
        return self._view(a).sum(axis=self._axes())

    def min(self, a: np.ndarray) -> np.ndarray:
        return self._view(a).min(axis=self._axes())

    def max(self, a: np.ndarray) -> np.ndarray:
        return self._view(a).max(axis=self._axes())

    def spread(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.mesh.shape, fill, dtype=float)
        big = values
        for ax in range(self.mesh.d):
            big = np.repeat(big, self.block, axis=ax)
        sl = tuple(slice(o, o + c * self.block) for o, c in zip(self.offsets, self.counts))
        out[sl] = big
        return out

    def start(self, idx: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(o + i * self.block) for o, i in zip(self.offsets, idx))

    def cube(self, idx: Sequence[int]) -> DyadicCube:
        mesh = self.mesh
        e = self.block // 3
        sign = 1 if self.level % 2 == 0 else -1
        m = []
        for st, s, m0 in zip(self.start(idx), self.shift, mesh.window.origin):
            m.append(int((st + m0 * mesh.n_fine - sign * s * e) // self.block))
        return DyadicCube(self.shift, self.level, tuple(m))


@dataclass(frozen=True)
class MeshBatch:
    """All fine-lattice cubes of one side length (in fine cells) inside the window."""

    mesh: Mesh
    side_fine: int

    @property
    def counts(self) -> tuple[int, ...]:
        return (self.mesh.n_fine - self.side_fine + 1,) * self.mesh.d

    @property
    def volume(self) -> float:
        return (self.side_fine * self.mesh.fine_side) ** self.mesh.d

    @property
    def side(self) -> float:
        return self.side_fine * self.mesh.fine_side

    def _reduce(self, a: np.ndarray, op) -> np.ndarray:
        for ax in range(self.mesh.d):
            a = _sliding(a, self.side_fine, ax, op)
        return a

    def sum(self, a: np.ndarray) -> np.ndarray:
        return self._reduce(a, np.add)

    def min(self, a: np.ndarray) -> np.ndarray:
        return self._reduce(a, np.minimum)

    def max(self, a: np.ndarray) -> np.ndarray:
        return self._reduce(a, np.maximum)

    def spread(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        s = self.side_fine
        out = values
        for ax in range(self.mesh.d):
            pad = [(0, 0)] * self.mesh.d
            pad[ax] = (s - 1, s - 1)
            out = _sliding(np.pad(out, pad, constant_values=fill), s, ax, np.maximum)
        return out

    def start(self, idx: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(i) for i in idx)

    def cube(self, idx: Sequence[int]) -> MeshCube:
        return MeshCube(tuple(int(i) for i in idx), self.side_fine)


# ----------------------------------------------------------- sparse families


@dataclass
class SparseFamily:
    """Cubes Q_{j,k} with their level index k and sets E_Q as fine-cell masks."""

    mesh: Mesh
    cubes: list[tuple[DyadicCube, int]] = field(default_factory=list)
    e_masks: list[np.ndarray] = field(default_factory=list)
    packing: float = 0.0
    base: float = 2.0

    def __len__(self) -> int:
        return len(self.cubes)


@dataclass
class SparseReport:
    disjoint_levels: bool
    nested: bool
    packing_ok: bool
    e_disjoint: bool
    e_inside: bool
    e_large: bool
    packing: float

    @property
    def ok(self) -> bool:
        return all(
            (self.disjoint_levels, self.nested, self.packing_ok, self.e_disjoint, self.e_inside, self.e_large)
        )

    def as_dict(self) -> dict:
        return {
            "disjoint_levels": self.disjoint_levels,
            "nested": self.nested,
            "packing_ok": self.packing_ok,
            "e_disjoint": self.e_disjoint,
            "e_inside": self.e_inside,
            "e_large": self.e_large,
            "packing": self.packing,
            "ok": self.ok,
        }


def level_sets(family: SparseFamily) -> dict[int, np.ndarray]:
    """A_k as fine masks: union of the family cubes carrying index k."""
    out: dict[int, np.ndarray] = {}
    for cube, k in family.cubes:
        mask = out.setdefault(k, np.zeros(family.mesh.shape, dtype=np.int32))
        mask[family.mesh.fine_span(cube)] += 1
    return out


def validate_sparse(family: SparseFamily) -> SparseReport:
    """Check the sparse-family invariants exactly on fine-cell masks."""
    mesh = family.mesh
    for cube, _ in family.cubes:
        if cube.level < mesh.min_level:
            raise ResolutionError(f"cube {cube} is finer than the mesh")
    counts = level_sets(family)
    disjoint = all(int(c.max(initial=0)) <= 1 for c in counts.values())
    sets = {k: c > 0 for k, c in counts.items()}
    nested = True
    for k, a in sets.items():
        if k == min(sets):
            continue
        below = sets.get(k - 1)
        if below is None or np.any(a & ~below):
            nested = False
    packing = 0.0
    for cube, k in family.cubes:
        nxt = sets.get(k + 1)
        if nxt is None:
            continue
        sl = mesh.fine_span(cube)
        packing = max(packing, float(nxt[sl].mean()))
    e_total = np.zeros(mesh.shape, dtype=np.int32)
    e_inside = True
    e_large = True
    for (cube, _), e in zip(family.cubes, family.e_masks):
        e_total += e
        sl = mesh.fine_span(cube)
        inside = np.zeros(mesh.shape, dtype=bool)
        inside[sl] = True
        if np.any(e & ~inside):
            e_inside = False
        if 2 * int(e[sl].sum()) < inside[sl].size:
            e_large = False
    return SparseReport(
        disjoint_levels=disjoint,
        nested=nested,
        packing_ok=packing <= 0.5,
        e_disjoint=int(e_total.max(initial=0)) <= 1,
        e_inside=e_inside,
        e_large=e_large,
        packing=packing,
    )


def _rle(mask: np.ndarray) -> str:
    flat = mask.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return ",".join(map(str, runs))


def _unrle(text: str, shape: tuple[int, ...]) -> np.ndarray:
    runs = [int(x) for x in text.split(",") if x]
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos, val = 0, False
    for r in runs:
        flat[pos : pos + r] = val
        pos += r
        val = not val
    if pos != flat.size:
        raise FieldFormatError("run lengths do not cover the mesh")
    return flat.reshape(shape)


def write_sparse(family: SparseFamily, path: str | Path) -> None:
    lines = [f"# sparse {family.mesh.window.text()};L={family.mesh.L};a={family.base!r};packing={family.packing!r}"]
    for (cube, k), e in zip(family.cubes, family.e_masks):
        lines.append(f"{cube.descriptor()}|j={k}|E={_rle(e)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sparse(path: str | Path) -> SparseFamily:
    try:
        text = Path(path).read_text().splitlines()
        head = text[0]
        if not head.startswith("# sparse "):
            raise FieldFormatError("missing sparse header")
        meta = head[len("# sparse ") :]
        parts = dict(item.split("=", 1) for item in meta.split(";"))
        window = Window(int(parts["d"]), int(parts["w"]), tuple(int(x) for x in parts["origin"].split(",")))
        mesh = Mesh(window, int(parts["L"]))
        fam = SparseFamily(mesh, base=float(parts["a"]), packing=float(parts["packing"]))
        for line in text[1:]:
            if not line.strip():
                continue
            desc, j, e = line.split("|")
            fam.cubes.append((DyadicCube.parse(desc), int(j.removeprefix("j="))))
            fam.e_masks.append(_unrle(e.removeprefix("E="), mesh.shape))
        return fam
    except (OSError, KeyError, ValueError, IndexError) as exc:
        raise FieldFormatError(f"cannot read sparse family {path}: {exc}") from exc
