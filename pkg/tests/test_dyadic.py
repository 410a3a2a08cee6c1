from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from orliczlab.dyadic import (
    CubeSet,
    DyadicCube,
    Mesh,
    MeshCube,
    SparseFamily,
    Window,
    cover_cube,
    enumerate_cubes,
    parse_beta,
    read_sparse,
    validate_sparse,
    write_sparse,
)
from orliczlab.errors import ResolutionError, UsageError

from .oracles import grid_cubes


def _brute_shifted(level: int):
    """Cubes 2^k([0,1) + m + (-1)^k/3) inside [0,1), by scanning m."""
    s = Fraction(2) ** level
    off = (1 if level % 2 == 0 else -1) * Fraction(1, 3)
    out = []
    for m in range(-8, 9):
        lo = s * (m + off)
        if lo >= 0 and lo + s <= 1:
            out.append((lo, lo + s))
    return out


def test_enumerate_examples():
    w = Window(1, 0)
    cubes = list(enumerate_cubes(w, (0,), -2, 0))
    assert len(cubes) == 7
    assert [c.level for c in cubes] == [0, -1, -1, -2, -2, -2, -2]
    shifted = list(enumerate_cubes(w, (1,), -1, -1))
    assert [(c.lower[0], c.upper[0]) for c in shifted] == _brute_shifted(-1)
    assert [(c.lower[0], c.upper[0]) for c in shifted] == [(Fraction(1, 3), Fraction(5, 6))]
    assert len(list(enumerate_cubes(Window(2, 0), (0, 0), -1, -1))) == 4


def test_enumerate_partitions_each_level():
    w = Window(2, 0)
    for k in range(-3, 1):
        cubes = list(enumerate_cubes(w, (0, 0), k, k))
        assert sum(c.volume for c in cubes) == pytest.approx(1.0)
        for a in cubes:
            for b in cubes:
                assert a is b or a == b or not a.intersects(b)


def test_cover_examples():
    beta, R = cover_cube([0], Fraction(1, 2))
    assert R.lower[0] <= 0 and R.upper[0] >= Fraction(1, 2) and R.side <= 3
    beta, R = cover_cube([0.4], 0.5)
    assert R.lower[0] <= Fraction(0.4) and R.upper[0] >= Fraction(0.4) + Fraction(0.5) and R.side <= 3
    beta, R = cover_cube([0.49, 0.49], 0.02)
    assert R.side <= 0.12
    for lo, hi in zip(R.lower, R.upper):
        assert lo <= Fraction(0.49) and Fraction(0.49) + Fraction(0.02) <= hi


def test_cover_rejects_degenerate():
    with pytest.raises(UsageError):
        cover_cube([0.0], 0.0)


def test_descriptor_round_trip():
    c = DyadicCube((1, 0), -3, (2, -1))
    assert DyadicCube.parse(c.descriptor()) == c
    assert c.descriptor() == "beta=1/3,0;k=-3;m=2,-1"
    assert parse_beta("1/3", 2) == (1, 1)
    with pytest.raises(UsageError):
        parse_beta("1/2")


def test_parent_contains_child():
    for flags in ((0,), (1,)):
        for c in enumerate_cubes(Window(1, 0), flags, -4, -1):
            assert c.parent().contains(c)


@pytest.mark.parametrize("d,L", [(1, 4), (2, 3)])
def test_fine_spans_match_oracle(d, L):
    mesh = Mesh(Window(d, 0), L)
    for flags in ((0,) * d, (1,) * d):
        expected = sorted((k, tuple((s.start, s.stop) for s in sl)) for k, sl in grid_cubes(d, flags, L))
        got = sorted(
            (c.level, tuple((s.start, s.stop) for s in mesh.fine_span(c))) for c in mesh.cubes(CubeSet.single(flags))
        )
        assert got == expected


def test_fine_span_errors():
    mesh = Mesh(Window(1, 0), 2)
    with pytest.raises(ResolutionError):
        mesh.fine_span(DyadicCube((0,), -3, (0,)))
    with pytest.raises(UsageError):
        mesh.fine_span(DyadicCube((0,), -1, (2,)))


def test_mesh_cube_set_count():
    mesh = Mesh(Window(1, 0), 2)
    n = mesh.n_fine
    assert sum(1 for _ in mesh.cubes(CubeSet("mesh"))) == sum(n - s + 1 for s in range(3, n + 1))
    assert mesh.volume(MeshCube((0,), 3)) == pytest.approx(0.25)


def _two_cube_family():
    mesh = Mesh(Window(1, 0), 8)
    fam = SparseFamily(mesh)
    half = DyadicCube((0,), -1, (0,))
    quarter = DyadicCube((0,), -2, (0,))
    n = mesh.n_fine
    e_half = np.zeros(mesh.shape, dtype=bool)
    e_half[n // 4 : n // 2] = True
    e_quarter = np.zeros(mesh.shape, dtype=bool)
    e_quarter[: n // 4] = True
    fam.cubes = [(half, 0), (quarter, 1)]
    fam.e_masks = [e_half, e_quarter]
    return fam


def test_validate_sparse_examples():
    fam = _two_cube_family()
    rep = validate_sparse(fam)
    assert rep.ok and rep.packing == pytest.approx(0.5)
    empty = validate_sparse(SparseFamily(fam.mesh))
    assert empty.ok and empty.packing == 0.0
    bad = SparseFamily(fam.mesh)
    half = DyadicCube((0,), -1, (0,))
    e = np.zeros(fam.mesh.shape, dtype=bool)
    e[: fam.mesh.n_fine // 2] = True
    bad.cubes = [(half, 0), (half, 0)]
    bad.e_masks = [e, e.copy()]
    assert not validate_sparse(bad).ok


def test_validate_sparse_resolution_error():
    fam = SparseFamily(Mesh(Window(1, 0), 1))
    fam.cubes = [(DyadicCube((0,), -3, (0,)), 0)]
    fam.e_masks = [np.zeros(fam.mesh.shape, dtype=bool)]
    with pytest.raises(ResolutionError):
        validate_sparse(fam)


def test_sparse_file_round_trip(tmp_path):
    fam = _two_cube_family()
    path = tmp_path / "fam.txt"
    write_sparse(fam, path)
    back = read_sparse(path)
    assert back.cubes == fam.cubes
    for a, b in zip(back.e_masks, fam.e_masks):
        assert np.array_equal(a, b)
