from __future__ import annotations

import math

import numpy as np
import pytest

from orliczlab.dyadic import DyadicCube, Mesh, Window, enumerate_cubes
from orliczlab.errors import FieldFormatError, UsageError
from orliczlab.field import (
    MeshField,
    average,
    constant,
    from_values,
    indicator,
    integrate,
    lognormal,
    make_field,
    power_singularity,
    read_field,
    write_field,
)
from orliczlab.growth import Entropy, Power, PowerLog
from orliczlab.orlicz import indicator_norm, luxemburg_norm, modular, norm_from_modular_bound


def _mesh(L=3, d=1):
    return Mesh(Window(d, 0), L)


def test_make_field_examples():
    c = constant(_mesh(3), 2.0)
    assert c.values.shape == (8,) and np.all(c.values == 2.0)
    ind = indicator(_mesh(2), 0.0, 0.25)
    assert ind.values.tolist() == [1.0, 0.0, 0.0, 0.0]
    mesh = _mesh(10)
    sing = power_singularity(mesh, 0.0, -0.5)
    assert np.all(np.isfinite(sing.values)) and np.all(np.diff(sing.values) < 0)
    x = (np.arange(mesh.n_base) + 0.5) / mesh.n_base
    np.testing.assert_allclose(sing.values, x**-0.5, rtol=1e-14)


def test_make_field_errors():
    with pytest.raises(UsageError):
        constant(_mesh(), math.inf)
    with pytest.raises(UsageError):
        make_field(_mesh(), "lognormal:roughness=0.5")
    with pytest.raises(UsageError):
        make_field(_mesh(), "nosuch:x=1")
    with pytest.raises(UsageError):
        from_values(_mesh(2), [1, 2, 3])


def test_lognormal_resolution_independent():
    a = lognormal(_mesh(6), 7).values
    b = lognormal(_mesh(8), 7).values
    # cell centres differ between levels, so compare against the coarse average
    assert np.corrcoef(a, b.reshape(64, 4).mean(axis=1))[0, 1] > 0.999


def test_integrate_examples():
    mesh = _mesh(4)
    half = DyadicCube((0,), -1, (0,))
    assert integrate(constant(mesh, 2.0), half) == pytest.approx(1.0, rel=1e-15)
    assert integrate(indicator(mesh, 0.0, 0.25)) == pytest.approx(0.25, rel=1e-15)
    ln = lognormal(_mesh(6), 7)
    naive = 0.0
    for v in ln.values:
        naive += float(v) / 64
    assert integrate(ln) == pytest.approx(naive, rel=1e-12)


def test_integrate_additivity():
    ln = lognormal(_mesh(6), 3)
    for cube in enumerate_cubes(Window(1, 0), (0,), -5, 0):
        kids = [c for c in enumerate_cubes(Window(1, 0), (0,), cube.level - 1, cube.level - 1) if cube.contains(c)]
        assert integrate(ln, cube) == pytest.approx(sum(integrate(ln, k) for k in kids), rel=1e-12)


def test_average_examples():
    mesh = _mesh(4)
    win = DyadicCube((0,), 0, (0,))
    sigma = lognormal(mesh, 1)
    assert average(constant(mesh, 3.0, "function"), sigma, win) == pytest.approx(3.0, rel=1e-14)
    assert average(indicator(mesh, 0, 0.25), constant(mesh, 1.0), win) == pytest.approx(0.25)
    two = from_values(mesh, np.where(np.arange(16) < 8, 1.0, 1e-12), "weight")
    exact = (4 * 1.0) / (8 * 1.0 + 8 * 1e-12)
    assert average(indicator(mesh, 0, 0.25), two, win) == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(0.5, rel=1e-10)


def test_field_file_round_trip(tmp_path):
    f = lognormal(_mesh(3, 2), 5)
    path = tmp_path / "f.csv"
    write_field(f, path)
    g = read_field(path)
    assert g.mesh == f.mesh and np.array_equal(g.values, f.values) and g.kind == "weight"
    bad = tmp_path / "bad.csv"
    bad.write_text("1\n2\n")
    with pytest.raises(FieldFormatError):
        read_field(bad)
    short = tmp_path / "short.csv"
    short.write_text(path.read_text().splitlines()[0] + "\n1.0\n")
    with pytest.raises(FieldFormatError):
        read_field(short)


def test_modular_examples():
    mesh = _mesh(4)
    one = constant(mesh, 1.0)
    half = indicator(mesh, 0, 0.5)
    assert modular(Power(2), half, one) == pytest.approx(0.5, rel=1e-15)
    assert modular(Entropy(), constant(mesh, 0.0, "function"), one) == 0.0
    assert modular(Entropy(), constant(mesh, 1.0, "function"), one) == pytest.approx(2 * math.log(2) - 1, rel=1e-14)
    with pytest.raises(UsageError):
        modular(Power(2), half, constant(_mesh(3), 1.0))


def test_norm_examples():
    mesh = _mesh(4)
    one = constant(mesh, 1.0)
    half = indicator(mesh, 0, 0.5)
    assert luxemburg_norm(Power(2), half, one).value == pytest.approx(1 / math.sqrt(2), rel=1e-9)
    assert luxemburg_norm(Entropy(), constant(mesh, 0.0, "function"), one).value == 0.0
    assert norm_from_modular_bound(Power(2), half, one, 1.0)
    assert not norm_from_modular_bound(Power(2), half, one, 0.5)
    assert norm_from_modular_bound(Power(2), constant(mesh, 0.0, "function"), one, 0.1)


@pytest.mark.parametrize("phi", [Power(1.5), Power(3), PowerLog(2, 1), Entropy()])
def test_indicator_identity(phi):
    mesh = _mesh(6)
    sigma = lognormal(mesh, 11, 0.8)
    for cube in list(enumerate_cubes(Window(1, 0), (1,), -4, 0))[:6]:
        sl = mesh.fine_span(cube)
        arr = np.zeros(mesh.shape)
        arr[sl] = 1.0
        chi = MeshField(mesh, arr, 3, "function")
        mass = float(np.sum(sigma.fine[sl])) * mesh.fine_volume
        val = luxemburg_norm(phi, chi, sigma).value
        assert val * phi.inverse(1.0 / mass) == pytest.approx(1.0, abs=1e-8)
        assert indicator_norm(phi, mass) == pytest.approx(val, rel=1e-8)
