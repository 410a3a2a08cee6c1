"""Property tests for the invariants of each module."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczlab.carleson import carleson_constant, sequence_from_sparse
from orliczlab.dyadic import CubeSet, DyadicCube, Mesh, Window, cover_cube
from orliczlab.field import MeshField, average, constant, integrate, lognormal
from orliczlab.growth import (
    Entropy,
    ExpMinusLinear,
    Power,
    PowerLog,
    Property,
    Verdict,
    classify,
    complementary,
    product_compose,
    psi_phi_inverse,
)
from orliczlab.maximal import fractional_multilinear_maximal, level_cubes, sparse_decompose
from orliczlab.orlicz import luxemburg_norm, modular
from orliczlab.weights import WeightSystem, pair_class_constant

FAST = settings(max_examples=40, deadline=None)

powers = st.floats(1.1, 4.0).map(Power)
families = st.one_of(
    powers,
    st.builds(PowerLog, st.floats(1.0, 3.0), st.floats(0.0, 2.0)),
    st.just(ExpMinusLinear()),
    st.just(Entropy()),
)
seeds = st.integers(0, 10_000)


# ------------------------------------------------------------------ growth


@FAST
@given(families, st.floats(-6, 6))
def test_inverse_round_trip(phi, logy):
    y = 10.0**logy
    assert abs(phi(phi.inverse(y)) - y) <= 1e-8 * y


@FAST
@given(st.lists(powers, min_size=1, max_size=3))
def test_delta_prime_closed_under_composition(phis):
    assert all(classify(p, Property.DELTA_PRIME).verdict is Verdict.HOLDS for p in phis)
    assert classify(product_compose(phis), Property.DELTA_PRIME).verdict is Verdict.HOLDS


@FAST
@given(st.floats(1.1, 3.0), st.integers(1, 3), st.floats(1.0, 3.0))
def test_upper_type_lift(q, n, p):
    psi = Power(q)
    phi = product_compose([Power(p * n)] * n)
    if classify(phi, Property.RATIO_MONOTONE, aux=psi).verdict is not Verdict.HOLDS:
        return
    assert classify(psi, Property.UPPER_TYPE, q=q).verdict is Verdict.HOLDS
    assert classify(psi_phi_inverse(psi, phi), Property.UPPER_TYPE, q=n * q).verdict is Verdict.HOLDS


@FAST
@given(st.one_of(powers, st.builds(PowerLog, st.floats(1.0, 3.0), st.just(0.0))))
def test_quotient_bound_finite(phi):
    rep = classify(phi, Property.QUOTIENT_BOUND)
    assert math.isfinite(rep.estimate) and rep.verdict is Verdict.HOLDS


@FAST
@given(st.floats(1.0, 3.0), st.floats(1.0, 2.0))
def test_quotient_bound_grows_for_log_factor(a, b):
    # Phi(1/t) Phi(t) ~ log(1/t)^b as t -> 0; slower growth (b < 1) hides on the grid
    assert classify(PowerLog(a, b), Property.QUOTIENT_BOUND).verdict is Verdict.GROWS


@FAST
@given(st.one_of(powers, st.just(ExpMinusLinear()), st.just(Entropy())), st.floats(0.01, 20), st.floats(0.01, 20))
def test_young_inequality(phi, s, t):
    assert s * t <= (phi(t) + complementary(phi, s)) * (1 + 1e-9)


@FAST
@given(st.one_of(powers, st.just(ExpMinusLinear()), st.just(Entropy())), st.floats(-3, 3))
def test_complementary_inverse_product(phi, logt):
    t = 10.0**logt
    # the entropy conjugate is exponential, so keep its abscissa small
    grid = np.geomspace(1e-4, 60.0 if isinstance(phi, Entropy) else 1e4, 4001)
    conj = complementary(phi, grid)
    # invert the conjugate on its increasing sample
    inv_conj = float(np.interp(t, conj, grid))
    prod = phi.inverse(t) * inv_conj
    assert t * (1 - 1e-6) <= prod <= 2 * t * (1 + 1e-2)


# ------------------------------------------------------------------ dyadic


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([(0,), (1,)]), st.integers(-6, 0), st.integers(0, 63), st.integers(-6, 0), st.integers(0, 63))
def test_lattice_property(shift, k1, m1, k2, m2):
    a = DyadicCube(shift, k1, (m1 % 2 ** (-k1 + 1),))
    b = DyadicCube(shift, k2, (m2 % 2 ** (-k2 + 1),))
    inter_lo = max(a.lower[0], b.lower[0])
    inter_hi = min(a.upper[0], b.upper[0])
    if inter_lo < inter_hi:
        assert (inter_lo, inter_hi) in ((a.lower[0], a.upper[0]), (b.lower[0], b.upper[0]))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 2), st.data())
def test_cover_contains_with_factor_six(d, data):
    side = Fraction(data.draw(st.integers(1, 256)), 256)
    lower = [Fraction(data.draw(st.integers(0, 4096)), 4096) for _ in range(d)]
    _, R = cover_cube(lower, side)
    assert R.side <= 6 * side
    for lo, rlo, rhi in zip(lower, R.lower, R.upper):
        assert rlo <= lo and lo + side <= rhi


# ------------------------------------------------------------------- field


@FAST
@given(seeds, st.floats(-5, 5))
def test_average_homogeneous(seed, c):
    mesh = Mesh(Window(1, 0), 5)
    f = lognormal(mesh, seed, kind="function")
    sigma = lognormal(mesh, seed + 1)
    Q = DyadicCube((0,), -2, (1,))
    assert math.isclose(average(f.scaled(c), sigma, Q), abs(c) * average(f, sigma, Q), rel_tol=1e-12, abs_tol=1e-300)


@FAST
@given(seeds)
def test_integrate_additive(seed):
    mesh = Mesh(Window(2, 0), 4)
    f = lognormal(mesh, seed, 1.0, "function")
    for cube in mesh.cubes(CubeSet.single((0, 0))):
        if cube.level <= mesh.min_level:
            continue
        kids = [
            DyadicCube((0, 0), cube.level - 1, (2 * cube.index[0] + i, 2 * cube.index[1] + j))
            for i in (0, 1)
            for j in (0, 1)
        ]
        assert math.isclose(integrate(f, cube), sum(integrate(f, k) for k in kids), rel_tol=1e-12)


# ------------------------------------------------------------------- orlicz


@FAST
@given(families, seeds, st.floats(0.01, 100))
def test_norm_homogeneous_and_unit_modular(phi, seed, c):
    mesh = Mesh(Window(1, 0), 5)
    f = lognormal(mesh, seed, 1.0, "function")
    sigma = lognormal(mesh, seed + 7)
    n = luxemburg_norm(phi, f, sigma).value
    assert math.isclose(luxemburg_norm(phi, f.scaled(c), sigma).value, c * n, rel_tol=1e-8)
    assert abs(modular(phi, f.scaled(1 / n), sigma) - 1.0) <= 1e-6


@FAST
@given(st.floats(1.1, 4.0), seeds, st.floats(0.05, 20))
def test_norm_modular_comparison(q, seed, c):
    mesh = Mesh(Window(1, 0), 5)
    f = lognormal(mesh, seed, 1.0, "function").scaled(c)
    one = constant(mesh, 1.0)
    phi = Power(q)
    n = luxemburg_norm(phi, f, one).value
    m = modular(phi, f, one)
    # for powers the modular is exactly norm^q
    assert math.isclose(m, n**q, rel_tol=1e-8)
    assert m <= max(n, n**q) * (1 + 1e-8)
    assert n <= max(m, m ** (1 / q)) * (1 + 1e-8)


# ------------------------------------------------------------------ maximal


@FAST
@given(seeds, st.integers(1, 2), st.sampled_from([0.0, 0.5]))
def test_cube_sets_nested(seed, n, alpha):
    mesh = Mesh(Window(1, 0), 4)
    fs = [lognormal(mesh, seed + i, 1.0, "function") for i in range(n)]
    a = fractional_multilinear_maximal(fs, alpha, CubeSet.single((1,))).field.fine
    b = fractional_multilinear_maximal(fs, alpha, CubeSet("grids")).field.fine
    c = fractional_multilinear_maximal(fs, alpha, CubeSet("mesh")).field.fine
    assert np.all(a <= b * (1 + 1e-13)) and np.all(b <= c * (1 + 1e-13))


@FAST
@given(seeds, st.floats(0.3, 3.0))
def test_level_cubes_partition(seed, lam):
    mesh = Mesh(Window(1, 0), 6)
    sig = [lognormal(mesh, seed)]
    fs = [lognormal(mesh, seed + 1, 1.0, "function")]
    cover = np.zeros(mesh.shape, dtype=int)
    for c in level_cubes(sig, fs, lam):
        cover[mesh.fine_span(c)] += 1
    assert cover.max() <= 1


# ------------------------------------------------------------------ weights


@FAST
@given(seeds)
def test_a_alpha_below_b_alpha(seed):
    mesh = Mesh(Window(1, 0), 5)
    ws = WeightSystem([lognormal(mesh, seed, 1.0), lognormal(mesh, seed + 1, 1.0)], [Power(2), Power(3)])
    omega = lognormal(mesh, seed + 2)
    a = pair_class_constant("A_ALPHA", ws, omega, Power(2), alpha=0.5).value
    b = pair_class_constant("B_ALPHA", ws, omega, Power(2), alpha=0.5).value
    assert a <= b * (1 + 1e-12)


# ----------------------------------------------------------------- carleson


@FAST
@given(seeds, st.sampled_from([(0,), (1,)]))
def test_sparse_sequences_are_carleson(seed, shift):
    mesh = Mesh(Window(1, 0), 7)
    omega = lognormal(mesh, seed, 1.0)
    fam = sparse_decompose([omega], [lognormal(mesh, seed + 1, 1.5, "function")], shift=shift)
    seq = sequence_from_sparse(fam, "weight_E", omega=omega)
    assert carleson_constant(seq, omega, Power(1)).value <= 1 + 1e-12


@FAST
@given(seeds)
def test_fine_and_base_fields_agree(seed):
    mesh = Mesh(Window(1, 0), 4)
    f = lognormal(mesh, seed, kind="function")
    fine = MeshField(mesh, f.fine, 3, "function")
    one = constant(mesh, 1.0)
    assert math.isclose(luxemburg_norm(Power(2), f, one).value, luxemburg_norm(Power(2), fine, one).value, rel_tol=1e-10)
