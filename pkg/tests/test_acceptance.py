"""Acceptance criteria 1-12, one test each, with a PASS/FAIL line per criterion.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest; the
summary lines are printed at the end of the session by ``conftest.py``.
"""

from __future__ import annotations

import contextlib
import math
import time

import numpy as np
import pytest

from orliczlab.carleson import carleson_constant, sequence_from_sparse
from orliczlab.dyadic import CubeSet, DyadicCube, Mesh, Window, cover_cube, validate_sparse
from orliczlab.field import MeshField, constant, integrate, lognormal
from orliczlab.growth import Power, PowerLog
from orliczlab.harness import ExperimentConfig, run_experiment
from orliczlab.maximal import grid_domination, log_maximal, sparse_decompose, weak_type_profile
from orliczlab.orlicz import luxemburg_norm, modular
from orliczlab.weights import WeightSystem, muckenhoupt_constant, pair_class_constant, reverse_holder_check

from . import oracles

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str, budget: float):
    """Time the block, enforce the runtime budget and record a PASS/FAIL line."""
    notes: list[str] = []
    start = time.perf_counter()
    try:
        yield notes
        elapsed = time.perf_counter() - start
        assert elapsed < budget, f"runtime {elapsed:.1f}s over budget {budget:g}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        RESULTS[number] = f"criterion {number:2d}: FAIL  {title} ({elapsed:.1f}s) {type(exc).__name__}: {exc}"
        raise
    detail = "; ".join(notes)
    RESULTS[number] = f"criterion {number:2d}: PASS  {title} ({elapsed:.1f}s){' ' + detail if detail else ''}"


def _random_cube(rng, mesh: Mesh, shift) -> DyadicCube:
    cubes = [c for c in mesh.cubes(CubeSet.single(shift))]
    return cubes[int(rng.integers(len(cubes)))]


def test_criterion_01_indicator_identity():
    with criterion(1, "indicator-norm identity", 10.0) as notes:
        rng = np.random.default_rng(101)
        mesh = Mesh(Window(1, 0), 8)
        cubes = {s: list(mesh.cubes(CubeSet.single(s))) for s in ((0,), (1,))}
        worst = 0.0
        for case in range(100):
            if case % 2:
                phi = Power(float(rng.uniform(1.1, 4.0)))
            else:
                phi = PowerLog(float(rng.uniform(1.0, 3.0)), float(rng.uniform(0.0, 2.0)))
            sigma = lognormal(mesh, int(rng.integers(1 << 30)), float(rng.uniform(0.2, 1.0)))
            pool = cubes[(0,) if rng.uniform() < 0.5 else (1,)]
            Q = pool[int(rng.integers(len(pool)))]
            chi = MeshField(mesh, mesh.mask(Q).astype(float), 3, "function")
            nrm = luxemburg_norm(phi, chi, sigma, tol=1e-13).value
            worst = max(worst, abs(nrm * phi.inverse(1.0 / integrate(sigma, Q)) - 1.0))
        notes.append(f"max deviation {worst:.2e}")
        assert worst <= 1e-8


def test_criterion_02_weak_type():
    with criterion(2, "weak-type constant n/Phi(lam)", 30.0) as notes:
        for n in (1, 2):
            # single level: the bound is exact, so refinement adds nothing
            rep = run_experiment(ExperimentConfig.build("WEAK_TYPE", n=n, trials=50, refine=False))
            ratio = rep.summary["max_ratio"]
            notes.append(f"n={n} max sup/n={ratio:.6f}")
            assert rep.bounded and ratio <= 1 + 1e-9
        # direct check on one instance with an explicit 64-point grid
        mesh = Mesh(Window(1, 0), 8)
        s = lognormal(mesh, 4)
        prof = weak_type_profile([s, s], [lognormal(mesh, 5, 1.0, "function"), lognormal(mesh, 6, 1.0, "function")],
                                 [Power(2), Power(2)], points=64)
        assert prof.lambdas.size == 64 and prof.sup <= 2 * (1 + 1e-9)


def test_criterion_03_cover():
    with criterion(3, "three-lattice cover, factor 6", 5.0) as notes:
        rng = np.random.default_rng(303)
        count = 0
        for i in range(1000):
            d = 1 + i % 2
            side = float(rng.uniform(1e-3, 0.5))
            lower = rng.uniform(-2.0, 2.0, size=d)
            _, R = cover_cube(lower.tolist(), side)
            ok = float(R.side) <= 6 * side and all(
                float(lo) <= x and x + side <= float(hi) for x, lo, hi in zip(lower, R.lower, R.upper)
            )
            count += ok
        notes.append(f"{count}/1000 covered")
        assert count == 1000


def test_criterion_04_sparse():
    with criterion(4, "sparse validity", 60.0) as notes:
        rng = np.random.default_rng(404)
        worst_packing, worst_e = 0.0, math.inf
        for i in range(50):
            d = 1 + i % 2
            mesh = Mesh(Window(d, 0), 7 if d == 1 else 4)
            n = 1 + int(rng.integers(2))
            sig = [lognormal(mesh, int(rng.integers(1 << 30)), 0.5) for _ in range(n)]
            fs = [lognormal(mesh, int(rng.integers(1 << 30)), 1.5, "function") for _ in range(n)]
            fam = sparse_decompose(sig, fs, shift=tuple(int(b) for b in rng.integers(2, size=d)))
            rep = validate_sparse(fam)
            assert rep.ok, rep.as_dict()
            assert rep.packing <= 0.5
            for (cube, _), e in zip(fam.cubes, fam.e_masks):
                worst_e = min(worst_e, int(e.sum()) / int(mesh.mask(cube).sum()))
            worst_packing = max(worst_packing, rep.packing)
        notes.append(f"max packing {worst_packing:.3f}, min |E_Q|/|Q| {worst_e:.3f}")
        assert worst_e >= 0.5


def test_criterion_05_grid_domination():
    with criterion(5, "pointwise grid domination", 120.0) as notes:
        rng = np.random.default_rng(505)
        checked = 0
        for d, L in ((1, 8), (2, 5)):
            mesh = Mesh(Window(d, 0), L)
            for n in (1, 2):
                for alpha in (0.0, d / 2):
                    for _ in range(20):
                        fs = [lognormal(mesh, int(rng.integers(1 << 30)), 1.0, "function") for _ in range(n)]
                        lhs, rhs = grid_domination(fs, alpha)
                        assert np.all(lhs <= rhs), (d, L, n, alpha)
                        checked += 1
        notes.append(f"{checked} instances")


def test_criterion_06_carleson_from_sparse():
    with criterion(6, "Carleson from sparse", 20.0) as notes:
        rng = np.random.default_rng(606)
        worst = 0.0
        for _ in range(20):
            mesh = Mesh(Window(1, 0), 8)
            sigma = lognormal(mesh, int(rng.integers(1 << 30)), 1.0)
            f = lognormal(mesh, int(rng.integers(1 << 30)), 1.5, "function")
            fam = sparse_decompose([sigma], [f], shift=(int(rng.integers(2)),))
            seq = sequence_from_sparse(fam, "weight_E", omega=sigma)
            worst = max(worst, carleson_constant(seq, sigma, Power(1)).value)
        notes.append(f"max Lambda {worst:.12f}")
        assert worst <= 1 + 1e-12


def test_criterion_07_reverse_holder():
    with criterion(7, "reverse-Hoelder power case", 20.0) as notes:
        rng = np.random.default_rng(707)
        L = 6
        mesh = Mesh(Window(1, 0), L)
        cubes = oracles.grid_cubes(1, (0,), L)
        worst = 0.0
        for trial in range(10):
            n = 2 + trial % 2
            ps = [float(rng.uniform(1.2, 4.0)) for _ in range(n)]
            sig = [lognormal(mesh, int(rng.integers(1 << 30)), 1.0) for _ in range(n)]
            rh = reverse_holder_check(WeightSystem(sig, [Power(p) for p in ps]))
            # Hoelder oracle: prod sigma_i(Q)^{-p/p_i} * int prod sigma_i^{p/p_i}
            p = 1.0 / sum(1.0 / q for q in ps)
            arrays = [oracles.fine(s.values, 1) for s in sig]
            fv = mesh.fine_volume
            want = oracles.sup_over(
                cubes,
                lambda sl: float(np.sum(np.prod([a[sl] ** (p / q) for a, q in zip(arrays, ps)], axis=0)))
                * fv
                / math.prod((float(np.sum(a[sl])) * fv) ** (p / q) for a, q in zip(arrays, ps)),
            )
            assert rh.upper == pytest.approx(want, rel=1e-9)
            worst = max(worst, rh.upper)
        one = reverse_holder_check(WeightSystem([lognormal(mesh, 9, 1.0)], [Power(2.5)]))
        notes.append(f"max product {worst:.12f}, n=1 range [{one.lower:.12f}, {one.upper:.12f}]")
        assert worst <= 1 + 1e-9
        assert abs(one.upper - 1) <= 1e-9 and abs(one.lower - 1) <= 1e-9


def test_criterion_08_carleson_embedding():
    with criterion(8, "Carleson embedding stability", 120.0) as notes:
        rep = run_experiment(ExperimentConfig.build("CARLESON_EMBED", trials=50))
        trend = rep.summary["refinement_trend"]
        notes.append(f"max ratio {trend['max_ratio']}, factor {trend['factor']:.4f}")
        assert all(math.isfinite(r["ratio"]) for r in rep.trials)
        assert trend["factor"] <= 2.0 and rep.bounded


def test_criterion_09_sawyer_pq():
    with criterion(9, "Sawyer two-sided, power target", 300.0) as notes:
        rep = run_experiment(ExperimentConfig.build("SAWYER_PQ", n=2, psi="power:p=2", trials=20))
        s = rep.summary
        notes.append(f"max ratio {s['max_ratio']:.4g}, lower floor {s['min_lower_ratio']:.6g}")
        assert rep.bounded, rep.verdict
        assert math.isfinite(s["max_ratio"]) and s["min_lower_ratio"] > 0


def _doob_oracle_ratio(seed: int, L: int = 4) -> float:
    # textbook dyadic maximal function by enumerating every cube containing each cell
    mesh = Mesh(Window(1, 0), L)
    f = lognormal(mesh, seed, 1.5, "function")
    arr = oracles.fine(f.values, 1)
    M = oracles.maximal(oracles.grid_cubes(1, (0,), L), [arr], fine_volume=mesh.fine_volume)
    return float(np.sum(M**2) / np.sum(arr**2))


def test_criterion_10_orlicz_maximal():
    with criterion(10, "dyadic Orlicz maximal boundedness", 120.0) as notes:
        for p in (1.5, 2.0, 3.0):
            rep = run_experiment(ExperimentConfig.build("ORLICZ_MAX_BOUND", phis=(f"power:p={p:g}",), trials=50))
            trend = rep.summary["refinement_trend"]
            notes.append(f"p={p:g} max {rep.summary['max_ratio']:.4f} factor {trend['factor']:.3f}")
            assert rep.bounded, rep.verdict
        oracle = max(_doob_oracle_ratio(seed) for seed in range(30))
        lebesgue = run_experiment(
            ExperimentConfig.build("ORLICZ_MAX_BOUND", sigma="constant:c=1", trials=50, L=6)
        )
        notes.append(f"oracle {oracle:.4f}, sigma=1 max {lebesgue.summary['max_ratio']:.4f}")
        assert oracle <= 4 + 1e-6
        assert lebesgue.summary["max_ratio"] <= 4 + 1e-6


def test_criterion_11_log_maximal():
    with criterion(11, "log-maximal", 60.0) as notes:
        mesh = Mesh(Window(1, 0), 8)
        chi = constant(mesh, 1.0, "function")
        M0 = log_maximal(chi).field
        one = constant(mesh, 1.0)
        for p in (1.0, 2.0, 3.5):
            lhs = modular(Power(p), M0, one) ** (1 / p)
            rhs = modular(Power(p), chi, one) ** (1 / p)
            assert lhs == rhs
        rep = run_experiment(ExperimentConfig.build("LOG_MAX_LP", trials=50))
        trend = rep.summary["refinement_trend"]
        notes.append(f"max ratio {rep.summary['max_ratio']:.4f} factor {trend['factor']:.3f}")
        assert rep.bounded, rep.verdict


def test_criterion_12_trivial_anchors():
    with criterion(12, "class-constant trivial anchors", 5.0) as notes:
        for d in (1, 2):
            mesh = Mesh(Window(d, 0), 5 if d == 1 else 3)
            c = constant(mesh, 2.5)
            one = constant(mesh, 1.0)
            assert muckenhoupt_constant("AP", c, p=3.0).value == 1.0
            assert muckenhoupt_constant("A1", c).value == 1.0
            assert muckenhoupt_constant("DOUBLING", one).value == 2.0**d
            ws = WeightSystem([one], [Power(1)])
            assert pair_class_constant("M", ws, one, Power(1)).value == 1.0
            assert pair_class_constant("A_ALPHA", ws, one, Power(1)).value == 1.0
        notes.append("all exact")


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-q", __file__]))
