"""Seeded experiments that check each inequality on random mesh instances.

Every experiment draws its instances from a per-trial generator seeded with
(seed, trial), evaluates a left and right side, and repeats at level L + 2 so
the growth of the worst ratio under refinement can be judged.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .carleson import (
    CarlesonSequence,
    carleson_constant,
    embedding_sum,
    embedding_sum_normalized,
    sequence_from_sparse,
)
from .dyadic import CubeSet, DyadicCube, Mesh, MeshCube, Window, enumerate_cubes
from .errors import ConfigError, DecompositionError, UsageError
from .field import MeshField, constant, indicator, make_field
from .growth import (
    GrowthFunction,
    Power,
    Property,
    Verdict,
    classify,
    conjugate_table,
    parse_growth,
    product_compose,
    psi_phi_inverse,
    upper_type_index,
)
from .maximal import (
    fractional_multilinear_maximal,
    log_maximal,
    multilinear_weighted_maximal,
    normalized,
    sparse_decompose,
    weak_type_profile,
)
from .orlicz import luxemburg_norm, modular
from .weights import (
    WeightSystem,
    muckenhoupt_constant,
    pair_class_constant,
    reverse_holder_check,
    sawyer_integral,
    w_class_constant,
)

THEOREMS = (
    "WEAK_TYPE",
    "CARLESON_EMBED",
    "CARLESON_CONVERSE",
    "M_CLASS_BOUND",
    "M_CLASS_EQUIV",
    "K_CLASS_EQUIV",
    "SAWYER_SUFF",
    "SAWYER_LOCAL",
    "SAWYER_PQ",
    "S_ALPHA_BOUND",
    "S_ALPHA_NECESSITY",
    "NORM_B",
    "NORM_A",
    "NORM_ATILDE_W",
    "NORM_A_PROD",
    "ORLICZ_MAX_BOUND",
    "LOG_MAX_LP",
)

TWO_SIDED = ("M_CLASS_EQUIV", "K_CLASS_EQUIV", "SAWYER_PQ", "S_ALPHA_NECESSITY")
FRACTIONAL = ("SAWYER_SUFF", "SAWYER_LOCAL", "SAWYER_PQ", "S_ALPHA_BOUND", "S_ALPHA_NECESSITY", "NORM_B", "NORM_A", "NORM_ATILDE_W", "NORM_A_PROD")

EXACT_TOL = 1e-9
STABILITY_FACTOR = 2.0

# theorem-specific defaults layered under the config file
_DEFAULTS: dict[str, dict[str, Any]] = {
    "WEAK_TYPE": dict(n=2, phis=("power:p=2",), sigma_equal=True, L=8, trials=50),
    "CARLESON_EMBED": dict(n=2, phis=("power:p=2", "power:p=3"), psi="power:p=2", L=6, trials=50),
    "CARLESON_CONVERSE": dict(n=2, phis=("power:p=2",), psi="power:p=2", sigma_equal=True, L=6, trials=20),
    "M_CLASS_BOUND": dict(n=2, phis=("power:p=2",), psi="power:p=2", L=8, trials=20),
    "M_CLASS_EQUIV": dict(n=2, phis=("power:p=2",), psi="power:p=2", sigma_equal=True, L=8, trials=20),
    "K_CLASS_EQUIV": dict(n=2, phis=("power:p=2",), psi="power:p=2", L=8, trials=20),
    "SAWYER_SUFF": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20, cube_set="grids"),
    "SAWYER_LOCAL": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20, cube_set="grids"),
    "SAWYER_PQ": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20, cube_set="grids"),
    "S_ALPHA_BOUND": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20, cube_set="grids"),
    "S_ALPHA_NECESSITY": dict(
        n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20, cube_set="grids", sigma_equal=True
    ),
    "NORM_B": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=20),
    "NORM_A": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=10),
    "NORM_ATILDE_W": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=10),
    "NORM_A_PROD": dict(n=2, phis=("power:p=2",), psi="power:p=2", alpha=0.5, L=6, trials=10),
    "ORLICZ_MAX_BOUND": dict(n=1, phis=("power:p=2",), L=8, trials=50),
    "LOG_MAX_LP": dict(n=1, phis=("power:p=2",), L=8, trials=50, f="lognormal:roughness=1"),
}


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    theorem: str
    d: int = 1
    n: int = 1
    L: int = 8
    w: int = 0
    phis: tuple[str, ...] = ("power:p=2",)
    psi: str = "power:p=2"
    alpha: float = 0.0
    sigma: str = "lognormal:roughness=0.5"
    omega: str = "lognormal:roughness=0.5"
    f: str = "mixed:roughness=1"
    sigma_equal: bool = False
    seed: int = 0
    trials: int = 20
    cube_set: str = "single"
    a: float = 2.0
    p: float = 2.0
    samples: int = 16
    refine: bool = True
    jobs: int = field(default_factory=lambda: len(os.sched_getaffinity(0)))
    bound: float | None = None
    output: str | None = None
    formats: tuple[str, ...] = ("json", "csv")
    plots: bool = True

    # ---------------------------------------------------------- construction

    @classmethod
    def build(cls, theorem: str, **overrides) -> "ExperimentConfig":
        theorem = theorem.upper()
        if theorem not in THEOREMS:
            raise ConfigError(f"unknown theorem {theorem!r}")
        values: dict[str, Any] = dict(_DEFAULTS[theorem])
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values["theorem"] = theorem
        cfg = cls(**_coerce(values))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values: dict[str, Any] = {}
        allowed = {"experiment", "growth", "fields", "output"}
        for section in parser.sections():
            if section not in allowed:
                raise ConfigError(f"unknown config section [{section}]")
            for key, val in parser.items(section):
                key = {"path": "output", "window": "w", "l": "L"}.get(key, key)
                values[key] = val
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        if "theorem" not in values:
            raise ConfigError("config lacks [experiment] theorem")
        theorem = str(values.pop("theorem"))
        return cls.build(theorem, **values)

    # ------------------------------------------------------------ accessors

    def validate(self) -> None:
        if self.d < 1 or self.n < 1:
            raise ConfigError("d and n must be positive")
        if self.L < 0:
            raise ConfigError("L must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.alpha < self.n * self.d:
            raise ConfigError(f"alpha must lie in [0, {self.n * self.d})")
        if self.a <= 1:
            raise ConfigError("sparse base a must exceed 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        try:
            self.growth()
            self.cubes()
        except UsageError as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.phis) not in (1, self.n):
            raise ConfigError(f"need 1 or {self.n} growth descriptors for phis")
        for fmt in self.formats:
            if fmt not in ("json", "csv"):
                raise ConfigError(f"unknown output format {fmt!r}")
        _theorem_preconditions(self)

    def growth(self) -> tuple[list[GrowthFunction], GrowthFunction]:
        phis = [parse_growth(t) for t in self.phis]
        if len(phis) == 1:
            phis = phis * self.n
        return phis, parse_growth(self.psi)

    def cubes(self) -> CubeSet:
        return CubeSet.parse(self.cube_set, self.d)

    def mesh(self, level: int | None = None) -> Mesh:
        return Mesh(Window(self.d, self.w), self.L if level is None else level)

    def levels(self) -> list[int]:
        return [self.L, self.L + 2] if self.refine else [self.L]

    def echo(self) -> dict:
        out = asdict(self)
        out["phis"] = list(self.phis)
        out["formats"] = list(self.formats)
        out.pop("jobs")
        out.pop("output")
        return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _split(v) -> tuple[str, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(str(x).strip() for x in v)
    return tuple(x.strip() for x in str(v).split(";") if x.strip())


def _coerce(values: dict) -> dict:
    casts: dict[str, Callable] = {
        "d": int, "n": int, "L": int, "w": int, "seed": int, "trials": int, "samples": int, "jobs": int,
        "alpha": float, "a": float, "p": float,
        "sigma_equal": _bool, "refine": _bool, "plots": _bool,
        "phis": _split, "formats": lambda v: tuple(x.lower() for x in _split(v.replace(",", ";") if isinstance(v, str) else v)),
        "bound": lambda v: None if v in (None, "", "none") else float(v),
    }
    out = {}
    for key, val in values.items():
        try:
            out[key] = casts[key](val) if key in casts else (str(val) if val is not None else None)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    return out


def _theorem_preconditions(cfg: ExperimentConfig) -> None:
    t = cfg.theorem
    if t in ("WEAK_TYPE", "CARLESON_CONVERSE", "M_CLASS_EQUIV") and not cfg.sigma_equal:
        raise ConfigError(f"{t} requires sigma_equal = true (all sigma_i equal)")
    if t == "SAWYER_LOCAL" and cfg.n != 2:
        raise ConfigError("SAWYER_LOCAL is bilinear: n must be 2")
    if t in ("ORLICZ_MAX_BOUND", "LOG_MAX_LP") and cfg.n != 1:
        raise ConfigError(f"{t} is linear: n must be 1")
    if t == "SAWYER_PQ":
        psi = parse_growth(cfg.psi)
        if not (isinstance(psi, Power) and psi.c == 1.0 and psi.p > 1):
            raise ConfigError("SAWYER_PQ needs psi = power:p=q with q > 1")
    if t == "LOG_MAX_LP" and not cfg.p >= 1:
        raise ConfigError("LOG_MAX_LP needs p >= 1")
    if t not in FRACTIONAL and cfg.alpha != 0:
        raise ConfigError(f"{t} has no fractional parameter; alpha must be 0")


# ------------------------------------------------------------- hypotheses


_RATIO_PHI = {
    "CARLESON_EMBED", "CARLESON_CONVERSE", "M_CLASS_BOUND", "M_CLASS_EQUIV",
    "S_ALPHA_BOUND", "S_ALPHA_NECESSITY", "NORM_B", "NORM_A", "NORM_ATILDE_W",
}
_RATIO_PHI_I = {"K_CLASS_EQUIV", "SAWYER_SUFF", "SAWYER_LOCAL", "SAWYER_PQ", "NORM_A_PROD"}
_NABLA2_PHI_I = {
    "CARLESON_EMBED", "M_CLASS_BOUND", "M_CLASS_EQUIV", "K_CLASS_EQUIV", "SAWYER_SUFF",
    "S_ALPHA_BOUND", "NORM_B", "NORM_A", "NORM_ATILDE_W", "NORM_A_PROD", "ORLICZ_MAX_BOUND",
}
_DELTA_PRIME_PSI = {"SAWYER_LOCAL", "M_CLASS_BOUND", "S_ALPHA_BOUND", "NORM_B", "NORM_A", "NORM_A_PROD"}


def check_hypotheses(cfg: ExperimentConfig) -> list[dict]:
    """Classify the growth hypotheses; a 'fails' verdict aborts the experiment."""
    phis, psi = cfg.growth()
    phi = product_compose(phis)
    checks: list[tuple[str, GrowthFunction, Property, GrowthFunction | None]] = []
    t = cfg.theorem
    if t in _RATIO_PHI:
        checks.append(("Psi/Phi nondecreasing", phi, Property.RATIO_MONOTONE, psi))
    if t in _RATIO_PHI_I:
        for i, p in enumerate(phis, 1):
            checks.append((f"Psi/Phi_{i} nondecreasing", p, Property.RATIO_MONOTONE, psi))
    if t in _NABLA2_PHI_I:
        for i, p in enumerate(phis, 1):
            checks.append((f"Phi_{i} in nabla_2", p, Property.NABLA2, None))
    if t in _DELTA_PRIME_PSI:
        checks.append(("Psi in Delta'", psi, Property.DELTA_PRIME, None))
    out = []
    for name, fn, prop, aux in checks:
        rep = classify(fn, prop, aux=aux)
        row = {"hypothesis": name, "function": fn.descriptor(), **rep.as_dict()}
        out.append(row)
        if rep.verdict is Verdict.FAILS:
            raise ConfigError(f"hypothesis failed: {name} ({fn.descriptor()}, estimate {rep.estimate:.6g})")
    return out


# -------------------------------------------------------------- instances


@dataclass
class Instance:
    sigmas: list[MeshField]
    omega: MeshField
    fs: list[MeshField]
    aux: MeshField


def _random_box(mesh: Mesh, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    u = rng.uniform(size=(2, mesh.d))
    side = float(mesh.window.side)
    lo0 = np.array([float(x) for x in mesh.window.lower])
    lo = 0.7 * u[0]
    hi = lo + 0.3 + (0.7 - lo) * u[1]
    return lo0 + side * lo, lo0 + side * hi


def draw_field(mesh: Mesh, spec: str, rng: np.random.Generator, kind: str) -> MeshField:
    """A generator spec realised with fresh randomness; draws are independent of the mesh level."""
    seed = int(rng.integers(2**31 - 1))
    lo, hi = _random_box(mesh, rng)
    name, _, body = spec.partition(":")
    if name in ("randbox", "mixed"):
        box = indicator(mesh, lo, hi, kind="function").values
        if name == "randbox":
            values = box
        else:
            rough = 1.0
            for item in filter(None, body.split(",")):
                key, _, val = item.partition("=")
                if key.strip() != "roughness":
                    raise UsageError(f"bad mixed parameter {item!r}")
                rough = float(val)
            values = box * make_field(mesh, f"lognormal:roughness={rough}", kind="function", seed=seed).values
        return MeshField(mesh, np.maximum(values, 1e-12) if kind == "weight" else values, 1, kind)
    return make_field(mesh, spec, kind=kind, seed=seed)


def draw_instance(cfg: ExperimentConfig, mesh: Mesh, rng: np.random.Generator) -> Instance:
    if cfg.sigma_equal:
        s = draw_field(mesh, cfg.sigma, rng, "weight")
        sigmas = [s] * cfg.n
    else:
        sigmas = [draw_field(mesh, cfg.sigma, rng, "weight") for _ in range(cfg.n)]
    omega = draw_field(mesh, cfg.omega, rng, "weight")
    fs = [draw_field(mesh, cfg.f, rng, "function") for _ in range(cfg.n)]
    aux = draw_field(mesh, cfg.f, rng, "function")
    return Instance(sigmas, omega, fs, aux)


def identity_instance(cfg: ExperimentConfig, mesh: Mesh) -> Instance:
    one = constant(mesh, 1.0)
    f = constant(mesh, 1.0, "function")
    return Instance([one] * cfg.n, one, [f] * cfg.n, f)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def sample_cubes(mesh: Mesh, cube_set: CubeSet, rng: np.random.Generator, count: int, max_depth: int = 4):
    """Random test cubes: a point and a depth below the window, realised in the cube set.

    The draws do not depend on the mesh level, so L and L + 2 see the same cubes
    whenever the level allows it.
    """
    out = []
    win = mesh.window
    for _ in range(count):
        u = rng.uniform(size=mesh.d)
        depth = int(rng.integers(0, max_depth + 1))
        flags = tuple(int(x) for x in rng.integers(0, 2, size=mesh.d))
        k = max(win.level - depth, mesh.min_level)
        if cube_set.kind == "mesh":
            side = mesh.n_fine // 2 ** (win.level - k)
            lower = tuple(int(x) for x in np.minimum((u * mesh.n_fine).astype(int), mesh.n_fine - side))
            out.append(MeshCube(lower, side))
            continue
        shift = cube_set.shift if cube_set.kind == "single" else flags
        out.append(_cube_near(mesh, shift, k, u))
    return out


def _cube_near(mesh: Mesh, shift: tuple[int, ...], k: int, u: np.ndarray) -> DyadicCube:
    """Grid cube of level k inside the window containing (or nearest to) the point u."""
    win = mesh.window
    point = [float(l) + float(win.side) * x for l, x in zip(win.lower, u)]
    while True:
        cands = list(enumerate_cubes(win, shift, k, k))
        if cands:
            break
        k -= 1
    best, dist = cands[0], math.inf
    for c in cands:
        centre = [float(l) + float(c.side) / 2 for l in c.lower]
        dd = sum((a - b) ** 2 for a, b in zip(centre, point))
        if dd < dist:
            best, dist = c, dd
    return best


# --------------------------------------------------------------- trial math


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


def _product_fields(sigmas: Sequence[MeshField], gs: Sequence[MeshField]) -> list[MeshField]:
    out = []
    for s, g in zip(sigmas, gs):
        if s.sub == g.sub:
            out.append(MeshField(s.mesh, s.values * g.values, s.sub, "function"))
        else:
            out.append(MeshField(s.mesh, s.fine * g.fine, 3, "function"))
    return out


class _Ctx:
    """Everything a trial needs, with the class constants computed lazily once."""

    def __init__(self, cfg: ExperimentConfig, inst: Instance, mesh: Mesh):
        self.cfg = cfg
        self.inst = inst
        self.mesh = mesh
        self.phis, self.psi = cfg.growth()
        self.phi = product_compose(self.phis)
        self.cs = cfg.cubes()
        self.ws = WeightSystem(list(inst.sigmas), list(self.phis))
        self._cache: dict = {}

    def const(self, kind: str) -> float:
        if kind not in self._cache:
            c = self.cfg
            if kind == "W":
                val = w_class_constant(self.ws, self.psi, self.cs).value
            elif kind == "A_TILDE_PHI":
                conj = [conjugate_table(p) for p in self.phis]
                wsc = WeightSystem(list(self.inst.sigmas), conj)
                val = pair_class_constant("A_TILDE_ALPHA", wsc, self.inst.omega, self.psi, self.cs, c.alpha).value
            else:
                val = pair_class_constant(kind, self.ws, self.inst.omega, self.psi, self.cs, c.alpha).value
            self._cache[kind] = val
        return self._cache[kind]

    def ainf(self) -> list[float]:
        if "AINF" not in self._cache:
            self._cache["AINF"] = [muckenhoupt_constant("A_INF_FW", s, self.cs).value for s in self.inst.sigmas]
        return self._cache["AINF"]

    def normalized(self) -> list[MeshField]:
        return normalized(self.phis, self.inst.sigmas, self.inst.fs)

    def weighted_norm(self, gs: Sequence[MeshField], cube_set: CubeSet | None = None) -> float:
        M = multilinear_weighted_maximal(self.inst.sigmas, gs, cube_set or self.cs).field
        return luxemburg_norm(self.psi, M, self.inst.omega).value

    def fractional_norm(self, gs: Sequence[MeshField], cube_set: CubeSet | None = None) -> float:
        M = fractional_multilinear_maximal(_product_fields(self.inst.sigmas, gs), self.cfg.alpha, cube_set or self.cs).field
        return luxemburg_norm(self.psi, M, self.inst.omega).value


def _masses(ctx: _Ctx, sl) -> list[float]:
    fv = ctx.mesh.fine_volume
    return [math.fsum(s.fine[sl].ravel().tolist()) * fv for s in ctx.inst.sigmas]


def _indicator_inputs(ctx: _Ctx, sl) -> list[MeshField]:
    """chi_R / ||chi_R||_{Phi_i, sigma_i} with the closed-form norm."""
    out = []
    for phi, m in zip(ctx.phis, _masses(ctx, sl)):
        arr = np.zeros(ctx.mesh.shape)
        arr[sl] = phi.inverse(1.0 / m)
        out.append(MeshField(ctx.mesh, arr, 3, "function"))
    return out


def _contribution(ctx: _Ctx, kind: str, sl) -> float:
    """The class expression of one cube R, before the supremum."""
    mesh, fv = ctx.mesh, ctx.mesh.fine_volume
    w = ctx.inst.omega.fine
    om = math.fsum(w[sl].ravel().tolist()) * fv
    masses = _masses(ctx, sl)
    nu_mass = math.fsum(ctx.ws.nu.fine[sl].ravel().tolist()) * fv
    if kind == "M":
        return om * ctx.psi(ctx.phi.inverse(1.0 / nu_mass))
    if kind == "K":
        out = om
        for phi, m in zip(ctx.phis, masses):
            out *= ctx.psi(phi.inverse(1.0 / m))
        return out
    integral = sawyer_integral(mesh, [s.fine for s in ctx.inst.sigmas], w, ctx.psi, sl, ctx.cfg.alpha)
    if kind == "L_ALPHA":
        pre = 1.0
        for phi, m in zip(ctx.phis, masses):
            pre *= ctx.psi(phi.inverse(1.0 / m))
        return pre * integral
    if kind == "S_ALPHA":
        return ctx.psi(ctx.phi.inverse(1.0 / nu_mass)) * integral
    raise UsageError(f"no indicator contribution for {kind}")


_LOWER_KIND = {"M_CLASS_EQUIV": "M", "K_CLASS_EQUIV": "K", "SAWYER_PQ": "L_ALPHA", "S_ALPHA_NECESSITY": "S_ALPHA"}


@dataclass
class LowerProfile:
    cubes: list[str]
    operator: list[float]
    contribution: list[float]

    @property
    def ratios(self) -> list[float]:
        return [_ratio(a, b) for a, b in zip(self.operator, self.contribution)]

    @property
    def min(self) -> float:
        return min(self.ratios) if self.ratios else math.nan

    @property
    def max(self) -> float:
        return max(self.ratios) if self.ratios else math.nan


def _lower_profile(ctx: _Ctx, cubes) -> LowerProfile:
    kind = _LOWER_KIND[ctx.cfg.theorem]
    prof = LowerProfile([], [], [])
    for R in cubes:
        sl = ctx.mesh.slices(R)
        gs = _indicator_inputs(ctx, sl)
        if kind in ("M", "K"):
            op = ctx.weighted_norm(gs)
        else:
            op = ctx.fractional_norm(gs)
        prof.cubes.append(R.descriptor())
        prof.operator.append(op)
        prof.contribution.append(float(ctx.psi.inverse(_contribution(ctx, kind, sl))))
    return prof


def testing_function_lower_bound(
    cfg: ExperimentConfig,
    trial: int = 0,
    level: int | None = None,
    cubes: Sequence[DyadicCube | MeshCube] | None = None,
    instance: Instance | None = None,
) -> LowerProfile:
    """Operator norm on chi_R/||chi_R|| against Psi^{-1} of the class expression at R."""
    if cfg.theorem not in _LOWER_KIND:
        raise ConfigError(f"{cfg.theorem} has no indicator lower bound")
    mesh = cfg.mesh(level)
    rng = _trial_rng(cfg.seed, trial)
    inst = instance or draw_instance(cfg, mesh, rng)
    ctx = _Ctx(cfg, inst, mesh)
    if cubes is None:
        cubes = sample_cubes(mesh, ctx.cs, rng, cfg.samples)
    return _lower_profile(ctx, cubes)


# ------------------------------------------------------------ the runners


def _run_weak_type(ctx: _Ctx, rng):
    shift = ctx.cs.shift if ctx.cs.kind == "single" else None
    prof = weak_type_profile(ctx.inst.sigmas, ctx.inst.fs, ctx.phis, ctx.phi, shift=shift)
    return prof.sup, float(ctx.cfg.n), {}


def _carleson_sequence(ctx: _Ctx, rng, weights: bool) -> CarlesonSequence:
    shift = ctx.cs.shift if ctx.cs.kind == "single" else (0,) * ctx.mesh.d
    try:
        fam = sparse_decompose([ctx.inst.sigmas[0]], [ctx.inst.aux], ctx.cfg.a, shift)
    except DecompositionError:
        fam = None
    seq = sequence_from_sparse(fam, "weight_E", omega=ctx.ws.nu) if fam is not None and len(fam) else CarlesonSequence(shift)
    salt = int(rng.integers(2**31 - 1))
    if weights:
        # a positive multiplier per cube, keyed by the cube so both levels agree
        for cube in seq.entries:
            key = zlib.crc32(cube.descriptor().encode())
            seq.entries[cube] *= 0.5 + float(np.random.default_rng([salt, key]).uniform())
    return seq


def _run_carleson_embed(ctx: _Ctx, rng):
    seq = _carleson_sequence(ctx, rng, weights=False)
    theta = psi_phi_inverse(ctx.psi, ctx.phi)
    lam = carleson_constant(seq, ctx.ws.nu, theta)
    emb = embedding_sum(seq, ctx.psi, ctx.inst.sigmas, ctx.inst.fs, ctx.phis) if seq.entries else 0.0
    return emb, lam.value, {"cubes": len(seq)}


def _run_carleson_converse(ctx: _Ctx, rng):
    seq = _carleson_sequence(ctx, rng, weights=True)
    theta = psi_phi_inverse(ctx.psi, ctx.phi)
    lam = carleson_constant(seq, ctx.ws.nu, theta)
    c2 = 0.0
    for R in ctx.mesh.cubes(CubeSet.single(seq.shift)):
        gs = _indicator_inputs(ctx, ctx.mesh.fine_span(R))
        c2 = max(c2, embedding_sum_normalized(seq, ctx.psi, ctx.inst.sigmas, gs))
    rh = reverse_holder_check(ctx.ws, CubeSet.single(seq.shift))
    return lam.value, c2, {"cubes": len(seq), "reverse_holder_lower": rh.lower, "reverse_holder_upper": rh.upper}


def _run_weighted_class(kind: str):
    def run(ctx: _Ctx, rng):
        lhs = ctx.weighted_norm(ctx.normalized())
        extra = {"constant": ctx.const(kind)}
        if kind == "K":
            extra["doubling"] = [muckenhoupt_constant("DOUBLING", s, ctx.cs).value for s in ctx.inst.sigmas]
        return lhs, float(ctx.psi.inverse(ctx.const(kind))), extra

    return run


def _run_fractional(rhs_fn: Callable[[_Ctx], float]):
    def run(ctx: _Ctx, rng):
        lhs = ctx.fractional_norm(ctx.normalized())
        inner = rhs_fn(ctx)
        return lhs, float(ctx.psi.inverse(inner)), {"class_product": inner}

    return run


def _run_sawyer_local(ctx: _Ctx, rng):
    single = ctx.cs if ctx.cs.kind == "single" else CubeSet.single((0,) * ctx.mesh.d)
    R = sample_cubes(ctx.mesh, single, rng, 1, max_depth=3)[0]
    sl = ctx.mesh.fine_span(R)
    mesh = ctx.mesh
    s1, s2 = ctx.inst.sigmas
    chi = np.zeros(mesh.shape)
    chi[sl] = 1.0
    g = ctx.inst.fs[1].fine * chi
    if not np.any(g):
        g = chi.copy()
    gf = MeshField(mesh, g, 3, "function")
    gf = gf.scaled(1.0 / luxemburg_norm(ctx.phis[1], gf, s2).value)
    inputs = [MeshField(mesh, chi * s1.fine, 3, "function"), MeshField(mesh, gf.fine * s2.fine, 3, "function")]
    M = fractional_multilinear_maximal(inputs, ctx.cfg.alpha, single).field.fine
    w = ctx.inst.omega.fine
    lhs = math.fsum((ctx.psi(M[sl]) * w[sl]).ravel().tolist()) * mesh.fine_volume
    m1 = math.fsum(s1.fine[sl].ravel().tolist()) * mesh.fine_volume
    rhs = ctx.const("L_ALPHA") / float(ctx.psi(ctx.phis[0].inverse(1.0 / m1)))
    return lhs, rhs, {"cube": R.descriptor(), "constant": ctx.const("L_ALPHA")}


def _run_orlicz_max(ctx: _Ctx, rng):
    s, f = ctx.inst.sigmas[0], ctx.inst.fs[0]
    M = multilinear_weighted_maximal([s], [f], ctx.cs).field
    return modular(ctx.phis[0], M, s), modular(ctx.phis[0], f, s), {}


def _lp_norm(f: MeshField, p: float) -> float:
    one = constant(f.mesh, 1.0)
    return modular(Power(p), f, one) ** (1.0 / p)


def _run_log_max(ctx: _Ctx, rng):
    f = ctx.inst.fs[0]
    f = f.with_values(np.abs(f.values))
    M0 = log_maximal(f, ctx.cs).field
    return _lp_norm(M0, ctx.cfg.p), _lp_norm(f, ctx.cfg.p), {}


RUNNERS: dict[str, Callable] = {
    "WEAK_TYPE": _run_weak_type,
    "CARLESON_EMBED": _run_carleson_embed,
    "CARLESON_CONVERSE": _run_carleson_converse,
    "M_CLASS_BOUND": _run_weighted_class("M"),
    "M_CLASS_EQUIV": _run_weighted_class("M"),
    "K_CLASS_EQUIV": _run_weighted_class("K"),
    "SAWYER_SUFF": _run_fractional(lambda c: c.const("L_ALPHA")),
    "SAWYER_LOCAL": _run_sawyer_local,
    "SAWYER_PQ": _run_fractional(lambda c: c.const("L_ALPHA")),
    "S_ALPHA_BOUND": _run_fractional(lambda c: c.const("S_ALPHA")),
    "S_ALPHA_NECESSITY": _run_fractional(lambda c: c.const("S_ALPHA")),
    "NORM_B": _run_fractional(lambda c: c.const("B_ALPHA")),
    "NORM_A": _run_fractional(
        lambda c: c.const("A_ALPHA") * math.fsum(float(psi_phi_inverse(c.psi, c.phi)(a)) for a in c.ainf())
    ),
    "NORM_ATILDE_W": _run_fractional(lambda c: c.const("W") * c.const("A_TILDE_PHI")),
    "NORM_A_PROD": _run_fractional(
        lambda c: c.const("A_ALPHA")
        * math.prod(
            a ** upper_type_index(psi_phi_inverse(c.psi, p)) for a, p in zip(c.ainf(), c.phis)
        )
    ),
    "ORLICZ_MAX_BOUND": _run_orlicz_max,
    "LOG_MAX_LP": _run_log_max,
}


def exact_bounds(cfg: ExperimentConfig) -> tuple[float | None, float | None]:
    """(upper bound on ratio, lower bound on the indicator ratio) where one is provable."""
    if cfg.bound is not None:
        return cfg.bound, None
    t = cfg.theorem
    if t in ("WEAK_TYPE", "CARLESON_CONVERSE"):
        return 1.0, None
    if t == "ORLICZ_MAX_BOUND":
        phi = parse_growth(cfg.phis[0])
        if isinstance(phi, Power) and phi.p > 1:
            conj = phi.p / (phi.p - 1)
            return conj**phi.p, None
    if t == "SAWYER_PQ" and cfg.cubes().kind != "single":
        return None, 1.0
    return None, None


def run_trial(cfg: ExperimentConfig, level: int, trial: int, identity: bool = False) -> dict:
    """One instance at one mesh level; pure function of (cfg, level, trial)."""
    mesh = cfg.mesh(level)
    rng = _trial_rng(cfg.seed, trial)
    inst = identity_instance(cfg, mesh) if identity else draw_instance(cfg, mesh, rng)
    ctx = _Ctx(cfg, inst, mesh)
    lhs, rhs, extra = RUNNERS[cfg.theorem](ctx, rng)
    row = {"trial": trial, "level": level, "lhs": float(lhs), "rhs": float(rhs), "ratio": _ratio(lhs, rhs)}
    if cfg.theorem == "WEAK_TYPE":
        row["ratio"] = _ratio(lhs, rhs)
    if cfg.theorem in TWO_SIDED:
        cubes = sample_cubes(mesh, ctx.cs, rng, cfg.samples)
        prof = _lower_profile(ctx, cubes)
        row["lower_min"] = prof.min
        row["lower_max"] = prof.max
    if extra:
        row["extra"] = extra
    return row


def _run_trial_args(args) -> dict:
    return run_trial(*args)


# ------------------------------------------------------------------ reports


@dataclass
class ExperimentReport:
    theorem_id: str
    seed: int
    config: dict
    trials: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    verdict: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def bounded(self) -> bool:
        return self.verdict.get("status") == "bounded"

    def as_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "seed": self.seed,
            "config": self.config,
            "trials": self.trials,
            "summary": self.summary,
            "verdict": self.verdict,
            "provenance": self.provenance,
        }


def summarize(cfg: ExperimentConfig, rows: list[dict]) -> tuple[dict, dict]:
    upper, lower = exact_bounds(cfg)
    levels = cfg.levels()
    by_level = {lv: [r for r in rows if r["level"] == lv] for lv in levels}
    ratios = [r["ratio"] for r in rows]
    summary: dict[str, Any] = {
        "max_ratio": max(ratios) if ratios else 0.0,
        "median_ratio": float(np.median(ratios)) if ratios else 0.0,
        "exact_upper_bound": upper,
        "exact_lower_bound": lower,
    }
    trend: dict[str, Any] = {
        "levels": levels,
        "max_ratio": [max((r["ratio"] for r in by_level[lv]), default=0.0) for lv in levels],
    }
    two = cfg.theorem in TWO_SIDED
    if two:
        lows = [r["lower_min"] for r in rows]
        summary["min_lower_ratio"] = min(lows) if lows else math.nan
        summary["max_lower_ratio"] = max(r["lower_max"] for r in rows) if rows else math.nan
        trend["min_lower_ratio"] = [min((r["lower_min"] for r in by_level[lv]), default=math.nan) for lv in levels]
    if len(levels) == 2:
        a, b = trend["max_ratio"]
        trend["factor"] = _ratio(b, a) if a > 0 or b > 0 else 1.0
        if two:
            la, lb = trend["min_lower_ratio"]
            trend["lower_factor"] = _ratio(la, lb) if lb > 0 else math.inf
    summary["refinement_trend"] = trend

    verdict = {"status": "bounded", "trial": None, "level": None, "reason": "all ratios finite"}

    def violate(row, reason):
        verdict.update(status="violated", trial=row["trial"] if row else None, level=row["level"] if row else None, reason=reason)

    for r in rows:
        if not math.isfinite(r["ratio"]):
            violate(r, "non-finite ratio")
            break
        if upper is not None and r["ratio"] > upper * (1 + EXACT_TOL):
            violate(r, f"ratio exceeds exact bound {upper!r}")
            break
        if two:
            low = r["lower_min"]
            if not (math.isfinite(low) and low > 0):
                violate(r, "indicator lower ratio not positive")
                break
            if lower is not None and low < lower * (1 - EXACT_TOL):
                violate(r, f"indicator lower ratio below exact bound {lower!r}")
                break
    if verdict["status"] == "bounded" and len(levels) == 2:
        if trend["factor"] > STABILITY_FACTOR:
            violate(None, f"max ratio grew by {trend['factor']:.4g} under refinement")
        elif two and trend["lower_factor"] > STABILITY_FACTOR:
            violate(None, f"lower ratio shrank by {trend['lower_factor']:.4g} under refinement")
    if verdict["status"] == "bounded":
        parts = ["all ratios finite"]
        if upper is not None or lower is not None:
            parts.append("exact bound respected")
        if len(levels) == 2:
            parts.append("refinement-stable")
        verdict["reason"] = ", ".join(parts)
    return summary, verdict


_BASELINE = {"WEAK_TYPE", "M_CLASS_BOUND", "M_CLASS_EQUIV", "K_CLASS_EQUIV", "SAWYER_SUFF", "SAWYER_PQ", "S_ALPHA_BOUND",
             "NORM_B", "NORM_A", "NORM_A_PROD", "ORLICZ_MAX_BOUND", "LOG_MAX_LP"}


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> ExperimentReport:
    """All trials at L (and L + 2), summary, verdict and provenance."""
    hyps = check_hypotheses(cfg)
    jobs = jobs or cfg.jobs
    tasks = [(cfg, lv, t) for lv in cfg.levels() for t in range(cfg.trials)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_trial_args, tasks))
    else:
        rows = [run_trial(*t) for t in tasks]
    summary, verdict = summarize(cfg, rows)
    if cfg.theorem in _BASELINE:
        base = run_trial(cfg, cfg.L, 0, identity=True)
        summary["identity_ratio"] = base["ratio"]
    provenance = {
        "seed": cfg.seed,
        "artifact_version": __version__,
        "rng": "numpy default_rng([seed, trial])",
        "hypotheses": hyps,
    }
    return ExperimentReport(cfg.theorem, cfg.seed, cfg.echo(), rows, summary, verdict, provenance)


# ------------------------------------------------------------ serialization


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def report_json(report: ExperimentReport) -> str:
    return json.dumps(_clean(report.as_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"


CSV_COLUMNS = ("trial", "level", "lhs", "rhs", "ratio", "lower_min", "lower_max")


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.trials:
        writer.writerow([_cell(row.get(c, "")) for c in CSV_COLUMNS])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_report(report: ExperimentReport, fmt: str, path: str | Path) -> Path:
    path = Path(path)
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise UsageError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


_NUM = {"oneOf": [{"type": "number"}, {"type": "string", "enum": ["inf", "-inf", "nan"]}]}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["theorem_id", "seed", "config", "trials", "summary", "verdict", "provenance"],
    "properties": {
        "theorem_id": {"type": "string", "enum": list(THEOREMS)},
        "seed": {"type": "integer"},
        "config": {"type": "object"},
        "trials": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["trial", "level", "lhs", "rhs", "ratio"],
                "properties": {
                    "trial": {"type": "integer"},
                    "level": {"type": "integer"},
                    "lhs": _NUM,
                    "rhs": _NUM,
                    "ratio": _NUM,
                    "lower_min": _NUM,
                    "lower_max": _NUM,
                },
            },
        },
        "summary": {
            "type": "object",
            "required": ["max_ratio", "median_ratio", "refinement_trend"],
            "properties": {"max_ratio": _NUM, "median_ratio": _NUM, "refinement_trend": {"type": "object"}},
        },
        "verdict": {
            "type": "object",
            "required": ["status"],
            "properties": {"status": {"enum": ["bounded", "violated"]}},
        },
        "provenance": {"type": "object", "required": ["seed", "artifact_version"]},
    },
}


def validate_report(path: str | Path) -> dict:
    """Parse a JSON or CSV report and check it against the schema; returns the parsed content."""
    import jsonschema

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read report {path}: {exc}") from exc
    if path.suffix == ".csv":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_COLUMNS:
            raise UsageError(f"{path}: unexpected CSV header")
        for row in rows[1:]:
            if len(row) != len(CSV_COLUMNS):
                raise UsageError(f"{path}: ragged CSV row")
        return {"trials": len(rows) - 1}
    try:
        data = json.loads(text)
        jsonschema.validate(data, REPORT_SCHEMA)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise UsageError(f"{path}: invalid report ({exc.__class__.__name__}: {str(exc).splitlines()[0]})") from exc
    return data
