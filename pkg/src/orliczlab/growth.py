"""Growth functions: evaluation, inversion, classification and composition.

A growth function is a continuous nondecreasing map of [0, inf) onto itself
with value 0 at 0.  Every family below evaluates on numpy arrays and returns
a float for scalar input.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BracketOverflowError,
    DegenerateFunctionError,
    DomainError,
    FieldFormatError,
    UnboundedError,
    UsageError,
)

DEFAULT_TOL = 1e-12
_TINY = np.finfo(float).tiny


def _as_input(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
        raise DomainError("growth functions take finite nonnegative arguments")
    return arr, arr.ndim == 0


def _out(values: np.ndarray, scalar: bool):
    if scalar:
        return float(values)
    return values


def solve_increasing(func: Callable[[np.ndarray], np.ndarray], y, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised solve of func(t) = y for a nondecreasing func with func(0) = 0.

    The bracket starts at 1 and is doubled (or halved) until it encloses the
    target, then refined by geometric bisection.  Returns the endpoint with
    the smaller residual.
    """
    if not tol > 0:
        raise UsageError("tolerance must be positive")
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.shape)
    mask = y > 0
    if not mask.any():
        return out
    target = y[mask]
    lo = np.ones_like(target)
    hi = np.ones_like(target)
    f_hi = func(hi)
    f_lo = f_hi.copy()
    for _ in range(1100):
        up = f_hi < target
        if not up.any():
            break
        lo[up] = hi[up]
        f_lo[up] = f_hi[up]
        hi[up] *= 2.0
        if not np.all(np.isfinite(hi)):
            raise BracketOverflowError("no bracket below 2^1024")
        f_hi[up] = func(hi[up])
    else:
        raise BracketOverflowError("no bracket below 2^1024")
    for _ in range(1100):
        down = f_lo > target
        if not down.any():
            break
        hi[down] = lo[down]
        f_hi[down] = f_lo[down]
        lo[down] *= 0.5
        f_lo[down] = func(lo[down])
    scale = tol * np.maximum(target, _TINY)
    for _ in range(2200):
        done = (np.abs(f_hi - target) <= scale) | (np.abs(f_lo - target) <= scale)
        done |= hi <= lo * (1 + 4e-16)
        active = ~done
        if not active.any():
            break
        a_lo, a_hi = lo[active], hi[active]
        mid = np.where(a_lo > 0, np.sqrt(a_lo * a_hi), 0.5 * a_hi)
        # geometric mean can collapse onto an endpoint in the last ulp
        mid = np.where((mid <= a_lo) | (mid >= a_hi), 0.5 * (a_lo + a_hi), mid)
        f_mid = func(mid)
        below = f_mid < target[active]
        idx = np.flatnonzero(active)
        lo[idx[below]] = mid[below]
        f_lo[idx[below]] = f_mid[below]
        hi[idx[~below]] = mid[~below]
        f_hi[idx[~below]] = f_mid[~below]
    out[mask] = np.where(np.abs(f_hi - target) <= np.abs(f_lo - target), hi, lo)
    return out


class GrowthFunction:
    """Common interface: call to evaluate, ``inverse`` to invert, ``log`` for log-values."""

    def __call__(self, t):
        arr, scalar = _as_input(t)
        with np.errstate(over="ignore"):
            return _out(self._eval(arr), scalar)

    def log(self, t):
        """log Phi(t), computed without overflow where the family allows it."""
        arr, scalar = _as_input(t)
        with np.errstate(over="ignore", divide="ignore"):
            return _out(self._log(arr), scalar)

    def inverse(self, y, tol: float = DEFAULT_TOL):
        if not tol > 0:
            raise UsageError("tolerance must be positive")
        arr, scalar = _as_input(y)
        with np.errstate(over="ignore"):
            return _out(self._inverse(arr, tol), scalar)

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log(self, t: np.ndarray) -> np.ndarray:
        return np.log(self._eval(t))

    def _inverse(self, y: np.ndarray, tol: float) -> np.ndarray:
        return solve_increasing(self._eval, y, tol)

    def descriptor(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.descriptor()


def _num(x: float) -> str:
    return repr(float(x)).removesuffix(".0") if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class Power(GrowthFunction):
    """c * t**p."""

    p: float
    c: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 0 and math.isfinite(self.c) and self.c > 0):
            raise UsageError("power family needs finite p > 0 and c > 0")

    def _eval(self, t):
        return self.c * t**self.p

    def _log(self, t):
        return math.log(self.c) + self.p * np.log(t)

    def _inverse(self, y, tol):
        return (y / self.c) ** (1.0 / self.p)

    def descriptor(self) -> str:
        if self.c == 1.0:
            return f"power:p={_num(self.p)}"
        return f"power:p={_num(self.p)},c={_num(self.c)}"


@dataclass(frozen=True)
class PowerLog(GrowthFunction):
    """t**a * log(1+t)**b."""

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a > 0 and self.b >= 0):
            raise UsageError("power-log family needs a > 0 and b >= 0")

    def _eval(self, t):
        return t**self.a * np.log1p(t) ** self.b

    def _log(self, t):
        return self.a * np.log(t) + self.b * np.log(np.log1p(t))

    def descriptor(self) -> str:
        return f"powerlog:a={_num(self.a)},b={_num(self.b)}"


@dataclass(frozen=True)
class ExpMinusLinear(GrowthFunction):
    """exp(t) - t - 1."""

    def _eval(self, t):
        small = t < 1e-3
        series = t * t * (0.5 + t * (1 / 6 + t * (1 / 24 + t / 120)))
        return np.where(small, series, np.expm1(t) - t)

    def _log(self, t):
        big = t > 30
        tb = np.where(big, t, 0.0)
        tail = tb + np.log1p(-(1 + tb) * np.exp(-tb))
        return np.where(big, tail, np.log(self._eval(np.where(big, 1.0, t))))

    def descriptor(self) -> str:
        return "expml"


@dataclass(frozen=True)
class Entropy(GrowthFunction):
    """(1+t) log(1+t) - t."""

    def _eval(self, t):
        small = t < 1e-3
        series = t * t * (0.5 - t * (1 / 6 - t * (1 / 12 - t / 20)))
        return np.where(small, series, (1 + t) * np.log1p(t) - t)

    def descriptor(self) -> str:
        return "entropy"


@dataclass(frozen=True)
class Tabulated(GrowthFunction):
    """Log-log linear interpolation of samples, pure powers outside the table."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    source: str = ""

    def __post_init__(self):
        x = np.asarray(self.xs, dtype=float)
        y = np.asarray(self.ys, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != y.shape:
            raise UsageError("table needs at least two (x, y) samples")
        if np.any(x <= 0) or np.any(y <= 0) or np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise UsageError("table samples must be positive and strictly increasing")
        lx, ly = np.log(x), np.log(y)
        object.__setattr__(self, "_lx", lx)
        object.__setattr__(self, "_ly", ly)
        object.__setattr__(self, "_s0", (ly[1] - ly[0]) / (lx[1] - lx[0]))
        object.__setattr__(self, "_s1", (ly[-1] - ly[-2]) / (lx[-1] - lx[-2]))

    def _log(self, t):
        lx, ly = self._lx, self._ly
        lt = np.log(t)
        inner = np.interp(lt, lx, ly)
        left = ly[0] + self._s0 * (lt - lx[0])
        right = ly[-1] + self._s1 * (lt - lx[-1])
        return np.where(lt < lx[0], left, np.where(lt > lx[-1], right, inner))

    def _eval(self, t):
        with np.errstate(divide="ignore"):
            return np.where(t > 0, np.exp(self._log(np.where(t > 0, t, 1.0))), 0.0)

    def _inverse(self, y, tol):
        lx, ly = self._lx, self._ly
        with np.errstate(divide="ignore"):
            lv = np.log(np.where(y > 0, y, 1.0))
        inner = np.interp(lv, ly, lx)
        left = lx[0] + (lv - ly[0]) / self._s0
        right = lx[-1] + (lv - ly[-1]) / self._s1
        lt = np.where(lv < ly[0], left, np.where(lv > ly[-1], right, inner))
        return np.where(y > 0, np.exp(lt), 0.0)

    def descriptor(self) -> str:
        return f"table:{self.source}" if self.source else "table:<inline>"

    @classmethod
    def from_csv(cls, path: str | Path) -> "Tabulated":
        xs, ys = [], []
        try:
            with open(path, newline="") as fh:
                for row in csv.reader(fh):
                    if not row or row[0].lstrip().startswith("#"):
                        continue
                    xs.append(float(row[0]))
                    ys.append(float(row[1]))
        except (OSError, ValueError, IndexError) as exc:
            raise FieldFormatError(f"cannot read growth table {path}: {exc}") from exc
        return cls(tuple(xs), tuple(ys), str(path))


@dataclass(frozen=True)
class ProductInverse(GrowthFunction):
    """The function whose inverse is the product of the parts' inverses."""

    parts: tuple[GrowthFunction, ...]

    def _inverse(self, y, tol):
        out = np.ones_like(y)
        for part in self.parts:
            out = out * part._inverse(y, min(tol, 1e-13))
        return out

    def _eval(self, t):
        return solve_increasing(lambda y: self._inverse(y, 1e-13), t, 1e-13)

    def descriptor(self) -> str:
        return "product[" + "|".join(p.descriptor() for p in self.parts) + "]"


@dataclass(frozen=True)
class Composite(GrowthFunction):
    """outer o inner^{-1}, e.g. Psi o Phi^{-1}."""

    outer: GrowthFunction
    inner: GrowthFunction

    def _eval(self, t):
        return self.outer._eval(self.inner._inverse(t, DEFAULT_TOL))

    def _inverse(self, y, tol):
        return self.inner._eval(self.outer._inverse(y, min(tol, DEFAULT_TOL)))

    def descriptor(self) -> str:
        return f"compose[{self.outer.descriptor()}|inv {self.inner.descriptor()}]"


@dataclass(frozen=True)
class Omega3(GrowthFunction):
    """t -> 1 / Psi(Phi^{-1}(1/t)), zero at zero."""

    psi: GrowthFunction
    phi: GrowthFunction

    def _eval(self, t):
        pos = t > 0
        with np.errstate(divide="ignore"):
            inner = self.phi._inverse(np.where(pos, 1.0 / np.where(pos, t, 1.0), 0.0), DEFAULT_TOL)
            val = 1.0 / self.psi._eval(inner)
        return np.where(pos, val, 0.0)

    def descriptor(self) -> str:
        return f"omega3[{self.psi.descriptor()}|{self.phi.descriptor()}]"


def _legendre(phi: GrowthFunction, s: np.ndarray, tol: float) -> np.ndarray:
    """sup_t (s t - Phi(t)) by golden section on a doubling bracket."""
    out = np.zeros(s.shape)
    mask = s > 0
    if not mask.any():
        return out
    sv = s[mask]

    def g(t, sv=sv):
        with np.errstate(over="ignore", invalid="ignore"):
            val = sv * t - phi._eval(t)
        return np.where(np.isnan(val), -np.inf, val)

    T = np.ones_like(sv)
    for _ in range(1100):
        up = g(2 * T) > g(T)
        if not up.any():
            break
        T[up] *= 2.0
        if np.any(T > 2.0**1000):
            raise UnboundedError("Legendre supremum still increasing at 2^1000")
    else:
        raise UnboundedError("Legendre supremum still increasing at bracket limit")
    zero = np.zeros_like(sv, dtype=bool)
    for _ in range(1100):
        down = (g(0.5 * T) > g(T)) & ~zero
        if not down.any():
            break
        T[down] *= 0.5
        zero |= T < 1e-300
    a, b = 0.5 * T, 2.0 * T
    inv_phi = (math.sqrt(5) - 1) / 2
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    gc, gd = g(c), g(d)
    n_iter = int(math.ceil(math.log(1.5 / tol) / math.log(1 / inv_phi))) + 2
    for _ in range(n_iter):
        left = gc > gd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - inv_phi * (b - a)
        new_d = a + inv_phi * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        gc_next = np.where(left, g(new_c), gd)
        gd_next = np.where(left, gc, g(new_d))
        c, d, gc, gd = c_next, d_next, gc_next, gd_next
    best = np.maximum(np.maximum(gc, gd), np.maximum(g(a), g(b)))
    best = np.where(zero, 0.0, best)
    out[mask] = np.maximum(best, 0.0)
    return out


@dataclass(frozen=True)
class Conjugate(GrowthFunction):
    """Complementary (Legendre) function of a convex growth function, computed pointwise."""

    base: GrowthFunction
    tol: float = 1e-12

    def _eval(self, t):
        return _legendre(self.base, t, self.tol)

    def descriptor(self) -> str:
        return f"conj:{self.base.descriptor()}"


def complementary(phi: GrowthFunction, s, tol: float = 1e-12):
    """sup_{t >= 0} (s t - Phi(t)); convexity of Phi is the caller's responsibility."""
    if not tol > 0:
        raise UsageError("tolerance must be positive")
    arr, scalar = _as_input(s)
    return _out(_legendre(phi, arr, tol), scalar)


@functools.lru_cache(maxsize=64)
def conjugate_table(phi: GrowthFunction, lo: float = 1e-8, hi: float = 1e8, points: int = 1601) -> GrowthFunction:
    """Memoised tabulated complementary function (lru_cache is thread-safe)."""
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    try:
        vals = _legendre(phi, grid, 1e-12)
    except UnboundedError:
        vals = np.array([_safe_legendre(phi, s) for s in grid])
    keep = np.isfinite(vals) & (vals > 0)
    xs, ys = grid[keep], vals[keep]
    inc = np.concatenate([[True], np.diff(ys) > 0])
    return Tabulated(tuple(xs[inc]), tuple(ys[inc]), f"conj:{phi.descriptor()}")


def _safe_legendre(phi: GrowthFunction, s: float) -> float:
    try:
        return float(_legendre(phi, np.array([s]), 1e-12)[0])
    except UnboundedError:
        return math.inf


def product_compose(phis: Sequence[GrowthFunction]) -> GrowthFunction:
    """Phi with Phi^{-1} = prod Phi_i^{-1}; closed form for unscaled powers."""
    phis = tuple(phis)
    if not phis:
        raise UsageError("need at least one growth function")
    if len(phis) == 1:
        return phis[0]
    if all(isinstance(p, Power) and p.c == 1.0 for p in phis):
        return Power(1.0 / sum(1.0 / p.p for p in phis))
    return ProductInverse(phis)


def psi_phi_inverse(psi: GrowthFunction, phi: GrowthFunction) -> GrowthFunction:
    """Psi o Phi^{-1}, simplified when both are unscaled powers or equal."""
    if psi == phi:
        return Power(1.0)
    if isinstance(psi, Power) and isinstance(phi, Power) and psi.c == 1.0 and phi.c == 1.0:
        return Power(psi.p / phi.p)
    return Composite(psi, phi)


def omega3(psi: GrowthFunction, phi: GrowthFunction, t):
    """1 / Psi(Phi^{-1}(1/t)), with value 0 at t = 0."""
    return Omega3(psi, phi)(t)


# ---------------------------------------------------------------- descriptors


def _params(body: str) -> dict[str, float]:
    out = {}
    for item in filter(None, body.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"bad growth parameter {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError as exc:
            raise UsageError(f"bad growth parameter {item!r}") from exc
    return out


def parse_growth(text: str) -> GrowthFunction:
    """Parse ``power:p=2``, ``powerlog:a=2,b=1``, ``expml``, ``entropy``, ``table:<path>``, ``conj:<desc>``."""
    text = text.strip()
    name, _, body = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "power":
            kw = _params(body)
            return Power(kw["p"], kw.get("c", 1.0))
        if name == "powerlog":
            kw = _params(body)
            return PowerLog(kw["a"], kw["b"])
        if name == "expml" and not body:
            return ExpMinusLinear()
        if name == "entropy" and not body:
            return Entropy()
        if name == "table" and body:
            return Tabulated.from_csv(body)
        if name == "conj" and body:
            return Conjugate(parse_growth(body))
    except KeyError as exc:
        raise UsageError(f"missing parameter {exc} in {text!r}") from exc
    raise UsageError(f"unknown growth descriptor {text!r}")


# ------------------------------------------------------------- classification


class Property(str, enum.Enum):
    DELTA2 = "DELTA2"
    DELTA_PRIME = "DELTA_PRIME"
    NABLA2 = "NABLA2"
    UPPER_TYPE = "UPPER_TYPE"
    U_TILDE = "U_TILDE"
    QUOTIENT_BOUND = "QUOTIENT_BOUND"
    RATIO_MONOTONE = "RATIO_MONOTONE"


class Verdict(str, enum.Enum):
    HOLDS = "holds-on-grid"
    FAILS = "fails"
    GROWS = "grows-with-grid"


@dataclass
class GrowthClassReport:
    property: Property
    estimate: float
    verdict: Verdict
    grid: np.ndarray = field(repr=False)
    q: float | None = None

    def as_dict(self) -> dict:
        return {
            "property": self.property.value,
            "q": self.q,
            "estimate": self.estimate,
            "verdict": self.verdict.value,
            "grid": [float(self.grid[0]), float(self.grid[-1]), int(self.grid.size)],
        }


def default_grid(lo: float = 1e-6, hi: float = 1e6, points: int = 241) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), points)


def _logs(phi: GrowthFunction, t: np.ndarray) -> np.ndarray:
    lv = phi.log(t)
    if np.any(np.isneginf(lv)):
        raise DegenerateFunctionError(f"{phi.descriptor()} vanishes at a positive grid point")
    return lv


def _pair_sup(expr: np.ndarray) -> float:
    if np.any(np.isnan(expr)):
        return math.nan
    with np.errstate(over="ignore"):
        return float(np.exp(np.max(expr)))


def _nabla2_estimate(phi: GrowthFunction, grid: np.ndarray) -> float:
    t0 = grid[0]
    lphi = _logs(phi, grid)
    # power-law tail below the grid: integral of Phi(s)/s^2 on (0, t0)
    slope = float((phi.log(t0 * 1.001) - lphi[0]) / math.log(1.001))
    if slope <= 1 + 1e-9:
        return math.inf
    log_tail = lphi[0] - math.log(t0) - math.log(slope - 1)
    u = np.log(grid)
    previous = None
    for level in range(13):
        m = 2**level
        fine = np.concatenate([np.linspace(u[j], u[j + 1], m + 1)[:-1] for j in range(u.size - 1)] + [u[-1:]])
        lh = _logs(phi, np.exp(fine)) - fine
        # trapezoid rule accumulated in log space so fast growth cannot overflow
        lsteps = np.log(0.5 * np.diff(fine)) + np.logaddexp(lh[1:], lh[:-1])
        lcum = np.logaddexp.accumulate(np.concatenate([[log_tail], lsteps]))[::m]
        if previous is not None and np.all(np.abs(lcum - previous) <= 1e-6):
            break
        previous = lcum
    with np.errstate(over="ignore"):
        return float(np.exp(np.max(lcum - (lphi - u))))


def _estimate(phi: GrowthFunction, prop: Property, grid: np.ndarray, aux, q) -> float:
    lphi = _logs(phi, grid)
    if prop is Property.DELTA2:
        return _pair_sup(_logs(phi, 2 * grid) - lphi)
    if prop is Property.DELTA_PRIME:
        st = np.outer(grid, grid)
        return _pair_sup(_logs(phi, st) - lphi[:, None] - lphi[None, :])
    if prop is Property.NABLA2:
        return _nabla2_estimate(phi, grid)
    if prop is Property.UPPER_TYPE:
        t = grid[grid >= 1]
        expr = _logs(phi, np.outer(grid, t)) - q * np.log(t)[None, :] - lphi[:, None]
        return _pair_sup(expr)
    if prop is Property.U_TILDE:
        s = grid[grid >= 1]
        t = s
        ls = _logs(phi, s)
        expr = _logs(phi, np.outer(s, 1 / t)) + q * np.log(t)[None, :] - ls[:, None]
        return max(
            _pair_sup(expr),
            _estimate(phi, Property.DELTA_PRIME, grid, aux, q),
            _estimate(phi, Property.UPPER_TYPE, grid, aux, q),
        )
    if prop is Property.QUOTIENT_BOUND:
        expr = _logs(phi, np.outer(grid, 1 / grid)) + lphi[None, :] - lphi[:, None]
        return _pair_sup(expr)
    if prop is Property.RATIO_MONOTONE:
        lr = _logs(aux, grid) - lphi
        return _pair_sup(lr[:-1] - lr[1:])
    raise UsageError(f"unknown property {prop}")


def classify(
    phi: GrowthFunction,
    prop: Property | str,
    grid: np.ndarray | None = None,
    aux: GrowthFunction | None = None,
    q: float | None = None,
) -> GrowthClassReport:
    """Grid supremum of the defining ratio of a growth-class property, with a verdict."""
    prop = Property(prop)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(grid <= 0):
        raise UsageError("grid needs at least 3 positive points")
    grid = np.sort(grid)
    if prop in (Property.UPPER_TYPE, Property.U_TILDE) and (q is None or q < 1):
        raise UsageError(f"{prop.value} needs q >= 1")
    if prop is Property.RATIO_MONOTONE and aux is None:
        raise UsageError("RATIO_MONOTONE needs the second function")
    est = _estimate(phi, prop, grid, aux, q)
    if math.isnan(est):
        return GrowthClassReport(prop, est, Verdict.FAILS, grid, q)
    if prop is Property.RATIO_MONOTONE:
        verdict = Verdict.HOLDS if est <= 1 + 1e-12 else Verdict.FAILS
        return GrowthClassReport(prop, est, verdict, grid, q)
    if prop is Property.U_TILDE:
        # Phi(t)/t nondecreasing is part of the class definition
        lr = _logs(phi, grid) - np.log(grid)
        if np.any(lr[1:] < lr[:-1] - 1e-12):
            return GrowthClassReport(prop, est, Verdict.FAILS, grid, q)
    if math.isinf(est):
        return GrowthClassReport(prop, est, Verdict.GROWS, grid, q)
    step = np.log(grid[-1] / grid[-2])
    extra = grid[-1] * np.exp(step * np.arange(1, int(np.ceil(np.log(10) / step)) + 1))
    extended = np.concatenate([grid, extra])
    est2 = _estimate(phi, prop, extended, aux, q)
    verdict = Verdict.GROWS if not est2 <= 1.1 * est else Verdict.HOLDS
    return GrowthClassReport(prop, est, verdict, grid, q)


def upper_type_index(phi: GrowthFunction, grid: np.ndarray | None = None) -> float:
    """Smallest q such that Phi(st) <= C t^q Phi(s) is plausible on the grid (max log-slope)."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    lv = _logs(phi, grid)
    slopes = np.diff(lv) / np.diff(np.log(grid))
    return float(max(1.0, np.max(slopes)))
