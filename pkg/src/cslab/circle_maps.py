"""Circle homeomorphisms realised as conjugated rotations.

A map is ``T = phi^{-1} o R_alpha o phi`` for a bi-Lipschitz lift ``phi``
(``phi(0) = 0``, ``phi(x + 1) = phi(x) + 1``).  Its invariant measure is
``nu([x, y]) = phi(y) - phi(x)``; the T1 constants are
``C_- = 1 / max phi'`` and ``C_+ = 1 / min phi'``.

Orbits are computed in one step as ``phi^{-1}({phi(x) + n alpha})`` with
``{n alpha}`` taken from exact fixed-point integers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .arithmetic import (
    ContinuedFraction,
    IrrationalSpec,
    alpha_fixed_point,
    alpha_float,
    cf_expand,
    signed_deviation,
)
from .errors import CapExceeded, LabError, RootFindFailure, check_cap

_FIXED_BITS = 192
_ONE_MINUS = 1.0 - 2.0 ** -50


def wrap(u):
    """Reduce to [0, 1); values within a few ulp below 1 snap to 0."""
    r = np.mod(u, 1.0)
    if np.ndim(r):
        r[r >= _ONE_MINUS] = 0.0
        return r
    return 0.0 if r >= _ONE_MINUS else float(r)


@dataclass(frozen=True)
class Conjugacy:
    form: str = "identity"
    eps: float = 0.0
    breakpoints: tuple[float, ...] = ()
    slopes: tuple[float, ...] = ()

    def __post_init__(self):
        if self.form == "identity":
            return
        if self.form == "sinusoidal":
            if not abs(self.eps) < 1:
                raise LabError("sinusoidal conjugacy needs |eps| < 1")
            return
        if self.form == "piecewise-linear":
            bp = tuple(float(b) for b in self.breakpoints)
            sl = tuple(float(s) for s in self.slopes)
            object.__setattr__(self, "breakpoints", bp)
            object.__setattr__(self, "slopes", sl)
            if not bp or bp[0] != 0.0 or len(bp) != len(sl) or bp[-1] >= 1:
                raise LabError("piecewise-linear conjugacy needs breakpoints from 0 in [0, 1)")
            if any(b >= c for b, c in zip(bp, bp[1:])) or any(s <= 0 for s in sl):
                raise LabError("conjugacy breakpoints must increase and slopes be positive")
            total = float(np.dot(np.diff(np.append(bp, 1.0)), sl))
            if abs(total - 1) > 1e-12:
                raise LabError(f"conjugacy slopes must integrate to 1, got {total}")
            return
        raise LabError(f"unknown conjugacy form {self.form!r}")

    @classmethod
    def identity(cls) -> "Conjugacy":
        return cls()

    @classmethod
    def sinusoidal(cls, eps: float) -> "Conjugacy":
        return cls(form="sinusoidal", eps=float(eps))

    @classmethod
    def piecewise_linear(cls, breakpoints, slopes) -> "Conjugacy":
        return cls(form="piecewise-linear", breakpoints=tuple(breakpoints), slopes=tuple(slopes))

    @property
    def slope_range(self) -> tuple[float, float]:
        if self.form == "identity":
            return 1.0, 1.0
        if self.form == "sinusoidal":
            e = abs(self.eps)
            return 1.0 - e, 1.0 + e
        return min(self.slopes), max(self.slopes)

    def _pl_tables(self):
        bp = np.asarray(self.breakpoints)
        sl = np.asarray(self.slopes)
        vals = np.concatenate([[0.0], np.cumsum(np.diff(np.append(bp, 1.0)) * sl)[:-1]])
        return bp, sl, vals

    def phi(self, x):
        """Lift phi on [0, 1) (callers reduce mod 1 first)."""
        x = np.asarray(x, dtype=float)
        if self.form == "identity":
            return x.copy()
        if self.form == "sinusoidal":
            return x + self.eps / (2 * math.pi) * np.sin(2 * math.pi * x)
        bp, sl, vals = self._pl_tables()
        idx = np.searchsorted(bp, x, side="right") - 1
        return vals[idx] + sl[idx] * (x - bp[idx])

    def dphi(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "identity":
            return np.ones_like(x)
        if self.form == "sinusoidal":
            return 1.0 + self.eps * np.cos(2 * math.pi * x)
        bp, sl, _ = self._pl_tables()
        return sl[np.searchsorted(bp, x, side="right") - 1]

    def phi_inv(self, u):
        """Inverse of phi for u in [0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.form == "identity":
            return u.copy()
        if self.form == "piecewise-linear":
            bp, sl, vals = self._pl_tables()
            idx = np.searchsorted(vals, u, side="right") - 1
            return bp[idx] + (u - vals[idx]) / sl[idx]
        return _sinusoidal_inverse(u, self.eps)

    def to_json(self) -> dict:
        if self.form == "identity":
            return {"form": "identity"}
        if self.form == "sinusoidal":
            return {"form": "sinusoidal", "eps": self.eps}
        return {"form": "piecewise-linear", "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes)}

    @classmethod
    def from_json(cls, data: dict) -> "Conjugacy":
        data = dict(data)
        form = data.pop("form", "identity")
        allowed = {"identity": set(), "sinusoidal": {"eps"},
                   "piecewise-linear": {"breakpoints", "slopes"}}.get(form)
        if allowed is None:
            raise LabError(f"unknown conjugacy form {form!r}")
        if set(data) - allowed:
            raise LabError(f"unknown keys in conjugacy spec: {sorted(set(data) - allowed)}")
        if form == "identity":
            return cls.identity()
        if form == "sinusoidal":
            return cls.sinusoidal(data["eps"])
        return cls.piecewise_linear(data["breakpoints"], data["slopes"])


def _sinusoidal_inverse(u: np.ndarray, eps: float, tol: float = 1e-15) -> np.ndarray:
    # bracket: |phi(x) - x| <= |eps| / (2 pi)
    shift = abs(eps) / (2 * math.pi)
    lo = u - shift
    hi = u + shift
    c = eps / (2 * math.pi)
    # a few bisection steps guarantee Newton starts in its basin
    for _ in range(6):
        mid = 0.5 * (lo + hi)
        below = mid + c * np.sin(2 * math.pi * mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(40):
        g = x + c * np.sin(2 * math.pi * x) - u
        if np.all(np.abs(g) <= tol):
            break
        step = g / (1.0 + eps * np.cos(2 * math.pi * x))
        x = np.clip(x - step, lo, hi)
    else:
        raise RootFindFailure("inverse of the sinusoidal conjugacy did not converge")
    return x


@lru_cache(maxsize=128)
def _frac_multiples_cached(spec: IrrationalSpec, start: int, count: int) -> np.ndarray:
    a = alpha_fixed_point(spec, _FIXED_BITS)
    mod = 1 << _FIXED_BITS
    shift = _FIXED_BITS - 53
    vals = [((j * a) % mod) >> shift for j in range(start, start + count)]
    out = np.array(vals, dtype=np.float64) * 2.0 ** -53
    out.setflags(write=False)
    return out


def frac_multiples(spec: IrrationalSpec, start: int, count: int) -> np.ndarray:
    """{j alpha} for j = start, ..., start + count - 1 (exact to 2**-53)."""
    return _frac_multiples_cached(spec, int(start), int(count))


@dataclass(frozen=True)
class CircleMap:
    alpha: IrrationalSpec
    conjugacy: Conjugacy = Conjugacy()

    @classmethod
    def rotation(cls, alpha: IrrationalSpec | None = None) -> "CircleMap":
        return cls(alpha or IrrationalSpec.golden())

    @classmethod
    def sinusoidal(cls, eps: float, alpha: IrrationalSpec | None = None) -> "CircleMap":
        return cls(alpha or IrrationalSpec.golden(), Conjugacy.sinusoidal(eps))

    @property
    def kind(self) -> str:
        return "pure-rotation" if self.conjugacy.form == "identity" else "conjugated-rotation"

    @property
    def rotation_number(self) -> float:
        return alpha_float(self.alpha)

    @property
    def constants(self) -> tuple[float, float]:
        """(C_minus, C_plus) of condition T1."""
        s_min, s_max = self.conjugacy.slope_range
        return 1.0 / s_max, 1.0 / s_min

    def continued_fraction(self, depth: int) -> ContinuedFraction:
        return cf_expand(self.alpha, depth)

    # coordinates
    def angle(self, x):
        """phi(x) reduced to [0, 1)."""
        return wrap(self.conjugacy.phi(wrap(x)))

    def point(self, u):
        """phi^{-1}(u) for angles u (any real, reduced mod 1)."""
        return self.conjugacy.phi_inv(wrap(u))

    def forward(self, x, steps: int):
        if steps == 0:
            return np.asarray(x, dtype=float).copy() if np.ndim(x) else float(x)
        u = self.angle(x) + frac_multiples(self.alpha, steps, 1)[0]
        out = self.point(u)
        return out if np.ndim(x) else float(out)

    def inverse(self, x):
        return self.forward(x, -1)

    def orbit(self, x, count: int, start: int = 0) -> np.ndarray:
        """T^j x for j = start .. start + count - 1; shape (..., count)."""
        fr = frac_multiples(self.alpha, start, count)
        u = np.asarray(self.angle(x))[..., None] + fr
        return self.point(u)

    def orbit_angles(self, x, count: int, start: int = 0) -> np.ndarray:
        fr = frac_multiples(self.alpha, start, count)
        return wrap(np.asarray(self.angle(x))[..., None] + fr)

    def invariant_mass(self, x, y):
        """nu of the positively oriented arc from x to y (y = x + 1: full circle)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        full = y - x >= 1.0
        xs, ys = wrap(x), wrap(y)
        px = self.conjugacy.phi(xs)
        py = self.conjugacy.phi(ys)
        m = np.where(ys >= xs, py - px, py + 1.0 - px)
        m = np.where(full, 1.0, m)
        return m if m.ndim else float(m)

    def arc_between(self, x, i: int):
        """nu-mass of the shorter arc between x and T^i x (equals ||i alpha||)."""
        m = np.mod(self.conjugacy.phi(wrap(self.forward(x, i))) - self.conjugacy.phi(wrap(x)), 1.0)
        out = np.minimum(m, 1.0 - m)
        return out if np.ndim(out) else float(out)

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha.to_json(),
                "conjugacy": self.conjugacy.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "CircleMap":
        data = dict(data)
        extra = set(data) - {"kind", "alpha", "conjugacy"}
        if extra:
            raise LabError(f"unknown keys in map spec: {sorted(extra)}")
        conj = Conjugacy.from_json(data.get("conjugacy", {"form": "identity"}))
        m = cls(IrrationalSpec.from_json(data.get("alpha", {"rule": "constant", "digits": [1]})), conj)
        kind = data.get("kind")
        if kind is not None and kind != m.kind:
            raise LabError(f"map kind {kind!r} does not match conjugacy {conj.form!r}")
        return m


# -- dynamical partitions and gap statistics --------------------------------

@dataclass(frozen=True)
class Arc:
    label: str       # "short" or "long"
    index: int       # j in T^j(I)
    left: float
    nu_mass: float
    length: float
    angle_left: float


@dataclass(frozen=True)
class DynamicalPartition:
    level: int
    z: float
    short_intervals: tuple[Arc, ...]
    long_intervals: tuple[Arc, ...]

    @property
    def arcs(self) -> list[Arc]:
        return sorted(self.short_intervals + self.long_intervals, key=lambda a: a.left)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "index", "label", "left", "length", "nu_mass"])
        for a in self.arcs:
            w.writerow([self.level, a.index, a.label, repr(a.left), repr(a.length), repr(a.nu_mass)])
        return buf.getvalue()


def _deviations(cmap: CircleMap, k: int) -> tuple[ContinuedFraction, list[float]]:
    cf = cmap.continued_fraction(max(k + 1, 2))
    devs = [float(signed_deviation(j, cf, cmap.alpha).value) for j in range(0, k + 2)]
    return cf, devs


def _arc_family(cmap: CircleMap, z: float, dev: float, count: int, label: str) -> list[Arc]:
    mass = abs(dev)
    u0 = cmap.angle(z) - (mass if dev < 0 else 0.0)
    fr = frac_multiples(cmap.alpha, 0, count)
    ul = wrap(u0 + fr)
    left = cmap.point(ul)
    right = cmap.point(ul + mass)
    length = np.mod(right - left, 1.0)
    nu = cmap.invariant_mass(left, right)
    return [Arc(label, j, float(left[j]), float(nu[j]), float(length[j]), float(ul[j]))
            for j in range(count)]


def dynamical_partition(cmap: CircleMap, z: float, k: int, cap: int | None = None) -> DynamicalPartition:
    """Short arcs T^j(I_k), j < q_{k-1}, and long arcs T^j(I_{k-1}), j < q_k.

    I_k runs from z to T^{q_k} z in the direction of q_k alpha - p_k.
    """
    if k < 1:
        raise LabError("partition level must be >= 1")
    cf, devs = _deviations(cmap, k)
    qk, qkm1 = cf.q(k), cf.q(k - 1)
    if cap is not None and qk > cap:
        raise CapExceeded(f"q_{k} = {qk} exceeds partition cap {cap}")
    check_cap("partition", qk)
    short = _arc_family(cmap, z, devs[k], qkm1, "short")
    long_ = _arc_family(cmap, z, devs[k - 1], qk, "long")
    return DynamicalPartition(k, float(z), tuple(short), tuple(long_))


def partition_check(part: DynamicalPartition, tol: float = 1e-12) -> dict:
    """Disjointness/cover, counts and total mass of a partition."""
    arcs = sorted(part.arcs, key=lambda a: a.angle_left)
    angles = np.array([a.angle_left for a in arcs])
    masses = np.array([a.nu_mass for a in arcs])
    nxt = np.roll(angles, -1)
    gaps = np.mod(nxt - (angles + masses) + 0.5, 1.0) - 0.5
    return {
        "cover_ok": bool(np.all(np.abs(gaps) < tol)) if len(arcs) > 1 else abs(masses.sum() - 1) < tol,
        "total_mass": float(masses.sum()),
        "short_count": len(part.short_intervals),
        "long_count": len(part.long_intervals),
    }


def refinement_check(cmap: CircleMap, z: float, k: int, tol: float = 1e-12) -> bool:
    """Each long arc of level k holds a_{k+1} long arcs and one short arc of level k+1."""
    coarse = dynamical_partition(cmap, z, k)
    fine = dynamical_partition(cmap, z, k + 1)
    a_next = cmap.continued_fraction(k + 1).digits[k]
    fine_arcs = fine.arcs
    for arc in coarse.long_intervals:
        n_long = n_short = 0
        for f in fine_arcs:
            off = np.mod(f.angle_left - arc.angle_left + tol, 1.0) - tol
            if off >= -tol and off + f.nu_mass <= arc.nu_mass + tol:
                if f.label == "long":
                    n_long += 1
                else:
                    n_short += 1
        if n_long != a_next or n_short != 1:
            return False
    return True


def gap_statistics(cmap: CircleMap, x: float, k: int, slack: float = 1e-10) -> dict:
    """Gap structure of {T^j x : j < q_k} measured with nu."""
    if k < 1:
        raise LabError("gap statistics need k >= 1")
    cf, devs = _deviations(cmap, k)
    qk, qkm1, qk1 = cf.q(k), cf.q(k - 1), cf.q(k + 1)
    check_cap("partition", qk)
    pts = np.sort(cmap.orbit(x, qk))
    gaps = cmap.invariant_mass(pts, np.roll(pts, -1))
    if qk == 1:
        gaps = np.array([1.0])
    small_expected = abs(devs[k - 1])
    large_expected = abs(devs[k - 1]) + abs(devs[k])
    is_small = np.abs(gaps - small_expected) < np.abs(gaps - large_expected)
    small, large = gaps[is_small], gaps[~is_small]
    small_lo = 1 / qk - qkm1 / (qk * qk1)
    small_ok = bool(np.all((small >= small_lo - slack) & (small <= 1 / qk + slack)))
    large_ok = bool(np.all((large >= 1 / qk - slack) & (large <= 1 / qk + 1 / qk1 + slack)))
    counts_ok = len(large) == qkm1 and len(small) == qk - qkm1
    return {
        "k": k,
        "q_k": qk,
        "large_count": int(len(large)),
        "small_count": int(len(small)),
        "large_mass": float(large.mean()) if len(large) else float("nan"),
        "small_mass": float(small.mean()) if len(small) else float("nan"),
        "large_spread": float(np.ptp(large)) if len(large) else 0.0,
        "small_spread": float(np.ptp(small)) if len(small) else 0.0,
        "bounds_ok": bool(small_ok and large_ok and counts_ok),
    }


def best_return_check(cmap: CircleMap, x: float, k: int, tol: float = 1e-12) -> bool:
    """nu of the arc between x and T^i x is >= that for i = q_k, for all 0 < i < q_{k+1}."""
    cf = cmap.continued_fraction(k + 1)
    qk, qk1 = cf.q(k), cf.q(k + 1)
    check_cap("exhaustive", qk1)
    u = cmap.angle(x)
    fr = frac_multiples(cmap.alpha, 1, qk1 - 1)
    ys = cmap.point(u + fr)
    m = np.mod(cmap.conjugacy.phi(ys) - cmap.conjugacy.phi(wrap(x)), 1.0)
    masses = np.minimum(m, 1.0 - m)
    ref = masses[qk - 1]
    return bool(np.all(masses >= ref - tol))


def sample_invariant(cmap: CircleMap, count: int, scheme: str = "low-discrepancy") -> np.ndarray:
    """Quadrature nodes for nu: phi^{-1} of an equidistributed sequence."""
    if count < 1:
        raise LabError("count must be >= 1")
    if scheme == "grid":
        u = np.arange(count) / count
    elif scheme == "low-discrepancy":
        u = qmc.Halton(d=1, scramble=False).random(count).ravel()
    else:
        raise LabError(f"unknown sampling scheme {scheme!r}")
    return cmap.point(u)
