"""Lyapunov exponent, integrated density of states and large deviations.

Phase averages use nu-distributed nodes ``phi^{-1}(u_i)`` with ``u_i`` a
Halton sequence, so every estimate is a deterministic function of its
arguments.  Per-sample work fans out over threads and is reduced in a
fixed order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import _kernels as K
from ._parallel import chunks, ordered_map
from .circle_maps import CircleMap, frac_multiples, wrap
from .errors import (
    DeltaTooLarge,
    EnergyOnAtom,
    LabError,
    PreconditionError,
    RootFindFailure,
    check_cap,
)
from .potentials import LEFT_LIMIT_AT_JUMP, Potential


@dataclass(frozen=True)
class Model:
    """The triple (lambda, f, T) shared by every estimator."""

    lam: float
    potential: Potential
    cmap: CircleMap

    @property
    def d_lower(self) -> float:
        """lambda * gamma_- * C_-."""
        return self.lam * min(self.potential.slopes) * self.cmap.constants[0]

    @property
    def d_upper(self) -> float:
        return self.lam * max(self.potential.slopes) * self.cmap.constants[1]

    def rows(self, angles: np.ndarray, start: int, count: int) -> np.ndarray:
        """Diagonals lambda f(T^j x) for phases with the given angles (one row each)."""
        fr = frac_multiples(self.cmap.alpha, start, count)
        a = wrap(np.asarray(angles, dtype=float)[:, None] + fr[None, :])
        return np.ascontiguousarray(self.lam * self.potential(self.cmap.point(a)))

    def spectrum_bounds(self) -> tuple[float, float]:
        """[-2 + lambda inf f, 2 + lambda sup f] contains every box spectrum."""
        return -2.0, 2.0 + self.lam * LEFT_LIMIT_AT_JUMP


def sample_angles(count: int, scheme: str = "low-discrepancy") -> np.ndarray:
    """Equidistributed angles u_i; the phases are phi^{-1}(u_i)."""
    if count < 1:
        raise PreconditionError("samples must be >= 1")
    if scheme == "grid":
        return np.arange(count) / count
    if scheme == "low-discrepancy":
        return qmc.Halton(d=1, scramble=False).random(count).ravel()
    raise LabError(f"unknown sampling scheme {scheme!r}")


def _mean_stderr(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


# -- Lyapunov exponent ----------------------------------------------------------

@dataclass(frozen=True)
class LyapunovEstimate:
    E: float
    n: int
    samples: int
    value: float
    stderr: float

    def csv_row(self) -> list:
        return [repr(self.E), self.n, self.samples, repr(self.value), repr(self.stderr)]


ESTIMATE_HEADER = ["E", "n", "samples", "value", "stderr"]


def lyapunov(model: Model, E: float, n: int, samples: int, scheme: str = "low-discrepancy",
             threads: int | None = None, check_n: bool = True) -> LyapunovEstimate:
    """(1/n) ln ||M_n(x, E)|| averaged over nu."""
    if check_n and n < 100:
        raise PreconditionError("lyapunov needs n >= 100")
    u = sample_angles(samples, scheme)

    def one(i):
        d = model.rows(u[i:i + 1], 0, n)
        return K.log_norm_rows(d, float(E))[0] / n

    vals = np.array(ordered_map(one, range(samples), threads))
    mean, se = _mean_stderr(vals)
    return LyapunovEstimate(float(E), n, samples, mean, se)


def lyapunov_lower_bound(model: Model) -> float:
    """max{0, ln(lambda g- C- / (2e))}."""
    d = model.d_lower
    return max(0.0, math.log(d / (2 * math.e))) if d > 0 else 0.0


# -- IDS -----------------------------------------------------------------------

@dataclass(frozen=True)
class IDSEstimate:
    E: float
    n: int
    samples: int
    value: float
    stderr: float

    def csv_row(self) -> list:
        return [repr(self.E), self.n, self.samples, repr(self.value), repr(self.stderr)]


def periodic_counts(model: Model, energies, n: int, samples: int, scheme: str = "low-discrepancy",
                    threads: int | None = None) -> np.ndarray:
    """Counts N~_n(x_s, E_j) of periodic box eigenvalues <= E_j, shape (samples, len(E))."""
    if n < 3:
        raise PreconditionError("periodic boxes need n >= 3")
    check_cap("eigen_periodic", n)
    energies = np.ascontiguousarray(np.atleast_1d(np.asarray(energies, dtype=float)))
    u = sample_angles(samples, scheme)

    def one(se):
        D = model.rows(u[se[0]:se[1]], 0, n)
        return K.count_rows(D, energies, True)

    parts = ordered_map(one, chunks(samples, max(1, threads or 1)), threads)
    return np.concatenate(parts)


def ids(model: Model, E, n: int, samples: int, scheme: str = "low-discrepancy",
        threads: int | None = None):
    """(1/n) nu-average of N~_n(x, E); a list when E is a sequence."""
    energies = np.atleast_1d(np.asarray(E, dtype=float))
    counts = periodic_counts(model, energies, n, samples, scheme, threads) / n
    out = []
    for j, e in enumerate(energies):
        mean, se = _mean_stderr(counts[:, j])
        out.append(IDSEstimate(float(e), n, samples, mean, se))
    return out if np.ndim(E) else out[0]


def ids_staircase_csv(estimates: list[IDSEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_HEADER)
    for est in estimates:
        w.writerow(est.csv_row())
    return buf.getvalue()


@dataclass(frozen=True)
class LipschitzIDS:
    E: float
    E2: float
    lhs: float
    bound: float
    ok: bool


def ids_lipschitz_check(model: Model, E: float, E2: float, n: int, samples: int,
                        threads: int | None = None) -> LipschitzIDS:
    """|N(E) - N(E')| <= |E - E'| / (lambda g- C-) + 4/n + 3 stderr."""
    if E == E2:
        raise PreconditionError("E and E' must differ")
    if model.d_lower <= 0:
        raise PreconditionError("the IDS Lipschitz bound needs lambda > 0")
    a, b = ids(model, [E, E2], n, samples, threads=threads)
    lhs = abs(a.value - b.value)
    se = math.hypot(a.stderr, b.stderr)
    bound = abs(E - E2) / model.d_lower + 4 / n + 3 * se
    return LipschitzIDS(float(E), float(E2), lhs, bound, lhs <= bound)


# -- Thouless formula ------------------------------------------------------------

@dataclass(frozen=True)
class DOSHistogram:
    edges: np.ndarray
    weights: np.ndarray  # Delta N per bin, summing to 1
    n: int
    samples: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def dos_histogram(model: Model, n: int, samples: int, bins: int,
                  threads: int | None = None) -> DOSHistogram:
    """Pooled periodic eigenvalue distribution on [-2, 2 + lambda sup f]."""
    if bins < 64:
        raise PreconditionError("bins must be >= 64")
    lo, hi = model.spectrum_bounds()
    edges = np.linspace(lo - 1e-9, hi + 1e-9, bins + 1)
    counts = periodic_counts(model, edges, n, samples, threads=threads)
    pooled = counts.sum(axis=0).astype(float)
    weights = np.diff(pooled) / (n * samples)
    return DOSHistogram(edges, weights, n, samples)


@dataclass(frozen=True)
class ThoulessResult:
    E: float
    lhs: float
    rhs: float
    gap: float
    lhs_stderr: float


def thouless_check(model: Model, E: float, n: int, samples: int, bins: int = 4096,
                   hist: DOSHistogram | None = None, threads: int | None = None) -> ThoulessResult:
    """Compare L(E) with the integral of ln|E' - E| against the pooled histogram."""
    hist = hist or dos_histogram(model, n, samples, bins, threads)
    c = hist.centers
    if np.any(np.abs(c - E) < 1e-12):
        raise EnergyOnAtom(f"E={E} coincides with a bin center; shift the bin grid")
    rhs = float(np.dot(np.log(np.abs(c - E)), hist.weights))
    lyap = lyapunov(model, E, n, samples, threads=threads)
    return ThoulessResult(float(E), lyap.value, rhs, abs(lyap.value - rhs), lyap.stderr)


# -- numerator bound ---------------------------------------------------------------

@dataclass(frozen=True)
class NumeratorBound:
    worst: float      # max of (1/n) ln|P_n| - (L + kappa)
    at_n: int
    at_phase: float
    flag: bool        # True when the bound is exceeded


def numerator_bound_check(model: Model, E: float, kappa: float, n_min: int, n_max: int,
                          phases: int, L_hat: float, threads: int | None = None) -> NumeratorBound:
    """max over phases and n_min <= n <= n_max of (1/n) ln|P_n(x, E)| - (L + kappa)."""
    if not kappa > 0:
        raise PreconditionError("kappa must be positive")
    if not 1 <= n_min <= n_max:
        raise PreconditionError("need 1 <= n_min <= n_max")
    u = sample_angles(phases, "grid")

    def one(i):
        d = model.rows(u[i:i + 1], 0, n_max)[0]
        lp = K.logdet_prefix(d, float(E))[n_min - 1:]
        r = lp / np.arange(n_min, n_max + 1) - (L_hat + kappa)
        j = int(np.argmax(r))
        return float(r[j]), n_min + j

    res = ordered_map(one, range(phases), threads)
    i = int(np.argmax([r[0] for r in res]))
    worst, at_n = res[i]
    return NumeratorBound(worst, at_n, float(model.cmap.point(u[i])), worst > 0)


# -- large deviations ----------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    left: float       # angle phi(x) of the left end
    right: float
    log_mass: float
    method: str       # "bisection" or "linearized"


@dataclass(frozen=True)
class LDTReport:
    E: float
    k: int
    qk: int
    delta: float
    L_hat: float
    threshold: float
    log_mass: float
    component_count: int
    roots: int
    grid: int
    C0: float | None
    components: tuple[Component, ...] = field(default=())

    @property
    def deviation_mass(self) -> float:
        return math.exp(self.log_mass) if self.log_mass > -math.inf else 0.0

    @property
    def bound(self) -> float | None:
        if self.C0 is None:
            return None
        return math.exp(-self.C0 * self.delta * self.qk)

    @property
    def components_ok(self) -> bool:
        return self.component_count <= self.qk

    def to_json(self) -> dict:
        return {
            "E": self.E, "k": self.k, "qk": self.qk, "delta": self.delta, "L_hat": self.L_hat,
            "threshold": self.threshold, "deviation_mass": self.deviation_mass,
            "log_mass": None if self.log_mass == -math.inf else self.log_mass,
            "component_count": self.component_count, "components_ok": self.components_ok,
            "roots": self.roots, "grid": self.grid, "C0": self.C0, "bound": self.bound,
            "cells": [{"left": c.left, "right": c.right,
                       "log_mass": None if c.log_mass == -math.inf else c.log_mass,
                       "method": c.method} for c in self.components],
        }


def _logsumexp(v) -> float:
    v = [x for x in v if x > -math.inf]
    if not v:
        return -math.inf
    m = max(v)
    return m + math.log(math.fsum(math.exp(x - m) for x in v))


class _LDTSurface:
    """(1/q) ln|P_q| as a function of the angle u, with jump bookkeeping."""

    def __init__(self, model: Model, q: int, E: float):
        self.model = model
        self.q = q
        self.E = float(E)
        self.fr = frac_multiples(model.cmap.alpha, 0, q)
        ang = wrap(-np.asarray(self.fr))
        self.order = np.argsort(ang, kind="stable")
        self.beta = ang[self.order]        # sorted jump angles; beta[0] = 0
        self.site = self.order             # site j jumps at beta

    def diag(self, u: float, left_site: int | None = None) -> np.ndarray:
        d = self.model.rows(np.array([u]), 0, self.q)[0]
        if left_site is not None:
            d[left_site] = self.model.lam * LEFT_LIMIT_AT_JUMP
        return d

    def g(self, u) -> np.ndarray:
        u = np.atleast_1d(u)
        return K.logdet_rows(self.model.rows(u, 0, self.q), self.E) / self.q

    def count(self, u: float, left_site: int | None = None) -> int:
        return int(K.sturm_count(self.diag(u, left_site), self.E))

    def log_slope(self, u: float) -> float:
        """ln |dP_q/du| at a root u (u is the angle coordinate)."""
        d = self.diag(u)
        H = np.diag(d) + np.diag(np.ones(self.q - 1), 1) + np.diag(np.ones(self.q - 1), -1)
        w, V = np.linalg.eigh(H)
        m = int(np.argmin(np.abs(w - self.E)))
        others = np.delete(w, m) - self.E
        x_sites = self.model.cmap.point(wrap(u + self.fr))
        dv = (self.model.lam * self.model.potential.derivative(x_sites)
              / self.model.cmap.conjugacy.dphi(x_sites))
        dmu = float(np.dot(V[:, m] ** 2, dv))
        return float(np.sum(np.log(np.abs(others)))) + math.log(dmu)


def _bisect_u(fn, a: float, b: float, iters: int = 80) -> tuple[float, float]:
    """Shrink [a, b] with fn(a) != fn(b) (booleans)."""
    fa = fn(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m <= min(a, b) or m >= max(a, b):
            break
        if fn(m) == fa:
            a = m
        else:
            b = m
    return a, b


def ldt_scan(model: Model, E: float, k: int, delta: float, L_hat: float, resolution: int | None = None,
             C0: float | None = None, linear_cutoff: float = 1e-10) -> LDTReport:
    """nu-mass of {x : (1/q_k) ln|P_{q_k}(x, E)| < L_hat - delta}.

    Every root of P_{q_k}(., E) is located exactly by Sturm counts.  A
    component wider than the grid, or whose end can be bracketed, is
    measured by bisection on the threshold crossing; a component narrower
    than ``linear_cutoff`` is measured from the slope at its root, which
    is exact to first order and far below any grid resolution.
    """
    if not 0 < delta < L_hat:
        raise DeltaTooLarge(f"delta={delta} must lie in (0, L_hat={L_hat})")
    cf = model.cmap.continued_fraction(k + 1)
    q = cf.q(k)
    check_cap("eigen_dirichlet", q)
    G = max(resolution or 0, 16 * q)
    t = L_hat - delta
    surf = _LDTSurface(model, q, E)
    ug = np.arange(G) / G
    below = surf.g(ug) < t

    # roots: in each I_l the count of eigenvalues <= E drops once per root
    roots = []
    ends = np.append(surf.beta, 1.0)
    for l in range(q):
        a, b = ends[l], ends[l + 1]
        c0 = surf.count(a)
        nxt = l + 1
        # the left limit at beta_{l+1} uses the jump site of beta_{l+1}
        jsite = int(surf.site[nxt % q])
        c1 = surf.count(ends[nxt] % 1.0, left_site=jsite)
        if c1 > c0:
            raise RootFindFailure(f"count increases inside I_{l}")
        for target in range(c0 - 1, c1 - 1, -1):
            lo, hi = _bisect_u(lambda u: surf.count(u) > target, a + 1e-17 if a == 0 else a,
                               np.nextafter(b, 0.0))
            roots.append(0.5 * (lo + hi))
    roots = np.array(sorted(roots))

    comps: list[Component] = []
    cell = 1.0 / G

    def side_above(u):
        return bool(surf.g(wrap(u))[0] >= t)

    # grid runs (cyclic)
    runs = []
    if below.all():
        runs.append((0.0, 1.0))
    elif below.any():
        start = int(np.argmin(below))  # an index that is above
        idx = [(start + i) % G for i in range(G)]
        i = 0
        while i < G:
            if below[idx[i]]:
                j = i
                while j + 1 < G and below[idx[j + 1]]:
                    j += 1
                ul = idx[i] / G
                ur = idx[j] / G
                if ur < ul:
                    ur += 1.0
                l_lo, _ = _bisect_u(side_above, ul - cell, ul)
                _, r_hi = _bisect_u(side_above, ur, ur + cell)
                runs.append((l_lo, r_hi))
                i = j + 1
            else:
                i += 1
    for lo, hi in runs:
        comps.append(Component(float(wrap(lo)), float(wrap(hi)), math.log(hi - lo), "bisection"))

    def in_runs(r):
        for lo, hi in runs:
            if lo <= r <= hi or lo <= r + 1 <= hi or lo <= r - 1 <= hi:
                return True
        return False

    for r in roots:
        if in_runs(r):
            continue
        log_half = q * t - surf.log_slope(r)
        if log_half < math.log(linear_cutoff):
            comps.append(Component(float(r), float(r), math.log(2) + log_half, "linearized"))
            continue
        # resolvable: bracket the crossing on each side by the neighbouring grid points
        gl = math.floor(r * G) / G
        gr = gl + cell
        l_lo, _ = _bisect_u(side_above, gl, r)
        _, r_hi = _bisect_u(side_above, r, gr)
        comps.append(Component(float(wrap(l_lo)), float(wrap(r_hi)), math.log(r_hi - l_lo), "bisection"))

    log_mass = _logsumexp([c.log_mass for c in comps])
    comps.sort(key=lambda c: c.left)
    return LDTReport(float(E), k, q, float(delta), float(L_hat), float(t), log_mass, len(comps),
                     len(roots), G, C0, tuple(comps))


@dataclass(frozen=True)
class LDTSweep:
    reports: tuple[LDTReport, ...]
    rate: float              # fitted c in ln(mass) ~ a - c q_k (empirical C_0 * delta)
    C0: float                # rate / delta
    ratios: tuple[float, ...]  # ln(mass)/q_k
    decreasing: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["qk", "delta", "mass", "components"])
        for r in self.reports:
            w.writerow([r.qk, repr(r.delta), repr(r.deviation_mass), r.component_count])
        return buf.getvalue()


def ldt_sweep(model: Model, E: float, ks, delta: float, L_hat: float) -> LDTSweep:
    reps = [ldt_scan(model, E, k, delta, L_hat) for k in ks]
    q = np.array([r.qk for r in reps], dtype=float)
    lm = np.array([r.log_mass for r in reps])
    if not np.all(np.isfinite(lm)) or len(reps) < 2:
        raise LabError("LDT sweep needs a non-empty deviation set at every scale")
    slope = float(np.polyfit(q, lm, 1)[0])
    rate = -slope
    ratios = tuple(float(v) for v in lm / q)
    dec = all(b < a for a, b in zip(ratios, ratios[1:]))
    c0 = rate / delta
    reps = [LDTReport(r.E, r.k, r.qk, r.delta, r.L_hat, r.threshold, r.log_mass, r.component_count,
                      r.roots, r.grid, c0, r.components) for r in reps]
    return LDTSweep(tuple(reps), rate, c0, ratios, dec)
