"""Finite boxes of the operator, their determinants, transfer matrices,
Green entries and the box eigenvalue functions.

Site ``j`` of a box with base phase ``x`` carries the potential value
``lambda * f(T^j x)``; off-diagonal entries are 1.  ``P_n(x, E)`` denotes
``det(H_n(x) - E)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._parallel import chunks, ordered_map
from .circle_maps import CircleMap, frac_multiples, wrap
from .errors import BracketFailure, LabError, NearSingularWindow, PreconditionError, check_cap
from .potentials import LEFT_LIMIT_AT_JUMP, Potential

EIG_TOL = 1e-13
NEAR_SINGULAR_LOG = -700 * math.log(10)
_DENSE_PERIODIC_MAX = 256


# -- scaled arithmetic -------------------------------------------------------

@dataclass(frozen=True)
class ScaledValue:
    """sign * exp(log_mag); sign 0 means exactly zero."""

    sign: int
    log_mag: float

    @classmethod
    def from_float(cls, v: float) -> "ScaledValue":
        if v == 0:
            return cls(0, -math.inf)
        return cls(1 if v > 0 else -1, math.log(abs(v)))

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_mag)

    def __mul__(self, other: "ScaledValue") -> "ScaledValue":
        if self.sign == 0 or other.sign == 0:
            return ScaledValue(0, -math.inf)
        return ScaledValue(self.sign * other.sign, self.log_mag + other.log_mag)

    def __truediv__(self, other: "ScaledValue") -> "ScaledValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero ScaledValue")
        if self.sign == 0:
            return self
        return ScaledValue(self.sign * other.sign, self.log_mag - other.log_mag)

    def __neg__(self) -> "ScaledValue":
        return ScaledValue(-self.sign, self.log_mag)

    def below_exp(self, t: float) -> bool:
        """|value| < e^t."""
        return self.log_mag < t

    def rel_close(self, other: "ScaledValue", rtol: float) -> bool:
        if self.sign == 0 or other.sign == 0:
            return self.sign == other.sign
        if self.sign != other.sign:
            return False
        return abs(math.expm1(self.log_mag - other.log_mag)) <= rtol

    def to_json(self) -> dict:
        return {"sign": self.sign, "log_mag": None if self.sign == 0 else self.log_mag}


def scaled_sum(terms: list[ScaledValue]) -> ScaledValue:
    live = [t for t in terms if t.sign != 0]
    if not live:
        return ScaledValue(0, -math.inf)
    ref = max(t.log_mag for t in live)
    acc = math.fsum(t.sign * math.exp(t.log_mag - ref) for t in live)
    if acc == 0:
        return ScaledValue(0, -math.inf)
    return ScaledValue(1 if acc > 0 else -1, ref + math.log(abs(acc)))


# -- boxes -------------------------------------------------------------------

def site_values(lam: float, potential: Potential, cmap: CircleMap, x, start: int, count: int) -> np.ndarray:
    """lambda * f(T^j x) for j = start .. start + count - 1 (x may be an array)."""
    return lam * potential(cmap.orbit(x, count, start))


@dataclass(frozen=True)
class BoxOperator:
    lam: float
    potential: Potential
    cmap: CircleMap
    x: float
    n: int
    boundary: str = "dirichlet"
    _diag: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError("box size must be >= 1")
        if self.boundary not in ("dirichlet", "periodic"):
            raise LabError(f"unknown boundary {self.boundary!r}")
        if self.boundary == "periodic" and self.n < 3:
            raise PreconditionError("periodic boxes need n >= 3")
        if self.lam < 0:
            raise PreconditionError("coupling must be non-negative")

    @classmethod
    def from_diagonal(cls, d, boundary: str = "dirichlet") -> "BoxOperator":
        """A box with an explicit diagonal (used by oracles and synthetic tests)."""
        d = np.ascontiguousarray(d, dtype=float)
        box = cls(0.0, Potential.sawtooth(), CircleMap.rotation(), 0.0, len(d), boundary)
        object.__setattr__(box, "_diag", d)
        return box

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            d = np.ascontiguousarray(site_values(self.lam, self.potential, self.cmap, self.x, 0, self.n))
            d.setflags(write=False)
            object.__setattr__(self, "_diag", d)
        return self._diag

    def shifted(self, steps: int) -> "BoxOperator":
        return BoxOperator(self.lam, self.potential, self.cmap, self.cmap.forward(self.x, steps),
                           self.n, self.boundary)


def build_matrix(box: BoxOperator) -> np.ndarray:
    check_cap("dense", box.n)
    d = box.diagonal()
    n = box.n
    H = np.diag(d)
    if n > 1:
        idx = np.arange(n - 1)
        H[idx, idx + 1] = 1.0
        H[idx + 1, idx] = 1.0
    if box.periodic:
        H[0, n - 1] += 1.0
        H[n - 1, 0] += 1.0
    return H


def export_matrix(box: BoxOperator) -> str:
    """Dense text format: header line 'n boundary', then one row per line."""
    H = build_matrix(box)
    lines = [f"{box.n} {box.boundary}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in H]
    return "\n".join(lines) + "\n"


def _det(d: np.ndarray, E: float, start: int, length: int) -> ScaledValue:
    s, l = K.scaled_det(d, float(E), start, length)
    return ScaledValue(int(s), l)


def det_dirichlet(box: BoxOperator, E: float) -> ScaledValue:
    if box.periodic:
        raise PreconditionError("det_dirichlet needs a Dirichlet box")
    return _det(box.diagonal(), E, 0, box.n)


def det_periodic(box: BoxOperator, E: float) -> ScaledValue:
    """Periodic determinant from two Dirichlet recurrences:
    P~_n(x) = P_n(x) - P_{n-2}(Tx) - 2(-1)^n."""
    if not box.periodic:
        raise PreconditionError("det_periodic needs a periodic box")
    d = box.diagonal()
    n = box.n
    full = _det(d, E, 0, n)
    inner = _det(d, E, 1, n - 2)
    corner = ScaledValue(-1 if n % 2 == 0 else 1, math.log(2.0))
    return scaled_sum([full, -inner, corner])


@dataclass(frozen=True)
class TransferProduct:
    matrix: np.ndarray  # normalised, max |entry| = 1
    log_scale: float
    n: int

    @property
    def log_norm(self) -> float:
        m = self.matrix
        return self.log_scale + math.log(K.norm2x2(m[0, 0], m[0, 1], m[1, 0], m[1, 1]))

    def entry(self, i: int, j: int) -> ScaledValue:
        v = self.matrix[i, j]
        if v == 0:
            return ScaledValue(0, -math.inf)
        return ScaledValue(1 if v > 0 else -1, math.log(abs(v)) + self.log_scale)

    def log_abs_det(self) -> float:
        """ln|det| of the represented product (0 in exact arithmetic).

        The 2x2 determinant of the normalised matrix cancels to rounding level
        once the product grows past about 1e8, so this is only meaningful for
        short products; long ones need extended precision.
        """
        m = self.matrix
        return math.log(abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])) + 2 * self.log_scale


def transfer_from_diagonal(d: np.ndarray, E: float) -> TransferProduct:
    m00, m01, m10, m11, ls = K.transfer_product(np.ascontiguousarray(d, dtype=float), float(E))
    return TransferProduct(np.array([[m00, m01], [m10, m11]]), ls, len(d))


def transfer(lam: float, potential: Potential, cmap: CircleMap, x: float, E: float, n: int) -> TransferProduct:
    if n < 1:
        raise PreconditionError("n must be >= 1")
    return transfer_from_diagonal(site_values(lam, potential, cmap, x, 0, n), E)


def transfer_identities(d: np.ndarray, E: float) -> dict[str, tuple[ScaledValue, ScaledValue]]:
    """Pairs (entry of M_n, matching determinant) for the four entries.

    The entries are determinants of E - H, so each P picks up the sign
    (-1)^(size of its box).
    """
    n = len(d)
    tp = transfer_from_diagonal(d, E)

    def p(start, length):
        v = _det(d, E, start, length)
        return -v if length % 2 else v

    return {
        "00": (tp.entry(0, 0), p(0, n)),
        "10": (tp.entry(1, 0), p(0, n - 1)),
        "01": (tp.entry(0, 1), -p(1, n - 1)),
        "11": (tp.entry(1, 1), -p(1, n - 2) if n >= 2 else ScaledValue(0, -math.inf)),
    }


# -- spectra ------------------------------------------------------------------

def _eig_cap(box: BoxOperator) -> None:
    check_cap("eigen_periodic" if box.periodic else "eigen_dirichlet", box.n)


def eigenvalues(box: BoxOperator, tol: float = EIG_TOL) -> np.ndarray:
    """All eigenvalues in non-decreasing order, by Sturm-count bisection."""
    _eig_cap(box)
    d = np.ascontiguousarray(box.diagonal())
    ev = K.bisect_eigs(d, box.periodic, 0, box.n, tol)
    if box.periodic:
        _interlacing_guard(d, ev)
    return ev


def eigenvalues_in_window(box: BoxOperator, e1: float, e2: float, tol: float = EIG_TOL) -> tuple[int, np.ndarray]:
    """(first index, eigenvalues) of the eigenvalues in [e1, e2]."""
    _eig_cap(box)
    d = np.ascontiguousarray(box.diagonal())
    lo = K._count(d, np.nextafter(e1, -np.inf), box.periodic)
    hi = K._count(d, e2, box.periodic)
    return lo, K.bisect_eigs(d, box.periodic, lo, hi, tol)


def _interlacing_guard(d: np.ndarray, ev: np.ndarray) -> None:
    # rank-two interlacing: mu~_i lies between the Dirichlet mu_{i-2} and mu_{i+2}
    n = len(d)
    for i in (0, n // 2, n - 1):
        cd = K.sturm_count(d, ev[i])
        cp = K.periodic_count(d, ev[i])
        if abs(cd - cp) > 2:
            raise BracketFailure(f"periodic eigenvalue {i} violates rank-two interlacing", index=i)


def count_below(box: BoxOperator, E: float) -> int:
    """Number of eigenvalues <= E."""
    _eig_cap(box)
    d = np.ascontiguousarray(box.diagonal())
    c_dir = K.sturm_count(d, float(E))
    if not box.periodic:
        return int(c_dir)
    c_per = K.periodic_count(d, float(E))
    if abs(c_per - c_dir) > 2:
        raise BracketFailure(f"periodic count {c_per} vs Dirichlet {c_dir} at E={E}")
    return int(c_per)


def periodic_spectra(D: np.ndarray) -> np.ndarray:
    """Sorted periodic spectra for every row of D (dense, batched)."""
    m, n = D.shape
    H = np.zeros((m, n, n))
    idx = np.arange(n)
    H[:, idx, idx] = D
    H[:, idx[:-1], idx[:-1] + 1] = 1.0
    H[:, idx[:-1] + 1, idx[:-1]] = 1.0
    H[:, 0, n - 1] += 1.0
    H[:, n - 1, 0] += 1.0
    return np.linalg.eigvalsh(H)


def periodic_spectra_rows(D: np.ndarray, threads: int | None = None) -> np.ndarray:
    n = D.shape[1]
    if n <= _DENSE_PERIODIC_MAX:
        parts = ordered_map(lambda se: periodic_spectra(D[se[0]:se[1]]), chunks(len(D), 8), threads)
        return np.concatenate(parts) if parts else np.empty((0, n))
    rows = ordered_map(lambda r: K.bisect_eigs(np.ascontiguousarray(D[r]), True, 0, n, EIG_TOL),
                       range(len(D)), threads)
    return np.array(rows)


# -- Green entries -------------------------------------------------------------

def green_from_diagonal(d: np.ndarray, E: float, a: int, b: int, row: int, col: int) -> ScaledValue:
    """G(a, row) or G(row, b) of (H_[a,b] - E)^{-1}; d indexed by lattice site.

    In determinant form G(a, n) = (-1)^(n-a) P_{b-n}(T^{n+1}x) / P_{b-a+1}(T^a x)
    and G(n, b) = (-1)^(b-n) P_{n-a}(T^a x) / P_{b-a+1}(T^a x); both ratios are
    evaluated through the pivots of a factorisation twisted at n, which keeps
    full relative accuracy when the window is close to resonance.
    """
    if not a <= row <= b:
        raise PreconditionError("row must lie in the window")
    if col not in (a, b):
        raise PreconditionError("col must be a window endpoint")
    sa, la, sb, lb, ldet = K.green_pivots(d, float(E), a, b, row)
    if not ldet >= NEAR_SINGULAR_LOG:
        raise NearSingularWindow(f"window [{a},{b}] is singular at E={E}", a=a, b=b)
    if col == a:
        return ScaledValue(int(sa), la)
    return ScaledValue(int(sb), lb)


def green_from_determinants(d: np.ndarray, E: float, a: int, b: int, row: int, col: int) -> ScaledValue:
    """The same entries as plain ratios of scaled determinants (second route)."""
    den = _det(d, E, a, b - a + 1)
    if den.sign == 0 or den.log_mag < NEAR_SINGULAR_LOG:
        raise NearSingularWindow(f"window [{a},{b}] is singular at E={E}", a=a, b=b)
    if col == a:
        num = _det(d, E, row + 1, b - row)
        sign = -1 if (row - a) % 2 else 1
    else:
        num = _det(d, E, a, row - a)
        sign = -1 if (b - row) % 2 else 1
    out = num / den
    return ScaledValue(out.sign * sign, out.log_mag)


def green_entry(lam: float, potential: Potential, cmap: CircleMap, x: float, E: float,
                a: int, b: int, row: int, col: int) -> ScaledValue:
    if a < 0:
        raise PreconditionError("window sites are measured from the base phase and must be >= 0")
    d = site_values(lam, potential, cmap, x, 0, b + 1)
    return green_from_diagonal(np.ascontiguousarray(d), E, a, b, row, col)


# -- eigenvalue curves ---------------------------------------------------------

@dataclass(frozen=True)
class EigenvalueCurves:
    k: int
    qk: int
    x: np.ndarray            # phases, sorted
    u: np.ndarray            # phi(x)
    interval: np.ndarray     # l with x in I_l (left limits belong to the interval they close)
    left_limit: np.ndarray   # True for the sample beta_{l+1} - 0
    mu: np.ndarray           # (len(x), q_k) sorted periodic eigenvalues
    beta: np.ndarray         # sorted discontinuities
    beta_angle: np.ndarray
    beta_site: np.ndarray    # j with T^j(beta_l) = 0
    lam: float
    gamma: tuple[float, float]
    C: tuple[float, float]

    def stitched(self) -> np.ndarray:
        """Lambda_i(x) = mu_{(i + l) mod q_k}(x) on I_l."""
        q = self.qk
        cols = (np.arange(q)[None, :] + self.interval[:, None]) % q
        return np.take_along_axis(self.mu, cols, axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "i", "mu"])
        for r in range(len(self.x)):
            xs = repr(float(self.x[r]))
            for i in range(self.qk):
                w.writerow([xs, i, repr(float(self.mu[r, i]))])
        return buf.getvalue()

    def beta_json(self) -> str:
        return json.dumps({"k": self.k, "qk": self.qk, "beta": [float(b) for b in self.beta],
                           "site": [int(j) for j in self.beta_site]}, indent=2)


def discontinuities(cmap: CircleMap, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted {T^-j(0)}, j < n, as (points, angles, j)."""
    ang = wrap(-np.asarray(frac_multiples(cmap.alpha, 0, n)))
    order = np.argsort(ang, kind="stable")
    ang = ang[order]
    return cmap.point(ang), ang, order


def eigenvalue_curves(lam: float, cmap: CircleMap, potential: Potential, k: int, m: int = 1024,
                      per_interval: int = 4, threads: int | None = None) -> EigenvalueCurves:
    cf = cmap.continued_fraction(k + 1)
    q = cf.q(k)
    if q < 3:
        raise PreconditionError(f"q_{k} = {q} is below the periodic minimum 3")
    check_cap("eigen_periodic", q)
    beta, beta_ang, beta_site = discontinuities(cmap, q)
    ends = np.append(beta_ang, 1.0)
    # uniform nu-grid, interior points in every I_l, beta_l and beta_{l+1} - 0
    u_grid = np.arange(m) / m
    t = np.arange(1, per_interval + 1) / (per_interval + 1)
    u_inner = (beta_ang[:, None] + np.diff(ends)[:, None] * t[None, :]).ravel()
    u_free = np.concatenate([u_grid, u_inner])
    u_free = u_free[~np.isin(u_free, beta_ang)]
    u_free = np.unique(u_free)
    l_free = np.searchsorted(beta_ang, u_free, side="right") - 1

    fr = frac_multiples(cmap.alpha, 0, q)
    ang_free = wrap(u_free[:, None] + fr[None, :])
    D_free = lam * potential(cmap.point(ang_free))
    ang_beta = wrap(beta_ang[:, None] + fr[None, :])
    D_beta = lam * potential(cmap.point(ang_beta))
    rows = np.arange(q)
    D_beta[rows, beta_site] = 0.0
    D_left = D_beta.copy()
    D_left[rows, beta_site] = lam * LEFT_LIMIT_AT_JUMP

    u_all = np.concatenate([u_free, beta_ang, beta_ang])
    l_all = np.concatenate([l_free, rows, (rows - 1) % q])
    left = np.concatenate([np.zeros(len(u_free), bool), np.zeros(q, bool), np.ones(q, bool)])
    D = np.concatenate([D_free, D_beta, D_left])
    # sort by angle; a left limit sorts just before its beta
    key_u = np.where(left & (u_all == 0.0), 1.0, u_all)
    order = np.lexsort((~left, key_u))
    mu = periodic_spectra_rows(D[order], threads)
    u_sorted = u_all[order]
    gm, gp = min(potential.slopes), max(potential.slopes)
    return EigenvalueCurves(k, q, cmap.point(u_sorted), u_sorted, l_all[order], left[order], mu,
                            beta, beta_ang, beta_site, lam, (gm, gp), cmap.constants)


def box_spectra_at(lam: float, potential: Potential, cmap: CircleMap, q: int, angles: np.ndarray,
                   threads: int | None = None) -> np.ndarray:
    """Periodic spectra of size-q boxes at the phases with the given angles."""
    fr = frac_multiples(cmap.alpha, 0, q)
    D = lam * potential(cmap.point(wrap(np.asarray(angles)[:, None] + fr[None, :])))
    return periodic_spectra_rows(D, threads)


# -- checks on the curves --------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float   # worst margin-relevant quantity
    bound: float
    pairs: int
    ok: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "measured": self.measured, "bound": self.bound,
                "pairs": self.pairs, "ok": self.ok, **self.extra}


def lipschitz_check(curves: EigenvalueCurves, rng: np.random.Generator, pairs: int = 2000,
                    slack: float = 1e-8) -> CheckResult:
    """lam g- C- nu([x,y]) <= mu_i(y) - mu_i(x) <= lam g+ C+ nu([x,y]) for x < y in one I_l."""
    lo_c = curves.lam * curves.gamma[0] * curves.C[0]
    hi_c = curves.lam * curves.gamma[1] * curves.C[1]
    # position inside the closed interval: left limits sit at the right end
    u = curves.u.copy()
    u = np.where(curves.left_limit & (u == 0.0), 1.0, u)
    by_l: dict[int, np.ndarray] = {}
    for l in np.unique(curves.interval):
        by_l[int(l)] = np.flatnonzero(curves.interval == l)
    # consecutive pairs plus random pairs inside each interval
    A, B = [], []
    for idx in by_l.values():
        idx = idx[np.argsort(u[idx], kind="stable")]
        A.extend(idx[:-1])
        B.extend(idx[1:])
    keys = sorted(by_l)
    for _ in range(pairs):
        idx = by_l[keys[rng.integers(len(keys))]]
        if len(idx) < 2:
            continue
        i, j = rng.choice(len(idx), 2, replace=False)
        a, b = idx[i], idx[j]
        if u[a] > u[b]:
            a, b = b, a
        A.append(a)
        B.append(b)
    A = np.array(A)
    B = np.array(B)
    nu = u[B] - u[A]
    diff = curves.mu[B] - curves.mu[A]
    low_viol = lo_c * nu[:, None] - diff
    high_viol = diff - hi_c * nu[:, None]
    worst = float(max(low_viol.max(), high_viol.max()))
    return CheckResult("lipschitz", worst, slack, len(A), worst <= slack)


def _crossing(cmap: CircleMap, angles: np.ndarray, q: int, r: int, dev: float) -> np.ndarray:
    """True where a site swapped by the shift r sits on an arc [T^i x, T^{q+i} x] through 0."""
    if r == 0:
        return np.zeros(len(angles), bool)
    # arcs start at sites 0..r-1 (r > 0) or r..-1 (r < 0) and have signed mass dev
    fr = frac_multiples(cmap.alpha, 0, r) if r > 0 else frac_multiples(cmap.alpha, r, -r)
    a = wrap(angles[:, None] + fr[None, :])
    shifted = a + dev
    return np.any((shifted < 0) | (shifted >= 1), axis=1)


def horizontal_check(lam: float, potential: Potential, cmap: CircleMap, k: int,
                     rng: np.random.Generator, pairs: int = 1000, slack: float = 1e-8,
                     threads: int | None = None) -> CheckResult:
    """|mu~_i(x) - mu~_i(T^r x)| <= lam g+ C+ / q_{k+1} for |r| < q_k.

    Also reports the same maximum restricted to pairs where no swapped site
    crosses the discontinuity of f.
    """
    cf = cmap.continued_fraction(k + 1)
    q, q1 = cf.q(k), cf.q(k + 1)
    bound = lam * max(potential.slopes) * cmap.constants[1] / q1
    u = rng.random(pairs)
    r = rng.integers(-q + 1, q, pairs)
    fr_r = np.array([frac_multiples(cmap.alpha, int(s), 1)[0] for s in r])
    u2 = wrap(u + fr_r)
    mu1 = box_spectra_at(lam, potential, cmap, q, u, threads)
    mu2 = box_spectra_at(lam, potential, cmap, q, u2, threads)
    dist = np.abs(mu1 - mu2).max(axis=1)
    from .arithmetic import signed_deviation
    dev = float(signed_deviation(k, cf, cmap.alpha).value)
    cross = np.array([_crossing(cmap, u[i:i + 1], q, int(r[i]), dev)[0] for i in range(pairs)])
    worst = float(dist.max())
    worst_nc = float(dist[~cross].max()) if np.any(~cross) else 0.0
    return CheckResult("horizontal", worst, bound + slack, pairs, worst <= bound + slack,
                       {"worst_non_crossing": worst_nc, "non_crossing_ok": worst_nc <= bound + slack,
                        "crossing_fraction": float(cross.mean())})


def global_horizontal_check(curves: EigenvalueCurves, rng: np.random.Generator, pairs: int = 2000,
                            slack: float = 1e-8) -> CheckResult:
    """|mu~_i(x) - mu~_i(y)| <= 3 lam g+ C+ / q_k on sampled pairs."""
    bound = 3 * curves.lam * curves.gamma[1] * curves.C[1] / curves.qk
    n = len(curves.x)
    spread = float((curves.mu.max(axis=0) - curves.mu.min(axis=0)).max())
    a = rng.integers(0, n, pairs)
    b = rng.integers(0, n, pairs)
    worst = float(np.abs(curves.mu[a] - curves.mu[b]).max())
    # the extreme pair over all samples is the per-index spread
    worst = max(worst, spread)
    return CheckResult("global-horizontal", worst, bound + slack, pairs, worst <= bound + slack)


def vertical_threshold(gamma: tuple[float, float], C: tuple[float, float], eps: float) -> int:
    return math.ceil(2 * gamma[1] * C[1] / (eps * gamma[0] * C[0]) - 1e-12)


def vertical_check(curves: EigenvalueCurves, eps: float = 0.5, slack: float = 1e-8) -> CheckResult:
    """mu~_{i+j}(x) - mu~_i(x) >= lam g- C- (1 - eps) j / q_k for all j >= j_0."""
    q = curves.qk
    j0 = vertical_threshold(curves.gamma, curves.C, eps)
    d0 = curves.lam * curves.gamma[0] * curves.C[0] * (1 - eps)
    worst = -math.inf
    pairs = 0
    for j in range(j0, q):
        gap = curves.mu[:, j:] - curves.mu[:, :-j]
        viol = d0 * j / q - gap
        worst = max(worst, float(viol.max()))
        pairs += gap.size
    if pairs == 0:
        worst = -math.inf
    return CheckResult("vertical", worst, slack, pairs, worst <= slack, {"j0": j0})


def jump_interlacing_check(curves: EigenvalueCurves, slack: float = 1e-8) -> CheckResult:
    """mu~_i(b - 0) <= mu~_{i+1}(b) <= mu~_{i+1}(b - 0) at every discontinuity b."""
    worst = -math.inf
    q = curves.qk
    at = ~curves.left_limit & np.isin(curves.u, curves.beta_angle)
    for ang in curves.beta_angle:
        i_at = np.flatnonzero(at & (curves.u == ang))[0]
        i_left = np.flatnonzero(curves.left_limit & (curves.u == ang))[0]
        m_at, m_left = curves.mu[i_at], curves.mu[i_left]
        worst = max(worst, float((m_left[:-1] - m_at[1:]).max()), float((m_at[1:] - m_left[1:]).max()))
    return CheckResult("jump-interlacing", worst, slack, q * (q - 1), worst <= slack)


def interlacing_count_check(box: BoxOperator, energies) -> bool:
    """|N_n - N~_n| <= 2 at every energy (rank-two perturbation)."""
    d = np.ascontiguousarray(box.diagonal())
    for E in energies:
        if abs(K.sturm_count(d, float(E)) - K.periodic_count(d, float(E))) > 2:
            return False
    return True
