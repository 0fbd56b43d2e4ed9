"""Eigenvectors of large Dirichlet boxes and the localization diagnostics.

Eigenvectors are built from the two-sided ratio recurrences (a twisted
factorisation of ``H - E``), which gives ``ln|psi|`` with small relative
error even where ``|psi|`` is far below the underflow threshold.  Sites
of a box are labelled ``0 .. n-1`` from its base phase.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels as K
from .arithmetic import beta_estimate
from .errors import (
    IterationStall,
    NearSingularWindow,
    PreconditionError,
    TooFewPoints,
    check_cap,
)
from .operators import BoxOperator, eigenvalues_in_window, green_from_diagonal

RESIDUAL_TOL = 1e-8
CLUSTER_GAP = 1e-10


@dataclass(frozen=True)
class EigenpairDecay:
    E: float
    index: int                 # position in the box spectrum
    log_abs_psi: np.ndarray    # ln|psi|, max 0
    sign: np.ndarray
    n0: int
    residual: float
    rate: float = math.nan
    fit_quality: float = math.nan
    intercept: float = math.nan
    rate_stderr: float = math.nan
    window: tuple[int, int] = (0, 0)

    @property
    def psi(self) -> np.ndarray:
        return self.sign * np.exp(self.log_abs_psi)

    @property
    def n(self) -> int:
        return len(self.log_abs_psi)


def _normalise(logs: np.ndarray, signs: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    logs = logs - logs.max()
    n0 = int(np.flatnonzero(logs == 0.0)[0])
    if signs[n0] < 0:
        signs = -signs
    return logs, signs, n0


def _residual(d: np.ndarray, psi: np.ndarray, E: float) -> float:
    r = (d - E) * psi
    r[:-1] += psi[1:]
    r[1:] += psi[:-1]
    return float(np.abs(r).max())


def _inverse_iteration(d: np.ndarray, E: float, psi: np.ndarray, iters: int = 3) -> np.ndarray:
    n = len(d)
    shift = E + 1e-14 * max(1.0, abs(E))
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1] = d - shift
    ab[2, :-1] = 1.0
    for _ in range(iters):
        psi = solve_banded((1, 1), ab, psi)
        psi = psi / np.abs(psi).max()
    return psi


def eigenpairs(box: BoxOperator, e1: float, e2: float) -> list[EigenpairDecay]:
    """Eigenpairs of a Dirichlet box with eigenvalues in [e1, e2]."""
    if box.periodic:
        raise PreconditionError("eigenpairs needs a Dirichlet box")
    check_cap("eigenvector", box.n)
    first, evs = eigenvalues_in_window(box, e1, e2)
    return eigenpairs_at(box, first, evs)


def eigenpairs_by_index(box: BoxOperator, i_lo: int, i_hi: int) -> list[EigenpairDecay]:
    if box.periodic:
        raise PreconditionError("eigenpairs needs a Dirichlet box")
    check_cap("eigenvector", box.n)
    d = np.ascontiguousarray(box.diagonal())
    evs = K.bisect_eigs(d, False, i_lo, i_hi, 0.0)  # bisect down to adjacent doubles
    return eigenpairs_at(box, i_lo, evs)


def eigenpairs_at(box: BoxOperator, first: int, evs: np.ndarray) -> list[EigenpairDecay]:
    d = np.ascontiguousarray(box.diagonal())
    vecs = []
    for E in evs:
        logs, signs, _ = K.twisted_vector(d, float(E))
        logs, signs, _ = _normalise(logs, signs)
        vecs.append([float(E), logs, signs])
    # near-degenerate clusters: orthogonalise inside the cluster
    i = 0
    while i < len(vecs):
        j = i
        while j + 1 < len(vecs) and vecs[j + 1][0] - vecs[j][0] < CLUSTER_GAP:
            j += 1
        if j > i:
            block = np.array([s * np.exp(l) for _, l, s in vecs[i:j + 1]]).T
            Q, _ = np.linalg.qr(block)
            for t in range(j - i + 1):
                v = Q[:, t]
                with np.errstate(divide="ignore"):
                    lg = np.log(np.abs(v))
                lg, sg, _ = _normalise(np.maximum(lg, -1e300), np.where(v < 0, -1.0, 1.0))
                vecs[i + t][1], vecs[i + t][2] = lg, sg
        i = j + 1
    out = []
    for t, (E, logs, signs) in enumerate(vecs):
        psi = signs * np.exp(logs)
        res = _residual(d, psi, E)
        if res > RESIDUAL_TOL:
            psi = _inverse_iteration(d, E, psi)
            res = _residual(d, psi, E)
            if res > RESIDUAL_TOL:
                raise IterationStall(f"eigenvector residual {res:.3g} at E={E}", index=first + t)
            with np.errstate(divide="ignore"):
                lg = np.log(np.abs(psi))
            logs, signs, _ = _normalise(lg, np.where(psi < 0, -1.0, 1.0))
        n0 = int(np.flatnonzero(logs == 0.0)[0])
        out.append(EigenpairDecay(E, first + t, logs, signs, n0, res))
    return out


# -- decay fits ------------------------------------------------------------------

def decay_fit(pair: EigenpairDecay, floor: float = 1e-12, margin: int = 0,
              min_points: int = 20) -> EigenpairDecay:
    """Least-squares fit ln|psi(n)| ~ b - rate |n - n0| on sites above the floor.

    ``margin`` sites at each end of the box are excluded.
    """
    if not floor > 0 or math.log(floor) < -700:
        raise PreconditionError("floor must be a positive number above underflow")
    n = pair.n
    sites = np.arange(margin, n - margin)
    sites = sites[pair.log_abs_psi[sites] > math.log(floor)]
    if len(sites) < min_points:
        raise TooFewPoints(f"only {len(sites)} usable sites for the decay fit")
    x = np.abs(sites - pair.n0).astype(float)
    y = pair.log_abs_psi[sites]
    if np.ptp(x) == 0:
        raise TooFewPoints("all usable sites at the same distance from n0")
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    b, slope = float(coef[0]), float(coef[1])
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    quality = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    dof = max(len(x) - 2, 1)
    se = math.sqrt(ss_res / dof / float(((x - x.mean()) ** 2).sum()))
    return replace(pair, rate=-slope, fit_quality=quality, intercept=b, rate_stderr=se,
                   window=(int(sites.min()), int(sites.max())))


def synthetic_pair(psi: np.ndarray, E: float = 0.0) -> EigenpairDecay:
    """Wrap an explicit vector (used for oracles)."""
    psi = np.asarray(psi, dtype=float)
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(psi))
    logs, signs, n0 = _normalise(lg, np.where(psi < 0, -1.0, 1.0))
    return EigenpairDecay(E, 0, logs, signs, n0, 0.0)


# -- regular and singular sites ---------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    site: int
    qk: int
    c: float
    verdict: str              # "regular" or "singular"
    window: tuple[int, int] | None = None
    windows_tried: int = 0
    near_singular: int = 0

    @property
    def regular(self) -> bool:
        return self.verdict == "regular"


def admissible_windows(n: int, q: int) -> range:
    """a with b = a + q - 1, n in [a, b], |a - n| >= q/5 and |n - b| >= q/5."""
    m = math.ceil(q / 5)
    return range(n + m - q + 1, n - m + 1)


def classify_on_diagonal(d: np.ndarray, E: float, n: int, c: float, q: int) -> RegularityReport:
    """Regularity of site n of the lattice whose diagonal is d (sites 0..len(d)-1)."""
    wins = admissible_windows(n, q)
    if wins.start < 0 or wins.stop - 1 + q - 1 >= len(d):
        raise PreconditionError(f"windows around site {n} at scale {q} leave the lattice")
    tried = sing = 0
    for a in wins:
        b = a + q - 1
        tried += 1
        try:
            ga = green_from_diagonal(d, E, a, b, n, a)
            gb = green_from_diagonal(d, E, a, b, n, b)
        except NearSingularWindow:
            sing += 1
            continue
        if ga.log_mag <= -c * (n - a) and gb.log_mag <= -c * (b - n):
            return RegularityReport(n, q, c, "regular", (a, b), tried, sing)
    return RegularityReport(n, q, c, "singular", None, tried, sing)


def classify(box: BoxOperator, E: float, n: int, c: float, k: int) -> RegularityReport:
    q = box.cmap.continued_fraction(k).q(k)
    return classify_on_diagonal(np.ascontiguousarray(box.diagonal()), E, n, c, q)


@dataclass(frozen=True)
class SeparationResult:
    singular: tuple[int, ...]
    zone: tuple[int, int]          # exclusive lower, inclusive upper bound on n - m
    offending: tuple[tuple[int, int], ...]
    min_gap: int | None
    ok: bool


def separation_scan(box: BoxOperator, E: float, k: int, delta: float, L_hat: float,
                    sites: range, beta_hat: float | None = None, C0: float = 1.0) -> SeparationResult:
    """Classify every site and look for singular pairs inside the exclusion zone."""
    if not L_hat > 0:
        raise PreconditionError("no admissible delta when L(E) = 0")
    cf = box.cmap.continued_fraction(k + 3)
    q, q1 = cf.q(k), cf.q(k + 1)
    if beta_hat is None:
        beta_hat = beta_estimate(cf, k).proxy
    if not beta_hat / C0 < delta < L_hat:
        raise PreconditionError(f"delta={delta} outside ({beta_hat / C0}, {L_hat})")
    if len(sites) < q1:
        raise PreconditionError(f"scan range must cover at least q_(k+1) = {q1} sites")
    d = np.ascontiguousarray(box.diagonal())
    c = L_hat - delta
    sing = [s for s in sites if not classify_on_diagonal(d, E, s, c, q).regular]
    lo = (q + 1) / 2
    hi = q1 - 1 - (q + 1) / 2
    bad = [(m, n) for i, m in enumerate(sing) for n in sing[i + 1:] if lo < n - m <= hi]
    gaps = [b - a for a, b in zip(sing, sing[1:])]
    return SeparationResult(tuple(sing), (math.floor(lo), math.floor(hi)), tuple(bad),
                            min(gaps) if gaps else None, not bad)


def deviation_check(box: BoxOperator, E: float, n: int, q: int, L_hat: float, delta: float,
                    slack: float = 1e-6) -> tuple[float, bool]:
    """max over a in [n - floor(3q/4), n - floor(q/4)] of (1/q) ln|P_q(T^a x)| - (L - delta/10)."""
    d = np.ascontiguousarray(box.diagonal())
    a_lo, a_hi = n - (3 * q) // 4, n - q // 4
    if a_lo < 0 or a_hi + q > len(d):
        raise PreconditionError("deviation windows leave the lattice")
    worst = max(K.scaled_det(d, float(E), a, q)[1] / q for a in range(a_lo, a_hi + 1))
    excess = worst - (L_hat - delta / 10)
    return excess, excess <= slack


def window_count_bounds(q: int) -> bool:
    """(q+1)/2 <= floor(3q/4) - floor(q/4) + 1 <= (q+3)/2, in exact integers."""
    nk = (3 * q) // 4 - q // 4 + 1
    return q + 1 <= 2 * nk <= q + 3


# -- Poisson identity --------------------------------------------------------------

def poisson_residual(box: BoxOperator, pair: EigenpairDecay, a: int, b: int) -> float:
    """max over n in [a, b] of |psi(n) + G(a,n) psi(a-1) + G(n,b) psi(b+1)| in double precision.

    psi is scaled to max |psi| = 1.  The residual equals G applied to the
    backward error of (E, psi), so near-resonant windows amplify the
    rounding of E; see ``window_condition`` and ``poisson_residual_extended``.
    """
    _check_window(pair.n, a, b)
    d = np.ascontiguousarray(box.diagonal())
    lp, sg = pair.log_abs_psi, pair.sign
    worst = 0.0
    for n in range(a, b + 1):
        ga = green_from_diagonal(d, pair.E, a, b, n, a)
        gb = green_from_diagonal(d, pair.E, a, b, n, b)
        t1 = ga.sign * sg[a - 1] * math.exp(min(ga.log_mag + lp[a - 1], 700.0))
        t2 = gb.sign * sg[b + 1] * math.exp(min(gb.log_mag + lp[b + 1], 700.0))
        v = sg[n] * math.exp(lp[n]) + t1 + t2
        worst = max(worst, abs(v))
    return worst


def _check_window(n: int, a: int, b: int) -> None:
    if not (1 <= a <= b <= n - 2):
        raise PreconditionError("window must be interior to the box")


def window_condition(box: BoxOperator, E: float, a: int, b: int) -> float:
    """Condition factor max(1, u * cond_1(H_[a,b] - E) / 1e-7) of a Poisson window.

    A residual of 1e-7 times this factor is what double rounding of an
    exact eigenpair can produce.
    """
    check_cap("dense", b - a + 1)
    d = box.diagonal()[a:b + 1]
    m = b - a + 1
    A = np.diag(d - E) + np.eye(m, k=1) + np.eye(m, k=-1)
    kappa = float(np.linalg.cond(A, 1))
    return max(1.0, np.finfo(float).eps * kappa / 1e-7)


def _mp_twisted(d, E, mp):
    """Ratios from both ends, twist index and gamma at the twist, in mp arithmetic."""
    n = len(d)
    L = [mp.zero] * n
    R = [mp.zero] * n
    for j in range(1, n):
        L[j] = 1 / ((E - d[j - 1]) - L[j - 1])
    for j in range(n - 2, -1, -1):
        R[j] = 1 / ((E - d[j + 1]) - R[j + 1])
    gam = [L[j] + R[j] + d[j] - E for j in range(n)]
    t = min(range(n), key=lambda j: abs(gam[j]))
    psi = [mp.zero] * n
    psi[t] = mp.one
    for j in range(t - 1, -1, -1):
        psi[j] = psi[j + 1] * L[j + 1]
    for j in range(t + 1, n):
        psi[j] = psi[j - 1] * R[j - 1]
    return psi, t, gam[t]


def refine_pair(box: BoxOperator, pair: EigenpairDecay, dps: int = 60, steps: int = 3):
    """(E, psi) of the box matrix in mpmath precision ``dps``, seeded by ``pair``.

    Each step moves E by gamma_t psi_t^2 / ||psi||^2, the Rayleigh quotient
    correction for a factorisation twisted at t, which converges cubically.
    The matrix entries are the box's double diagonal taken as exact.
    """
    import mpmath

    ctx = mpmath.MPContext()
    ctx.dps = dps
    d = [ctx.mpf(float(v)) for v in box.diagonal()]
    E = ctx.mpf(pair.E)
    for _ in range(steps):
        psi, t, g = _mp_twisted(d, E, ctx)
        E = E + g * psi[t] ** 2 / ctx.fsum(v * v for v in psi)
    psi, t, g = _mp_twisted(d, E, ctx)
    top = max(abs(v) for v in psi)
    return E, [v / top for v in psi], ctx


def poisson_residual_extended(box: BoxOperator, pair: EigenpairDecay, a: int, b: int,
                              dps: int = 60, refined=None) -> float:
    """The same residual with the pair refined and G evaluated at ``dps`` digits.

    Pass ``refined`` (the result of ``refine_pair``) to reuse one refinement
    across several windows.
    """
    _check_window(pair.n, a, b)
    E, psi, ctx = refined if refined is not None else refine_pair(box, pair, dps)
    d = [ctx.mpf(float(v)) for v in box.diagonal()[a:b + 1]]
    m = b - a + 1
    # pivots from the left (u) and from the right (w) of the window
    u = [ctx.zero] * m
    w = [ctx.zero] * m
    for i in range(m):
        u[i] = d[i] - E - (1 / u[i - 1] if i else 0)
    for i in range(m - 1, -1, -1):
        w[i] = d[i] - E - (1 / w[i + 1] if i < m - 1 else 0)
    worst = ctx.zero
    pu = ctx.one
    for i in range(m):
        pw = ctx.one
        for j in range(i + 1, m):
            pw *= w[j]
        gam = d[i] - E - (1 / u[i - 1] if i else 0) - (1 / w[i + 1] if i < m - 1 else 0)
        ga = (-1) ** i / (pu * gam)
        gb = (-1) ** (m - 1 - i) / (gam * pw)
        v = psi[a + i] + ga * psi[a - 1] + gb * psi[b + 1]
        worst = max(worst, abs(v))
        pu *= u[i]
    return float(worst)


def poisson_residual_vector(box: BoxOperator, psi: np.ndarray, E: float, a: int, b: int) -> float:
    """Same residual for an arbitrary vector (detects non-eigenvectors)."""
    d = np.ascontiguousarray(box.diagonal())
    worst = 0.0
    for n in range(a, b + 1):
        ga = float(green_from_diagonal(d, E, a, b, n, a))
        gb = float(green_from_diagonal(d, E, a, b, n, b))
        worst = max(worst, abs(psi[n] + ga * psi[a - 1] + gb * psi[b + 1]))
    return worst


# -- uniform envelope --------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    C: float
    c: float
    violations: tuple[tuple[int, int], ...]   # (pair position, site)
    localized: bool
    tail_excess: int = 0


def uniform_envelope(pairs: list[EigenpairDecay], min_rate: float = 0.02) -> Envelope:
    """Common envelope C e^{-c|n - n0|} for fitted pairs.

    c is the smallest fitted rate minus its standard error; C is the largest
    intercept of the fitted lines of slope -c.  Violations are sites of a
    fit window above the envelope; ``tail_excess`` counts sites outside the
    fit windows (margins, sub-floor tails) that sit above it.
    """
    if len(pairs) < 2:
        raise PreconditionError("an envelope needs at least two pairs")
    if any(math.isnan(p.rate) for p in pairs):
        raise PreconditionError("fit every pair before building the envelope")
    c = min(p.rate - p.rate_stderr for p in pairs)
    c = max(c, 0.0)
    log_C = 0.0
    for p in pairs:
        lo, hi = p.window
        s = np.arange(lo, hi + 1)
        log_C = max(log_C, float(np.max(p.log_abs_psi[s] + c * np.abs(s - p.n0))))
    viol = []
    tail = 0
    for i, p in enumerate(pairs):
        s = np.arange(p.n)
        above = p.log_abs_psi - (log_C - c * np.abs(s - p.n0)) > 1e-9
        lo, hi = p.window
        inside = (s >= lo) & (s <= hi)
        viol.extend((i, int(site)) for site in np.flatnonzero(above & inside))
        tail += int(np.count_nonzero(above & ~inside))
    return Envelope(math.exp(log_C), c, tuple(viol), c > min_rate, tail)


def decay_floor(L_hat: float, beta_hat: float, eps: float = 0.1, C0: float = 1.0) -> float:
    """(1/10)(L - beta/C0 - eps)."""
    return (L_hat - beta_hat / C0 - eps) / 10


# -- export ------------------------------------------------------------------------

def pairs_csv(pairs: list[EigenpairDecay]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "E", "n0", "rate", "fit_quality"])
    for p in pairs:
        w.writerow([p.index, repr(p.E), p.n0, repr(p.rate), repr(p.fit_quality)])
    return buf.getvalue()


def decay_csv(pairs: list[EigenpairDecay], floor: float = 1e-12) -> str:
    """Tidy decay profiles: site, offset = |site - n0|, log_abs_psi."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["site", "offset", "log_abs_psi"])
    lf = math.log(floor)
    for p in pairs:
        for s in np.flatnonzero(p.log_abs_psi > lf):
            w.writerow([int(s), abs(int(s) - p.n0), repr(float(p.log_abs_psi[s]))])
    return buf.getvalue()


def dump_vectors(pairs: list[EigenpairDecay], path: Path) -> None:
    """psi vectors as little-endian float64 (path.bin) with a JSON header (path.json)."""
    path = Path(path)
    data = np.array([p.psi for p in pairs], dtype="<f8")
    path.with_suffix(".bin").write_bytes(data.tobytes(order="C"))
    header = {"dtype": "<f8", "order": "C", "count": len(pairs), "n": int(data.shape[1]) if len(pairs) else 0,
              "energies": [p.E for p in pairs], "n0": [p.n0 for p in pairs]}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
