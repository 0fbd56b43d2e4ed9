"""Compiled O(n) recurrences for tridiagonal and periodic Jacobi matrices.

All kernels take the diagonal ``d`` (off-diagonal entries are 1) and release
the GIL so callers can fan out over phases with a thread pool.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_PIVMIN = 1e-290
_EPS = 2.0 ** -52
_LOG_RESCALE = 2.0 ** 200
_LOG_RESCALE_LN = 200 * math.log(2.0)


@njit(cache=True, nogil=True)
def sturm_count(d, E):
    """Number of eigenvalues <= E of the Dirichlet matrix (a zero pivot counts as negative)."""
    n = d.shape[0]
    count = 0
    u = 1.0
    for i in range(n):
        if i == 0:
            u = d[0] - E
        else:
            u = d[i] - E - 1.0 / u
        if abs(u) < _PIVMIN:
            u = -_PIVMIN
        if u < 0:
            count += 1
    return count


# -- double-double arithmetic for the periodic-count fallback -----------------

@njit(cache=True, nogil=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, nogil=True)
def _two_prod(a, b):
    p = a * b
    c = 134217729.0 * a
    ah = c - (c - a)
    al = a - ah
    c = 134217729.0 * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True, nogil=True)
def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    s = p + e
    return s, e - (s - p)


@njit(cache=True, nogil=True)
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e += al + bl
    t = s + e
    return t, e - (t - s)


@njit(cache=True, nogil=True)
def _dd_det(d, E, start, length):
    """det(H - E) of a Dirichlet block in double-double: value = (hi + lo) * 2**e."""
    n = d.shape[0]
    ph, pl = 1.0, 0.0
    qh, ql = 0.0, 0.0
    e = 0
    big = 2.0 ** 500
    for i in range(length):
        ch, cl = _two_sum(d[(start + i) % n], -E)
        th, tl = _dd_mul(ch, cl, ph, pl)
        th, tl = _dd_add(th, tl, -qh, -ql)
        qh, ql = ph, pl
        ph, pl = th, tl
        if abs(ph) > big:
            ph, pl, qh, ql = ph / big, pl / big, qh / big, ql / big
            e += 500
        elif abs(ph) < 1.0 / big and abs(qh) < 1.0 / big and (ph != 0.0 or qh != 0.0):
            ph, pl, qh, ql = ph * big, pl * big, qh * big, ql * big
            e -= 500
    return ph, pl, e


@njit(cache=True, nogil=True)
def _periodic_det_sign(d, E):
    """Sign of det(H~ - E) = P_n - P_{n-2}(Tx) - 2(-1)^n, in double-double."""
    n = d.shape[0]
    h1, l1, e1 = _dd_det(d, E, 0, n)
    h2, l2, e2 = _dd_det(d, E, 1, n - 2)
    top = max(e1, e2, 0)
    f1 = 2.0 ** (e1 - top)
    f2 = 2.0 ** (e2 - top)
    c = (2.0 if n % 2 == 0 else -2.0) * 2.0 ** (-top)
    rh, rl = _dd_add(h1 * f1, l1 * f1, -h2 * f2, -l2 * f2)
    rh, rl = _dd_add(rh, rl, -c, 0.0)
    v = rh if rh != 0.0 else rl
    return 1 if v > 0 else (-1 if v < 0 else 0)


@njit(cache=True, nogil=True)
def _split_count(d, E, r, scale):
    """Periodic count with site j = r-1 (mod n) split off, plus a reliability flag.

    A is the Dirichlet block on sites r, ..., r+n-2 (mod n).  The count is
    the Sturm count of A plus one when the Schur complement
    s = (d_j - E) - G(m,m) - G(1,1) - 2 G(1,m), G = (A - E)^-1, is <= 0.
    A perturbation dA moves G(i,i) by about ||G e_i||^2 |dA| = |dG(i,i)/dE| |dA|,
    which bounds the rounding error of s; the flag is False when |s| does
    not clear that bound.
    """
    n = d.shape[0]
    m = n - 1
    count = 0
    u = 1.0
    du = 0.0
    log_det = 0.0
    sign_det = 1.0
    for i in range(m):
        v = d[(i + r) % n] - E
        if i == 0:
            u = v
            du = -1.0
        else:
            iu = 1.0 / u
            du = -1.0 + du * iu * iu
            u = v - iu
        if abs(u) < _PIVMIN:
            u = -_PIVMIN
        if u < 0:
            count += 1
            sign_det = -sign_det
        log_det += math.log(abs(u))
    g_mm = 1.0 / u
    dg_mm = abs(du) * g_mm * g_mm
    w = 1.0
    dw = 0.0
    for i in range(m - 1, -1, -1):
        v = d[(i + r) % n] - E
        if i == m - 1:
            w = v
            dw = -1.0
        else:
            iw = 1.0 / w
            dw = -1.0 + dw * iw * iw
            w = v - iw
        if abs(w) < _PIVMIN:
            w = -_PIVMIN
    g_11 = 1.0 / w
    dg_11 = abs(dw) * g_11 * g_11
    # G(1,m) = (-1)^(m-1) / det(A - E)
    if -log_det > 700.0:
        corner = np.inf
    else:
        corner = 2.0 * math.exp(-log_det)
    corner *= sign_det * (-1.0 if (m - 1) % 2 == 1 else 1.0)
    c = d[(r + m) % n] - E
    s = c - g_mm - g_11 - corner
    err = 16.0 * _EPS * (abs(c) + abs(g_mm) + abs(g_11) + abs(corner) + scale * (dg_mm + dg_11))
    if s <= 0.0:
        count += 1
    return count, abs(s) > err, scale * (dg_mm + dg_11)


@njit(cache=True, nogil=True)
def periodic_count(d, E):
    """Number of eigenvalues <= E of the periodic matrix (n >= 3).

    Inertia of a Dirichlet block A of size n-1 plus the sign of its Schur
    complement.  The matrix is invariant under cyclic relabelling, so when
    A is nearly resonant the split site is moved.  If no split decides the
    sign (E at a near-double eigenvalue, where every A resonates), interlacing
    leaves N_A or N_A + 1 and the sign of det(H~ - E) fixes the parity.
    """
    n = d.shape[0]
    scale = 1.0 + abs(E) + np.abs(d).max()
    count, ok, amp = _split_count(d, E, 0, scale)
    if ok:
        return count
    if amp > 1e6:
        tries = min(n, 8)
        for t in range(1, tries):
            c, ok, amp = _split_count(d, E, (t * n) // tries, scale)
            if ok:
                return c
    n_a = sturm_count(d[: n - 1], E)
    sg = _periodic_det_sign(d, E)
    if sg == 0:
        return n_a + 1
    odd = sg < 0
    return n_a if (n_a % 2 == 1) == odd else n_a + 1


@njit(cache=True, nogil=True)
def _count(d, E, periodic):
    if periodic:
        return periodic_count(d, E)
    return sturm_count(d, E)


@njit(cache=True, nogil=True)
def bisect_eigs(d, periodic, i_lo, i_hi, tol):
    """Eigenvalues with indices i_lo..i_hi-1 (ascending) by count bisection."""
    n = d.shape[0]
    lo_b = d.min() - 2.0 - tol
    hi_b = d.max() + 2.0 + tol
    k = i_hi - i_lo
    lo = np.full(k, lo_b)
    hi = np.full(k, hi_b)
    out = np.empty(k)
    for j in range(k):
        a = lo[j]
        b = hi[j]
        idx = i_lo + j
        while b - a > tol:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            c = _count(d, mid, periodic)
            # c eigenvalues lie below mid
            if c > idx:
                b = mid
            else:
                a = mid
            # share the information with the remaining indices
            for t in range(j + 1, k):
                if c > i_lo + t:
                    if mid < hi[t]:
                        hi[t] = mid
                else:
                    if mid > lo[t]:
                        lo[t] = mid
        out[j] = 0.5 * (a + b)
        for t in range(j + 1, k):
            if lo[t] < a:
                lo[t] = a
    return out


@njit(cache=True, nogil=True)
def scaled_det(d, E, start, length):
    """sign and log|.| of det(H - E) on sites start..start+length-1 (Dirichlet)."""
    if length == 0:
        return 1.0, 0.0
    p_prev = 1.0
    p = d[start] - E
    log_scale = 0.0
    for i in range(start + 1, start + length):
        p_new = (d[i] - E) * p - p_prev
        p_prev = p
        p = p_new
        a = abs(p)
        if a > _LOG_RESCALE:
            p /= _LOG_RESCALE
            p_prev /= _LOG_RESCALE
            log_scale += _LOG_RESCALE_LN
        elif a < 1.0 / _LOG_RESCALE and abs(p_prev) < 1.0 / _LOG_RESCALE and a > 0:
            p *= _LOG_RESCALE
            p_prev *= _LOG_RESCALE
            log_scale -= _LOG_RESCALE_LN
    if p == 0.0:
        return 0.0, -np.inf
    return (1.0 if p > 0 else -1.0), math.log(abs(p)) + log_scale


@njit(cache=True, nogil=True)
def transfer_product(d, E):
    """A_{n-1}...A_0 with A_i = [[E - d_i, -1], [1, 0]], normalised.

    Returns (m00, m01, m10, m11, log_scale) with max |m_ij| = 1.
    """
    a00, a01, a10, a11 = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for i in range(d.shape[0]):
        t = E - d[i]
        b00 = t * a00 - a10
        b01 = t * a01 - a11
        a10 = a00
        a11 = a01
        a00 = b00
        a01 = b01
        mx = max(abs(a00), abs(a01), abs(a10), abs(a11))
        if mx > 1e100 or mx < 1e-100:
            a00 /= mx
            a01 /= mx
            a10 /= mx
            a11 /= mx
            log_scale += math.log(mx)
    mx = max(abs(a00), abs(a01), abs(a10), abs(a11))
    return a00 / mx, a01 / mx, a10 / mx, a11 / mx, log_scale + math.log(mx)


@njit(cache=True, nogil=True)
def norm2x2(a, b, c, e):
    """Operator 2-norm of [[a, b], [c, e]]."""
    s = a * a + b * b + c * c + e * e
    det = a * e - b * c
    disc = s * s - 4.0 * det * det
    if disc < 0:
        disc = 0.0
    return math.sqrt(0.5 * (s + math.sqrt(disc)))


@njit(cache=True, nogil=True)
def log_norm_rows(D, E):
    """ln ||M_n|| for every row of D (one phase per row)."""
    out = np.empty(D.shape[0])
    for r in range(D.shape[0]):
        m00, m01, m10, m11, ls = transfer_product(D[r], E)
        out[r] = ls + math.log(norm2x2(m00, m01, m10, m11))
    return out


@njit(cache=True, nogil=True)
def count_rows(D, energies, periodic):
    """Eigenvalue counts at or below each energy, for every row."""
    out = np.empty((D.shape[0], energies.shape[0]), dtype=np.int64)
    for r in range(D.shape[0]):
        for j in range(energies.shape[0]):
            out[r, j] = _count(D[r], energies[j], periodic)
    return out


@njit(cache=True, nogil=True)
def twisted_vector(d, E):
    """Eigenvector approximation of the Dirichlet matrix at an eigenvalue E.

    Ratio recurrences from both ends, twisted at the index of smallest
    pivot; returns (log|psi|, sign(psi), twist index).  Logs keep the
    exponentially small tails exact in relative terms.
    """
    n = d.shape[0]
    L = np.zeros(n)   # psi(j-1)/psi(j) seen from the left
    R = np.zeros(n)   # psi(j+1)/psi(j) seen from the right
    for j in range(1, n):
        den = (E - d[j - 1]) - L[j - 1]
        if abs(den) < _PIVMIN:
            den = _PIVMIN
        L[j] = 1.0 / den
    for j in range(n - 2, -1, -1):
        den = (E - d[j + 1]) - R[j + 1]
        if abs(den) < _PIVMIN:
            den = _PIVMIN
        R[j] = 1.0 / den
    best = 0
    best_val = np.inf
    for j in range(n):
        g = abs(L[j] + R[j] + d[j] - E)
        if g < best_val:
            best_val = g
            best = j
    logs = np.zeros(n)
    signs = np.ones(n)
    for j in range(best - 1, -1, -1):
        r = L[j + 1]
        logs[j] = logs[j + 1] + (math.log(abs(r)) if r != 0 else -745.0)
        signs[j] = signs[j + 1] * (1.0 if r >= 0 else -1.0)
    for j in range(best + 1, n):
        r = R[j - 1]
        logs[j] = logs[j - 1] + (math.log(abs(r)) if r != 0 else -745.0)
        signs[j] = signs[j - 1] * (1.0 if r >= 0 else -1.0)
    return logs, signs, best


@njit(cache=True, nogil=True)
def logdet_rows(D, E):
    """ln|det(H - E)| for every row of D (Dirichlet)."""
    out = np.empty(D.shape[0])
    for r in range(D.shape[0]):
        s, l = scaled_det(D[r], E, 0, D.shape[1])
        out[r] = l
    return out


@njit(cache=True, nogil=True)
def logdet_prefix(d, E):
    """ln|P_k| for k = 1..n along one diagonal."""
    n = d.shape[0]
    out = np.empty(n)
    p_prev = 1.0
    p = d[0] - E
    log_scale = 0.0
    out[0] = math.log(abs(p)) if p != 0 else -np.inf
    for i in range(1, n):
        p_new = (d[i] - E) * p - p_prev
        p_prev = p
        p = p_new
        a = abs(p)
        if a > _LOG_RESCALE:
            p /= _LOG_RESCALE
            p_prev /= _LOG_RESCALE
            log_scale += _LOG_RESCALE_LN
        elif 0 < a < 1.0 / _LOG_RESCALE and abs(p_prev) < 1.0 / _LOG_RESCALE:
            p *= _LOG_RESCALE
            p_prev *= _LOG_RESCALE
            log_scale -= _LOG_RESCALE_LN
        out[i] = (math.log(abs(p)) + log_scale) if p != 0 else -np.inf
    return out


@njit(cache=True, nogil=True)
def green_pivots(d, E, a, b, n):
    """G(a, n) and G(n, b) of (H_[a,b] - E)^{-1} from a twisted factorisation.

    det(H_[a,b] - E) = (prod_{i<n} u_i) * gamma_n * (prod_{i>n} w_i) with u the
    pivots from the left and w those from the right, so
    G(a, n) = (-1)^(n-a) / (prod_{i<n} u_i * gamma_n) and
    G(n, b) = (-1)^(b-n) / (gamma_n * prod_{i>n} w_i).
    Returns (sign_a, log_a, sign_b, log_b, log|det|).
    """
    lu = 0.0
    su = 1.0
    u = 0.0
    inv_u = 0.0
    for i in range(a, n):
        if i == a:
            u = d[i] - E
        else:
            u = d[i] - E - inv_u
        if abs(u) < _PIVMIN:
            u = -_PIVMIN
        inv_u = 1.0 / u
        lu += math.log(abs(u))
        if u < 0:
            su = -su
    lw = 0.0
    sw = 1.0
    inv_w = 0.0
    for i in range(b, n, -1):
        if i == b:
            w = d[i] - E
        else:
            w = d[i] - E - inv_w
        if abs(w) < _PIVMIN:
            w = -_PIVMIN
        inv_w = 1.0 / w
        lw += math.log(abs(w))
        if w < 0:
            sw = -sw
    g = d[n] - E - inv_u - inv_w
    if g == 0.0:
        return 0.0, np.inf, 0.0, np.inf, -np.inf
    lg = math.log(abs(g))
    sg = 1.0 if g > 0 else -1.0
    sa = su * sg * (-1.0 if (n - a) % 2 else 1.0)
    sb = sw * sg * (-1.0 if (b - n) % 2 else 1.0)
    return sa, -(lu + lg), sb, -(lw + lg), lu + lg + lw
