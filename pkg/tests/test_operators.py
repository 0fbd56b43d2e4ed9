import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cslab import _kernels as K
from cslab.circle_maps import CircleMap
from cslab.errors import NearSingularWindow, PreconditionError
from cslab.operators import (
    BoxOperator,
    ScaledValue,
    build_matrix,
    count_below,
    det_dirichlet,
    det_periodic,
    eigenvalue_curves,
    eigenvalues,
    green_entry,
    green_from_determinants,
    green_from_diagonal,
    interlacing_count_check,
    jump_interlacing_check,
    lipschitz_check,
    scaled_sum,
    site_values,
    transfer,
    transfer_from_diagonal,
    vertical_check,
)
from cslab.potentials import Potential

diagonals = arrays(np.float64, st.integers(3, 40), elements=st.floats(-12, 12))


def dense_det(H):
    s, l = np.linalg.slogdet(H)
    return ScaledValue(int(s), l)


def box(n, x=0.1, lam=10.0, boundary="dirichlet", cmap=None):
    return BoxOperator(lam, Potential.sawtooth(), cmap or CircleMap.rotation(), x, n, boundary)


# -- matrices and determinants

def test_single_site_matrix():
    b = box(1, x=0.3)
    assert build_matrix(b) == pytest.approx(np.array([[3.0]]))


def test_free_periodic_triangle():
    H = build_matrix(box(3, lam=0.0, boundary="periodic"))
    assert np.array_equal(H, np.ones((3, 3)) - np.eye(3))


def test_two_site_periodic_rejected():
    with pytest.raises(PreconditionError):
        box(2, boundary="periodic")


def test_small_determinants():
    assert float(det_dirichlet(box(1, x=0.3), 1.0)) == pytest.approx(2.0)
    assert float(det_dirichlet(box(2, lam=0.0), 0.0)) == pytest.approx(-1.0)
    assert float(det_periodic(box(3, lam=0.0, boundary="periodic"), 0.0)) == pytest.approx(2.0)


def test_dirichlet_determinant_vs_dense():
    b = box(32, x=0.1)
    H = build_matrix(b) - 5.0 * np.eye(32)
    assert det_dirichlet(b, 5.0).rel_close(dense_det(H), 1e-10)


def test_periodic_determinant_vs_dense():
    b = box(4, x=0.3, boundary="periodic")
    H = build_matrix(b) - np.eye(4)
    assert det_periodic(b, 1.0).rel_close(dense_det(H), 1e-10)


def test_periodic_determinant_changes_sign_at_eigenvalues():
    b = box(9, x=0.2, boundary="periodic")
    ev = np.linalg.eigvalsh(build_matrix(b))
    mids = (ev[:-1] + ev[1:]) / 2
    simple = np.diff(ev) > 1e-6
    signs = np.array([det_periodic(b, m).sign for m in mids])
    assert np.all(simple)
    assert np.all(signs[1:] * signs[:-1] == -1)


@given(diagonals, st.floats(-14, 14))
def test_scaled_determinant_matches_mpmath(d, E):
    ctx = mpmath.MPContext()
    ctx.dps = 50
    p0, p1 = ctx.mpf(1), ctx.mpf(d[0]) - E
    for v in d[1:]:
        p0, p1 = p1, (ctx.mpf(v) - E) * p1 - p0
    got = det_dirichlet(BoxOperator.from_diagonal(d), E)
    if p1 == 0 or got.sign == 0:
        return
    exact = ScaledValue(1 if p1 > 0 else -1, float(ctx.log(abs(p1))))
    # forward recurrence: error relative to the largest partial product
    if abs(p1) > ctx.mpf(10) ** -6 * max(abs(ctx.mpf(v) - E) + 2 for v in d) ** len(d):
        assert got.rel_close(exact, 1e-6)


def test_scaled_sum_cancels():
    a = ScaledValue.from_float(3.0)
    assert scaled_sum([a, -a]).sign == 0
    assert float(scaled_sum([a, ScaledValue.from_float(-1.0)])) == pytest.approx(2.0)


# -- transfer matrices

def test_one_step_transfer():
    t = transfer(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.3, 1.0, 1)
    M = t.matrix * math.exp(t.log_scale)
    assert M == pytest.approx(np.array([[1.0 - 3.0, -1.0], [1.0, 0.0]]))


def test_free_growth_rate():
    t = transfer_from_diagonal(np.zeros(100), 3.0)
    assert t.log_norm / 100 == pytest.approx(math.log((3 + math.sqrt(5)) / 2), abs=2e-2)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_short_transfer_unimodular(n):
    d = site_values(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.17, 0, n)
    assert abs(transfer_from_diagonal(np.ascontiguousarray(d), 4.2).log_abs_det()) < 1e-10


@pytest.mark.parametrize("n", [100, 1000])
def test_long_transfer_unimodular_extended(n):
    ctx = mpmath.MPContext()
    ctx.dps = 2 * n + 40  # entries grow like e^(L n); det cancels twice that
    d = site_values(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.17, 0, n)
    M = ctx.eye(2)
    for v in d:
        M = ctx.matrix([[ctx.mpf(4.2) - ctx.mpf(float(v)), -1], [1, 0]]) * M
    assert abs(ctx.det(M) - 1) < 1e-10
    # the float product agrees with the extended one in direction
    t = transfer_from_diagonal(np.ascontiguousarray(d), 4.2)
    top = max(abs(v) for v in M)
    ref = np.array((M / top).tolist(), dtype=float)
    assert t.log_norm == pytest.approx(float(ctx.log(top)) + math.log(np.linalg.norm(ref, 2)), rel=1e-10)


@given(diagonals, st.floats(-14, 14))
def test_transfer_entries_are_determinants(d, E):
    # M_n(1,1) = det(E - H_n) = (-1)^n P_n
    t = transfer_from_diagonal(d, E)
    p = det_dirichlet(BoxOperator.from_diagonal(d), E)
    m = t.entry(0, 0)
    if p.sign and m.sign and p.log_mag > t.log_scale - 20:
        assert m.sign == p.sign * (-1) ** len(d)
        assert m.rel_close(ScaledValue(m.sign, p.log_mag), 1e-6)


# -- spectra

def test_free_periodic_spectrum():
    assert eigenvalues(box(3, lam=0.0, boundary="periodic")) == pytest.approx([-1, -1, 2], abs=1e-12)


def test_free_dirichlet_spectrum():
    expected = sorted(2 * math.cos(j * math.pi / 9) for j in range(1, 9))
    assert eigenvalues(box(8, lam=0.0)) == pytest.approx(expected, abs=1e-12)


def test_periodic_spectrum_vs_dense():
    b = box(5, x=0.2, boundary="periodic")
    assert eigenvalues(b) == pytest.approx(np.linalg.eigvalsh(build_matrix(b)), abs=1e-9)


def test_counts():
    assert count_below(box(8, lam=0.0), 0.0) == 4
    assert count_below(box(8), -3.0) == 0


@given(diagonals, st.sampled_from(["dirichlet", "periodic"]))
def test_eigenvalues_match_dense(d, boundary):
    b = BoxOperator.from_diagonal(d, boundary)
    ref = np.linalg.eigvalsh(build_matrix(b))
    assert eigenvalues(b) == pytest.approx(ref, abs=1e-9 * (1 + np.abs(ref).max()))


@given(diagonals, st.sampled_from(["dirichlet", "periodic"]), st.data())
def test_count_consistent_with_dense(d, boundary, data):
    b = BoxOperator.from_diagonal(d, boundary)
    ref = np.linalg.eigvalsh(build_matrix(b))
    i = data.draw(st.integers(0, len(d) - 1))
    # probe just off an eigenvalue, where the count is decided by one sign
    for E in (ref[i] - 1e-7, ref[i] + 1e-7):
        gap = np.abs(ref - E).min()
        if gap > 1e-9:
            assert count_below(b, E) == int(np.sum(ref <= E))


def test_periodic_count_stress():
    # near-resonant split blocks used to defeat the determinant-parity count
    rng = np.random.default_rng(482)
    bad = 0
    for _ in range(300):
        n = int(rng.integers(3, 80))
        d = rng.uniform(0, 10, n)
        H = build_matrix(BoxOperator.from_diagonal(d, "periodic"))
        ref = np.linalg.eigvalsh(H)
        for E in ref[:: max(1, n // 7)]:
            for E2 in (np.nextafter(E, -np.inf), E + 1e-9):
                want = int(np.sum(ref <= E2))
                got = K.periodic_count(d, E2)
                bad += abs(got - want) > 1 or (abs(E2 - ref).min() > 1e-10 and got != want)
    assert bad == 0


def test_interlacing_counts():
    assert interlacing_count_check(box(21, x=0.4, boundary="periodic"), np.linspace(-3, 13, 41))


# -- Green entries

def test_single_site_window():
    d = site_values(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.1, 0, 6)
    d = np.ascontiguousarray(d)
    assert float(green_from_diagonal(d, 4.0, 2, 2, 2, 2)) == pytest.approx(1 / (d[2] - 4.0))


def test_three_site_window_vs_dense():
    cmap, pot = CircleMap.rotation(), Potential.sawtooth()
    d = site_values(10.0, pot, cmap, 0.1, 0, 8)
    A = np.diag(d[3:6]) + np.diag([1.0, 1.0], 1) + np.diag([1.0, 1.0], -1) - 4.0 * np.eye(3)
    G = np.linalg.inv(A)
    for row in (3, 4, 5):
        assert float(green_entry(10.0, pot, cmap, 0.1, 4.0, 3, 5, row, 3)) == pytest.approx(G[row - 3, 0], rel=1e-9)
        assert float(green_entry(10.0, pot, cmap, 0.1, 4.0, 3, 5, row, 5)) == pytest.approx(G[row - 3, 2], rel=1e-9)


@given(diagonals, st.floats(-14, 14), st.data())
def test_green_two_routes(d, E, data):
    n = len(d)
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(a, n - 1))
    row = data.draw(st.integers(a, b))
    col = data.draw(st.sampled_from([a, b]))
    try:
        g1 = green_from_diagonal(d, E, a, b, row, col)
        g2 = green_from_determinants(d, E, a, b, row, col)
    except NearSingularWindow:
        return
    A = np.diag(d[a:b + 1] - E) + np.diag(np.ones(b - a), 1) + np.diag(np.ones(b - a), -1)
    if np.linalg.cond(A) < 1e6:
        ref = np.linalg.inv(A)[row - a, col - a]
        assert float(g1) == pytest.approx(ref, rel=1e-7, abs=1e-12)
        assert float(g2) == pytest.approx(ref, rel=1e-7, abs=1e-12)


def test_green_rejects_bad_column():
    with pytest.raises(PreconditionError):
        green_from_diagonal(np.zeros(5), 0.5, 0, 4, 2, 3)


# -- eigenvalue curves

def test_free_curves_are_flat():
    cur = eigenvalue_curves(0.0, CircleMap.rotation(), Potential.sawtooth(), 4, m=64)
    assert np.ptp(cur.mu, axis=0).max() < 1e-12


def test_minimum_scale_rejected():
    with pytest.raises(PreconditionError):
        eigenvalue_curves(10.0, CircleMap.rotation(), Potential.sawtooth(), 2, m=16)


def test_three_site_curves_interlace():
    cur = eigenvalue_curves(10.0, CircleMap.rotation(), Potential.sawtooth(), 3, m=64)
    assert cur.qk == 3 and len(cur.beta) == 3
    assert jump_interlacing_check(cur).ok


@pytest.mark.parametrize("cmap", [CircleMap.rotation(), CircleMap.sinusoidal(0.3)], ids=["rotation", "sinusoidal"])
def test_lipschitz_sandwich_q8(cmap):
    cur = eigenvalue_curves(10.0, cmap, Potential.sawtooth(), 5, m=256)
    res = lipschitz_check(cur, np.random.default_rng(1), pairs=1000)
    assert res.ok and res.pairs >= 1000
    assert vertical_check(cur).ok
