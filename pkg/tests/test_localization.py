import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cslab.circle_maps import CircleMap
from cslab.errors import PreconditionError
from cslab.localization import (
    admissible_windows,
    classify,
    decay_csv,
    decay_fit,
    deviation_check,
    dump_vectors,
    eigenpairs,
    eigenpairs_by_index,
    pairs_csv,
    poisson_residual,
    poisson_residual_extended,
    poisson_residual_vector,
    separation_scan,
    synthetic_pair,
    uniform_envelope,
    window_condition,
    window_count_bounds,
)
from cslab.operators import BoxOperator, build_matrix
from cslab.potentials import Potential
from cslab.spectral import Model, lyapunov

N = 2048


@pytest.fixture(scope="module")
def big_box():
    cmap = CircleMap.rotation()
    return BoxOperator(10.0, Potential.sawtooth(), cmap, cmap.forward(0.0, -N // 2), N)


@pytest.fixture(scope="module")
def mid_pairs(big_box):
    pairs = eigenpairs_by_index(big_box, N // 2 - 25, N // 2 + 25)
    return [decay_fit(p, 1e-12, 7) for p in pairs]


@pytest.fixture(scope="module")
def central(mid_pairs):
    # the pair whose centre is nearest the middle of the box
    return min(mid_pairs, key=lambda p: abs(p.n0 - N // 2))


@pytest.fixture(scope="module")
def L_central(central):
    return lyapunov(Model(10.0, Potential.sawtooth(), CircleMap.rotation()), central.E, 100_000, 8).value


# -- eigenpairs and decay fits

def test_free_box_is_extended():
    b = BoxOperator(0.0, Potential.sawtooth(), CircleMap.rotation(), 0.0, 64)
    pairs = [decay_fit(p) for p in eigenpairs(b, -3.0, 3.0)]
    assert len(pairs) == 64
    # sin(pi j n / 65) standing waves: the log-fit slope is O(1/n) but noisy
    # (nodes, band-edge sine envelopes), so a few modes land just past 0.02
    rates = np.abs([p.rate for p in pairs])
    assert np.mean(rates <= 0.02) >= 0.9
    assert rates.max() < 0.1


def test_eigenpairs_against_dense():
    b = BoxOperator(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.3, 96)
    w, v = np.linalg.eigh(build_matrix(b))
    pairs = eigenpairs_by_index(b, 40, 50)
    for p in pairs:
        assert p.E == pytest.approx(w[p.index], abs=1e-10)
        ref = v[:, p.index] / v[np.argmax(np.abs(v[:, p.index])), p.index]
        assert np.allclose(p.psi, ref, atol=1e-8)


def test_mid_spectrum_pairs_localized(mid_pairs):
    assert len(mid_pairs) == 50
    for p in mid_pairs:
        assert p.residual <= 1e-8
        assert p.rate > 0 and p.fit_quality >= 0.95


def test_strong_coupling_near_delta():
    lam = 1e4
    b = BoxOperator(lam, Potential.sawtooth(), CircleMap.rotation(), 0.1, 256)
    pairs = eigenpairs_by_index(b, 100, 110)
    for p in pairs:
        fit = decay_fit(p, 1e-250, 0, min_points=10)
        assert fit.rate >= math.log(lam / 2) - 2
        assert np.sort(np.abs(p.psi))[-2] < 1e-3


def test_synthetic_exponential():
    n = np.arange(400)
    fit = decay_fit(synthetic_pair(np.exp(-0.5 * np.abs(n - 100))))
    assert fit.rate == pytest.approx(0.5, abs=1e-6)
    assert fit.fit_quality >= 0.999


def test_synthetic_constant():
    assert decay_fit(synthetic_pair(np.ones(100))).rate == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.05, 2.0), st.integers(60, 140))
def test_fit_recovers_rate(rate, centre):
    n = np.arange(200)
    fit = decay_fit(synthetic_pair(np.exp(-rate * np.abs(n - centre))), 1e-200, 0, 5)
    assert fit.rate == pytest.approx(rate, rel=1e-9)
    assert fit.n0 == centre


def test_rate_compared_with_exponent(central, L_central):
    ratio = central.rate / L_central
    assert 0.5 < ratio < 1.5


# -- regular and singular sites

def test_far_energy_is_regular():
    b = BoxOperator(10.0, Potential.sawtooth(), CircleMap.rotation(), 0.2, 200)
    E = -10.0
    dist = np.abs(np.linalg.eigvalsh(build_matrix(b)) - E).min()
    assert dist >= 1
    rep = classify(b, E, 100, math.log(dist) - math.log(2), 8)
    assert rep.regular


def test_centre_is_singular(big_box, central, L_central):
    assert not classify(big_box, central.E, central.n0, L_central - L_central / 2, 8).regular


def test_free_site_singular():
    b = BoxOperator(0.0, Potential.sawtooth(), CircleMap.rotation(), 0.0, 200)
    assert not classify(b, 0.0, 100, 0.1, 8).regular


def test_separation_scan(big_box, central, L_central):
    res = separation_scan(big_box, central.E, 8, L_central / 2, L_central,
                          range(central.n0 - 55, central.n0 + 55))
    assert res.ok and central.n0 in res.singular
    near = [s for s in res.singular if abs(s - central.n0) <= 55]
    cluster = [s for s in near if abs(s - central.n0) <= 17]
    assert max(cluster) - min(cluster) <= (34 + 1) / 2


def test_separation_needs_positive_exponent():
    b = BoxOperator(0.0, Potential.sawtooth(), CircleMap.rotation(), 0.0, 400)
    with pytest.raises(PreconditionError):
        separation_scan(b, 0.0, 8, 0.1, 0.0, range(150, 250))


def test_deviation_at_centre(big_box, central, L_central):
    excess, ok = deviation_check(big_box, central.E, central.n0, 34, L_central, L_central / 2)
    assert ok


@given(st.integers(1, 10_000))
def test_window_counts(q):
    assert window_count_bounds(q)


@given(st.integers(5, 500), st.integers(0, 1000))
def test_admissible_windows_contain_site(q, n):
    for a in admissible_windows(n, q):
        b = a + q - 1
        assert a <= n <= b
        assert n - a >= q / 5 and b - n >= q / 5


# -- Poisson identity

def test_poisson_identity(big_box, central):
    n0 = central.n0
    for a, b in ((n0 - 10, n0 + 20), (n0 - 17, n0 + 16), (n0 + 5, n0 + 39)):
        assert poisson_residual_extended(big_box, central, a, b) <= 1e-7
        assert poisson_residual(big_box, central, a, b) <= 1e-7 * window_condition(big_box, central.E, a, b)


def test_poisson_detects_noise(big_box, central):
    rng = np.random.default_rng(3)
    psi = central.psi + 1e-3 * rng.standard_normal(central.n)
    n0 = central.n0
    assert poisson_residual_vector(big_box, psi, central.E, n0 - 10, n0 + 20) >= 1e-4


# -- uniform envelope

def test_envelope_two_rates():
    n = np.arange(300)
    pairs = [decay_fit(synthetic_pair(np.exp(-r * np.abs(n - 150)))) for r in (0.4, 0.6)]
    env = uniform_envelope(pairs)
    assert env.c == pytest.approx(0.4, abs=1e-9)
    assert env.C == pytest.approx(1.0, abs=1e-9)
    assert env.violations == () and env.localized


def test_envelope_mid_spectrum(mid_pairs):
    env = uniform_envelope(mid_pairs)
    assert env.localized and env.c > 0 and env.violations == ()


def test_envelope_with_extended_pair(mid_pairs):
    free = BoxOperator(0.0, Potential.sawtooth(), CircleMap.rotation(), 0.0, N)
    ext = decay_fit(eigenpairs_by_index(free, N // 2, N // 2 + 1)[0])
    env = uniform_envelope(list(mid_pairs[:5]) + [ext])
    assert not env.localized and env.c < 0.02


# -- exports

def test_csv_headers(mid_pairs):
    assert pairs_csv(mid_pairs).splitlines()[0] == "index,E,n0,rate,fit_quality"
    rows = decay_csv(mid_pairs[:1]).splitlines()
    assert rows[0] == "site,offset,log_abs_psi"
    site, offset, _ = rows[1].split(",")
    assert int(offset) == abs(int(site) - mid_pairs[0].n0)


def test_dump_vectors(tmp_path, mid_pairs):
    dump_vectors(mid_pairs[:3], tmp_path / "vectors")
    head = json.loads((tmp_path / "vectors.json").read_text())
    data = np.fromfile(tmp_path / "vectors.bin", dtype=head["dtype"]).reshape(head["count"], head["n"])
    assert np.array_equal(data[1], mid_pairs[1].psi)
