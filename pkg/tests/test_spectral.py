import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cslab.circle_maps import CircleMap
from cslab.errors import PreconditionError
from cslab.potentials import Potential
from cslab.spectral import (
    Model,
    dos_histogram,
    ids,
    ids_lipschitz_check,
    ids_staircase_csv,
    ldt_scan,
    ldt_sweep,
    lyapunov,
    lyapunov_lower_bound,
    numerator_bound_check,
    periodic_counts,
    sample_angles,
    thouless_check,
)

FREE_L3 = math.log((3 + math.sqrt(5)) / 2)


@pytest.fixture(scope="module")
def free():
    return Model(0.0, Potential.sawtooth(), CircleMap.rotation())


@pytest.fixture(scope="module")
def model():
    return Model(10.0, Potential.sawtooth(), CircleMap.rotation())


@pytest.fixture(scope="module")
def L5(model):
    return lyapunov(model, 5.0, 100_000, 8).value


# -- Lyapunov exponent

def test_free_exponent_outside_band(free):
    assert lyapunov(free, 3.0, 1_000_000, 1).value == pytest.approx(FREE_L3, abs=1e-6)


def test_free_exponent_inside_band(free):
    assert lyapunov(free, 0.0, 10_000, 8).value <= 1e-2


def test_exponent_above_lower_bound(model, L5):
    assert lyapunov_lower_bound(model) == pytest.approx(math.log(10 / (2 * math.e)))
    assert L5 >= lyapunov_lower_bound(model)


def test_exponent_independent_of_threads(model):
    a = lyapunov(model, 2.5, 4096, 16, threads=1)
    b = lyapunov(model, 2.5, 4096, 16, threads=3)
    assert a == b


@settings(max_examples=15)
@given(st.floats(-3.0, 13.0))
def test_exponent_bound_across_energies(E):
    m = Model(10.0, Potential.sawtooth(), CircleMap.rotation())
    est = lyapunov(m, E, 10_000, 8)
    assert est.value >= lyapunov_lower_bound(m) - 3 * est.stderr - 1e-3


# -- integrated density of states

def test_free_ids_values(free):
    n = 4096
    v0, v1, vtop = (e.value for e in ids(free, [0.0, 1.0, 12.5], n, 4))
    assert v0 == pytest.approx(0.5, abs=2 / n)
    assert v1 == pytest.approx(2 / 3, abs=2 / n)
    assert vtop == 1.0


@settings(max_examples=20)
@given(st.floats(-1.99, 1.99))
def test_free_ids_closed_form(E):
    free = Model(0.0, Potential.sawtooth(), CircleMap.rotation())
    n = 1024
    v = ids(free, [E], n, 1)[0].value
    assert v == pytest.approx(1 - math.acos(E / 2) / math.pi, abs=2 / n + 1e-3)


def test_ids_monotone(model):
    grid = np.linspace(-3, 13, 41)
    vals = [e.value for e in ids(model, grid, 512, 8)]
    assert np.all(np.diff(vals) >= 0)
    assert vals[0] == 0.0 and vals[-1] == 1.0


def test_periodic_counts_match_dense(model):
    from cslab.operators import BoxOperator, build_matrix
    n, samples = 64, 4
    energies = np.linspace(-2, 12, 9)
    counts = periodic_counts(model, energies, n, samples)
    for s, u in enumerate(sample_angles(samples)):
        b = BoxOperator(10.0, model.potential, model.cmap, float(model.cmap.point(u)), n, "periodic")
        ev = np.linalg.eigvalsh(build_matrix(b))
        assert list(counts[s]) == [int(np.sum(ev <= E)) for E in energies]


def test_staircase_csv_header(model):
    text = ids_staircase_csv(ids(model, [1.0, 2.0], 128, 2))
    assert text.splitlines()[0] == "E,n,samples,value,stderr"
    assert len(text.splitlines()) == 3


def test_ids_lipschitz_examples(model):
    assert ids_lipschitz_check(model, 4.0, 4.5, 2048, 32).ok
    tiny = ids_lipschitz_check(model, 4.0 + 1e-9, 4.0, 2048, 32)
    assert tiny.lhs <= 4 / 2048
    conj = Model(10.0, Potential.sawtooth(), CircleMap.sinusoidal(0.3))
    assert ids_lipschitz_check(conj, 4.0, 4.5, 2048, 32).ok


# -- Thouless formula

@pytest.mark.parametrize("lam,E,tol", [(0.0, 3.0, 0.02), (10.0, 5.0, 0.05)])
def test_thouless_gap(lam, E, tol):
    m = Model(lam, Potential.sawtooth(), CircleMap.rotation())
    r = thouless_check(m, E, 4096, 32)
    assert r.gap <= tol
    if lam == 0:
        assert r.lhs == pytest.approx(FREE_L3, abs=1e-3)


def test_thouless_far_energy(model):
    r = thouless_check(model, 1e3, 1024, 8)
    assert r.lhs == pytest.approx(math.log(1e3), rel=1e-2)
    assert r.rhs == pytest.approx(math.log(1e3), rel=1e-2)


def test_histogram_mass(model):
    h = dos_histogram(model, 256, 4, 128)
    assert h.weights.sum() == pytest.approx(1.0)


# -- numerator bound

def test_numerator_bound_free(free):
    assert not numerator_bound_check(free, 3.0, 0.05, 50, 400, 8, FREE_L3).flag


def test_numerator_bound_coupled(model, L5):
    # the bound is asymptotic; below n ~ 40 single factors |lambda f - E| dominate
    assert not numerator_bound_check(model, 5.0, 0.1, 50, 500, 64, L5).flag
    assert numerator_bound_check(model, 5.0, 0.1, 1, 500, 64, L5).flag


def test_numerator_bound_rejects_kappa(free):
    with pytest.raises(PreconditionError):
        numerator_bound_check(free, 3.0, -0.5, 50, 100, 4, FREE_L3)


# -- large deviations

def test_ldt_component_bound(model, L5):
    r = ldt_scan(model, 5.0, 9, 0.3, L5)
    assert r.qk == 55
    assert r.component_count <= 55


def test_ldt_delta_near_exponent(model, L5):
    r = ldt_scan(model, 5.0, 8, L5 - 0.01, L5)
    assert 0.0 <= r.deviation_mass < 1.0


def test_ldt_outside_spectrum(model):
    L = lyapunov(model, 30.0, 10_000, 4).value
    r = ldt_scan(model, 30.0, 8, 0.3, L)
    assert r.deviation_mass == 0.0 and r.component_count == 0


def test_ldt_sweep_csv(model, L5):
    sw = ldt_sweep(model, 5.0, (6, 7), L5 / 2, L5)
    assert sw.to_csv().splitlines()[0] == "qk,delta,mass,components"
    assert len(sw.reports) == 2
