import numpy as np
import pytest
from hypothesis import given, strategies as st

from cslab.errors import LabError
from cslab.potentials import Potential, evaluate, slope_constants


def test_sawtooth_values(sawtooth):
    assert evaluate(sawtooth, 0.0) == 0.0
    assert evaluate(sawtooth, 0.75) == pytest.approx(0.75)


def test_piecewise_value():
    p = Potential.piecewise_linear((0.0, 0.5), (0.5, 1.5))
    assert evaluate(p, 0.5) == pytest.approx(0.25)


@pytest.mark.parametrize("slopes,expected", [((1.0,), (1.0, 1.0)), ((0.5, 1.5), (0.5, 1.5)),
                                             ((0.2, 1.0, 1.8), (0.2, 1.8))])
def test_slope_constants(slopes, expected):
    bps = tuple(np.linspace(0, 1, len(slopes), endpoint=False))
    assert slope_constants(Potential.piecewise_linear(bps, slopes)) == pytest.approx(expected)


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_monotone_with_pinned_slopes(x, y):
    p = Potential.piecewise_linear((0.0, 0.25, 0.5), (0.5, 1.5, 1.0))
    lo, hi = slope_constants(p)
    a, b = sorted((x, y))
    diff = evaluate(p, b) - evaluate(p, a)
    assert lo * (b - a) - 1e-12 <= diff <= hi * (b - a) + 1e-12


@given(st.floats(-5, 5))
def test_periodic_extension(x):
    p = Potential.sawtooth()
    assert evaluate(p, x) == pytest.approx(evaluate(p, x - np.floor(x)), abs=1e-12)


def test_invalid_potential_rejected():
    with pytest.raises(LabError):
        Potential.piecewise_linear((0.0, 0.5), (1.0, -1.0))


def test_json_round_trip():
    p = Potential.piecewise_linear((0.0, 0.5), (0.5, 1.5))
    assert Potential.from_json(p.to_json()) == p
