import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from cslab.arithmetic import (
    ContinuedFraction,
    IrrationalSpec,
    alternation_check,
    beta_estimate,
    best_approximation_check,
    cf_expand,
    convergents,
    dist_to_integers,
    sandwich_check,
    signed_deviation,
)
from cslab.errors import RationalInput


def fib(n):
    a, b = 1, 1
    out = []
    for _ in range(n):
        out.append(a)
        a, b = b, a + b
    return out


def test_golden_digits_all_ones(golden):
    assert cf_expand(golden, 8).digits == (1,) * 8


def test_silver_digits_all_twos():
    assert cf_expand(IrrationalSpec.silver(), 5).digits == (2,) * 5


def test_rational_input_reports_digits():
    with pytest.raises(RationalInput) as exc:
        cf_expand(IrrationalSpec.numeric("0.5"), 5)
    assert exc.value.to_json()["error"] == "rational-input"
    assert exc.value.to_json()["details"]["digits"] == [2]


def test_fibonacci_denominators(golden):
    cf = cf_expand(golden, 8)
    # q_0 = 1 followed by q_1..q_8
    assert [cf.q(0)] + [q for _, q in convergents(cf)] == fib(9)


def test_small_recurrences():
    assert [q for _, q in convergents(ContinuedFraction((2, 2, 2)))] == [2, 5, 12]
    assert convergents(ContinuedFraction((1, 10))) == [(1, 1), (10, 11)]


def test_beta_golden_value(golden):
    b = beta_estimate(cf_expand(golden, 11), 9)
    assert b.values[0] == pytest.approx(math.log(89) / 55, rel=1e-12)


def test_beta_golden_tends_to_zero(golden):
    cf = cf_expand(golden, 40)
    assert beta_estimate(cf, 30).proxy < 1e-4


def test_beta_large_digit():
    cf = ContinuedFraction((1, 1, 1, 1, 1, 10**6, 1, 1))
    q5, q6 = cf.q(5), cf.q(6)
    assert (q5, q6) == (8, 8 * 10**6 + 5)
    assert beta_estimate(cf, 5).proxy >= math.log(q6) / q5 * (1 - 1e-12)


def test_dist_exact_value(golden):
    d = dist_to_integers(8, golden)
    mpmath.mp.dps = 60
    exact = abs(8 * (mpmath.sqrt(5) - 1) / 2 - 5)
    assert abs(mpmath.mpf(d.value.numerator) / d.value.denominator - exact) < mpmath.mpf(10) ** -30


def test_dist_near_quarter():
    d = dist_to_integers(1, IrrationalSpec.numeric("0.25000000000000000000000012345678910111213"))
    assert float(d) == pytest.approx(0.25, abs=1e-20)


@pytest.mark.parametrize("spec", [IrrationalSpec.golden(), IrrationalSpec.silver()])
def test_convergents_match_bigint_recurrence(spec):
    cf = cf_expand(spec, 20)
    p0, p1, q0, q1 = 1, 0, 0, 1
    for k, a in enumerate(cf.digits, start=1):
        p0, p1 = p1, a * p1 + p0
        q0, q1 = q1, a * q1 + q0
        assert (cf.p(k), cf.q(k)) == (p1, q1)
        # determinant identity p_k q_{k-1} - p_{k-1} q_k = (-1)^(k+1) up to the chosen sign
        assert abs(p1 * q0 - p0 * q1) == 1


@pytest.mark.parametrize("spec", [IrrationalSpec.golden(), IrrationalSpec.silver()])
def test_best_approximation_and_sandwich(spec):
    cf = cf_expand(spec, 20)
    best = best_approximation_check(spec, cf, 10_000)
    assert best and all(best.values())
    sand = sandwich_check(spec, cf)
    assert all(sand.values())
    assert alternation_check(spec, cf)


@given(st.integers(1, 15))
def test_sandwich_each_scale(k):
    spec = IrrationalSpec.golden()
    cf = cf_expand(spec, 16)
    d = dist_to_integers(cf.q(k), spec)
    assert Fraction(1, 2 * cf.q(k + 1)) <= d.lo <= d.hi <= Fraction(1, cf.q(k + 1))


@given(st.lists(st.integers(1, 50), min_size=2, max_size=12))
def test_tabulated_digits_round_trip(digits):
    spec = IrrationalSpec.tabulated(digits)
    cf = cf_expand(spec, len(digits))
    assert list(cf.digits) == digits


@given(st.integers(2, 18))
def test_signed_deviation_alternates(k):
    spec = IrrationalSpec.golden()
    cf = cf_expand(spec, 20)
    a, b = signed_deviation(k, cf, spec), signed_deviation(k - 1, cf, spec)
    assert (a.value > 0) != (b.value > 0)
    assert abs(a.value) < abs(b.value)
