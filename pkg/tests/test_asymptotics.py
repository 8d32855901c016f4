import math

import numpy as np
from hypothesis import given, strategies as st
from scipy import integrate

from mzlaw.asymptotics import compose_tail, deciding_level, integral_converges, loglog_slope, pad


def test_examples():
    assert integral_converges((-2.0,))
    assert not integral_converges((-1.0,))
    assert integral_converges((-1.0, -2.0))
    assert not integral_converges((-1.0, -1.0, -1.0, -1.0, -1.0))
    assert not integral_converges((-0.5, -5.0))
    assert deciding_level((-1.0, -1.0, 0.3)) == 2
    assert deciding_level((-1.0,) * 5) is None
    assert pad((1.0,), 3) == (1.0, 0.0, 0.0)


def test_compose_tail():
    # P(|X| > x) = x^-1.5 with b_n = n^(2/3) log n: n^-1 (log n)^-1.5
    assert compose_tail((-1.5,), (2 / 3, 1.0)) == (-1.0, -1.5, 0.0, 0.0, 0.0)


def test_against_quadrature():
    # int_e^inf x^-1 (ln x)^-p dx = 1/(p-1) for p > 1, diverges for p <= 1
    for p in (1.5, 2.0, 3.0):
        v, _ = integrate.quad(lambda u: u ** -p, 1.0, np.inf)
        assert math.isclose(v, 1 / (p - 1), rel_tol=1e-8)
        assert integral_converges((-1.0, -p))


@given(st.floats(-3, 1))
def test_power_rule(e0):
    if abs(e0 + 1) > 1e-6:
        assert integral_converges((e0,)) == (e0 < -1)


def test_slope():
    x = np.linspace(1, 10, 20)
    assert math.isclose(loglog_slope(x, -1.3 * x + 4), -1.3, abs_tol=1e-12)
