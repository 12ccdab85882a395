"""Adaptive Gauss-Legendre panels."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartan_ray.quadrature import integrate, path_edges


def test_polynomial_exact():
    # 8-point Gauss-Legendre integrates degree 15 exactly on one panel
    val, err = integrate(lambda t: t**15 + 3 * t**2, [0.0, 2.0])
    assert val == pytest.approx(2.0**16 / 16 + 8.0, rel=1e-14)
    assert err <= 1e-10


def test_peaked_integrand():
    val, err = integrate(lambda t: 1.0 / (1e-4 + t * t), [-1.0, 1.0], tol=1e-12)
    assert val == pytest.approx(2.0 / 1e-2 * math.atan(1.0 / 1e-2), rel=1e-11)
    assert err <= 1e-10


def test_empty_and_reversed_panels():
    assert integrate(np.cos, [1.0, 1.0]) == (0.0, 0.0)
    assert integrate(np.cos, [2.0, 1.0]) == (0.0, 0.0)


def test_panel_budget_keeps_error_estimate():
    rng = np.random.default_rng(0)
    val, err = integrate(lambda t: rng.standard_normal(t.shape), [0.0, 1.0], tol=1e-14, max_panels=64)
    assert math.isfinite(val) and err > 0


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 5), st.floats(0.5, 4))
def test_gaussian_segments(a, length, w):
    b = a + length
    val, _ = integrate(lambda t: np.exp(-(t / w) ** 2), [a, 0.5 * (a + b), b])
    exact = 0.5 * math.sqrt(math.pi) * w * (math.erf(b / w) - math.erf(a / w))
    assert abs(val - exact) <= 1e-11


def test_path_edges():
    e = path_edges([0.0, 0.3, 5.0, 40.0], 0.0, 30.0)
    assert e[0] == 0.0 and e[-1] == 30.0
    assert np.all(np.diff(e) > 0)
    assert 0.3 in e and 5.0 in e
    # panel length bounded by base + growth * t
    assert np.all(np.diff(e) <= 0.5 + 0.1 * e[1:] + 1e-12)
