"""Jacobi fields: closed forms, comparison bounds, growth certificates."""

import math

import numpy as np
import pytest

from cartan_ray.flows import geodesic_trace, phase_point_polar
from cartan_ray.jacobi import (envelope, exponential_envelope, linear_bound_ratio, solve_jacobi,
                               sphere_volume, sphere_volume_quadrature, uniform_certificate,
                               waltman_certificate)
from cartan_ray.manifold import make_spec

PROFILES = ["euclidean", "hyperbolic", "polydecay", "gaussian_well"]
WELL_SPHERE_R2 = 15.4839631252177913250  # 2 pi rho e^{0.1 rho^2} with D(rho) = 2, mpmath


def _path(spec, T, r=0.8, th=0.3, a=1.1):
    return geodesic_trace(spec, phase_point_polar(spec, r, th, a), T)


def test_flat_jacobi_is_linear():
    spec = make_spec("euclidean")
    sol = solve_jacobi(spec, _path(spec, 20.0), (0.0, 1.0))
    t = np.linspace(0, 20, 101)
    np.testing.assert_allclose(sol(t)[0], t, atol=1e-10)


@pytest.mark.parametrize("method", ["path", "ivp"])
def test_hyperbolic_closed_form(method):
    spec = make_spec("hyperbolic")
    path = _path(spec, 10.0)
    t = np.linspace(0.01, 10, 400)
    u, _ = solve_jacobi(spec, path, (0.0, 1.0), method=method)(t)
    assert np.max(np.abs(u / np.sinh(t) - 1)) <= 1e-6
    u, _ = solve_jacobi(spec, path, (1.0, 0.0), method=method)(t)
    assert np.max(np.abs(u / np.cosh(t) - 1)) <= 1e-6


def test_polydecay_against_tight_reference():
    spec = make_spec("polydecay")
    path = geodesic_trace(spec, phase_point_polar(spec, 1.0, 0.0, 0.3), 30.0)
    ref_path = geodesic_trace(spec, phase_point_polar(spec, 1.0, 0.0, 0.3), 30.0, tol=1e-13)
    t = np.linspace(1, 30, 50)
    u = solve_jacobi(spec, path, (0.0, 1.0))(t)[0]
    ref = solve_jacobi(spec, ref_path, (0.0, 1.0), method="ivp", tol=1e-12)(t)[0]
    assert np.max(np.abs(u / ref - 1)) <= 1e-7


@pytest.mark.parametrize("profile", PROFILES)
def test_wronskian_constant(profile):
    spec = make_spec(profile)
    path = _path(spec, 50.0)
    h, p = solve_jacobi(spec, path, (1.0, 0.0)), solve_jacobi(spec, path, (0.0, 1.0))
    t = np.linspace(0, 50, 501)
    w = h.wronskian(p, t)
    # entries grow like e^t on K = -1; drift is measured relative to them
    scale = np.maximum(1.0, np.abs(h(t)[0]) * np.abs(p(t)[1]))
    assert np.max(np.abs(w - 1.0) / scale) <= 1e-8


@pytest.mark.parametrize("profile", PROFILES)
def test_lower_comparison(profile):
    spec = make_spec(profile)
    rng = np.random.default_rng(0)
    t = np.linspace(0, 30, 301)
    for _ in range(5):
        path = _path(spec, 30.0, rng.uniform(0, 3), rng.uniform(0, 6), rng.uniform(0, 6))
        assert np.all(solve_jacobi(spec, path, (0.0, 1.0))(t)[0] >= t - 1e-9)
        assert np.all(solve_jacobi(spec, path, (1.0, 0.0))(t)[0] >= 1 - 1e-9)


@pytest.mark.parametrize("profile", PROFILES)
def test_exponential_envelope(profile):
    spec = make_spec(profile)
    path = _path(spec, 50.0)
    for ic in ((0.0, 1.0), (1.0, 0.0)):
        rep = exponential_envelope(solve_jacobi(spec, path, ic), spec.K0, 50.0)
        assert rep["max_ratio"] <= 1 + 1e-6


def test_envelope_tight_cases():
    spec = make_spec("hyperbolic")
    rep = exponential_envelope(solve_jacobi(spec, _path(spec, 20.0), (0.0, 1.0)), 1.0, 20.0)
    assert rep["max_ratio"] == pytest.approx(1.0, abs=1e-6)
    flat = make_spec("euclidean")
    rep = exponential_envelope(solve_jacobi(flat, _path(flat, 20.0), (0.0, 1.0)), 1.0, 20.0)
    # sup of t / sinh t is approached as t -> 0; the first grid node gives 1 - t^2/6
    assert 1 - 1e-5 <= rep["max_ratio"] <= 1.0
    assert rep["t_at_max"] < 0.1
    assert envelope(2.0, 0.0, (0.0, 1.0)) == pytest.approx(2.0)


def test_waltman_flat_is_tight():
    spec = make_spec("euclidean")
    path = _path(spec, 50.0)
    cert = waltman_certificate(spec, path, (0.0, 1.0))
    assert cert.M_K == 0.0
    assert cert.v1_norm == pytest.approx(1.0, abs=1e-12)
    assert linear_bound_ratio(solve_jacobi(spec, path), cert, 1.0, 50.0) <= 1.0


def test_waltman_radial_polydecay():
    spec = make_spec("polydecay")
    path = geodesic_trace(spec, phase_point_polar(spec, 0.5, 0.0, 0.0), 200.0)
    cert = waltman_certificate(spec, path)
    assert linear_bound_ratio(solve_jacobi(spec, path), cert, 1.0, 200.0) <= 1.0


def test_uniform_certificate_family():
    spec = make_spec("polydecay")
    rng = np.random.default_rng(7)
    sols, certs = [], []
    for _ in range(30):
        pp = phase_point_polar(spec, rng.uniform(1e-3, 5), rng.uniform(0, 6.3),
                               rng.uniform(-1.5, 1.5))
        path = geodesic_trace(spec, pp, 200.0)
        sols.append(solve_jacobi(spec, path))
        certs.append(waltman_certificate(spec, path))
    cert = uniform_certificate(certs)
    assert cert.M_K == max(c.M_K for c in certs)
    assert max(linear_bound_ratio(s, cert, 1.0, 200.0) for s in sols) <= 1.0


def test_sphere_volume_closed_forms():
    assert sphere_volume_quadrature(make_spec("euclidean"), 3.0, 16) == pytest.approx(6 * math.pi,
                                                                                     rel=1e-12)
    assert sphere_volume_quadrature(make_spec("hyperbolic"), 2.0, 16) == pytest.approx(
        2 * math.pi * math.sinh(2.0), rel=1e-8)
    assert sphere_volume(make_spec("hyperbolic"), 2.0) == pytest.approx(2 * math.pi * math.sinh(2.0),
                                                                        rel=1e-12)


def test_sphere_volume_conformal():
    spec = make_spec("gaussian_well")
    v = sphere_volume_quadrature(spec, 2.0, 64)
    assert v == pytest.approx(WELL_SPHERE_R2, rel=1e-8)
    assert v <= 2 * math.pi * math.sinh(math.sqrt(0.4) * 2.0) / math.sqrt(0.4)


def test_sphere_volume_polydecay_linear():
    spec = make_spec("polydecay")
    r = np.logspace(1, 2, 7)
    vols = [sphere_volume_quadrature(spec, float(x), 16) for x in r]
    assert np.polyfit(np.log(r), np.log(vols), 1)[0] <= 1.05
