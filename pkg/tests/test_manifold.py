"""Metric specs: closed forms, curvature sign and chart operations."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartan_ray.manifold import (CurvatureClass, PoleError, christoffel, distance_to_base,
                                 gaussian_curvature, make_spec, metric_tensor, polydecay_constant,
                                 spec_from_config, verify_curvature_class)

PROFILES = ["euclidean", "hyperbolic", "polydecay", "gaussian_well"]

# frozen with mpmath (30 digits), see notes
CONF_DIST_X1 = 1.03435761350403848955  # int_0^1 exp(0.1 t^2) dt


def test_metric_tensor_closed_forms():
    np.testing.assert_allclose(metric_tensor(make_spec("euclidean"), (2.0, 0.3)), np.diag([1, 4]))
    np.testing.assert_allclose(metric_tensor(make_spec("hyperbolic"), (1.0, 0.0)),
                               np.diag([1, math.sinh(1) ** 2]), rtol=1e-14)
    np.testing.assert_allclose(metric_tensor(make_spec("gaussian_well", {"c": 0.0}), (0.3, -2.0)),
                               np.eye(2))


def test_metric_tensor_pole_raises():
    with pytest.raises(PoleError):
        metric_tensor(make_spec("hyperbolic"), (0.0, 0.0))


def test_curvature_closed_forms():
    assert gaussian_curvature(make_spec("hyperbolic"), (0.7, 2.0)) == pytest.approx(-1.0, abs=1e-12)
    assert gaussian_curvature(make_spec("euclidean"), (3.0, 1.0)) == 0.0
    K = gaussian_curvature(make_spec("gaussian_well"), (2.0, 0.0))
    assert K == pytest.approx(-0.4 * math.exp(-0.8), rel=1e-12)


def test_conformal_curvature_matches_fd_laplacian():
    spec = make_spec("gaussian_well", {"c": 0.1, "center": (0.3, -0.2)})
    c, cen = 0.1, np.array([0.3, -0.2])
    phi = lambda x: c * np.sum((np.asarray(x) - cen) ** 2)  # noqa: E731
    h = 1e-4
    rng = np.random.default_rng(3)
    for x in rng.uniform(-3, 3, (20, 2)):
        e = np.eye(2) * h
        lap = sum(phi(x + e[i]) - 2 * phi(x) + phi(x - e[i]) for i in range(2)) / h**2
        K_fd = -math.exp(-2 * phi(x)) * lap
        assert abs(gaussian_curvature(spec, x) - K_fd) <= 1e-6 * abs(K_fd)


@pytest.mark.parametrize("profile", PROFILES)
def test_curvature_nonpositive(profile):
    spec = make_spec(profile)
    rng = np.random.default_rng(0)
    r = 30 * np.sqrt(rng.random(10_000))
    th = rng.uniform(0, 2 * np.pi, 10_000)
    X = spec.base + np.column_stack([r * np.cos(th), r * np.sin(th)])
    assert np.max(spec.curvature_cart(X)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PROFILES), st.floats(-50, 50), st.floats(-50, 50))
def test_curvature_nonpositive_property(profile, x, y):
    assert make_spec(profile).curvature_cart(np.array([x, y])) <= 1e-12


def test_christoffel_closed_forms():
    G = christoffel(make_spec("euclidean"), (3.0, 0.5))
    assert G[0, 1, 1] == pytest.approx(-3.0)
    assert G[1, 0, 1] == G[1, 1, 0] == pytest.approx(1 / 3)
    assert G[0, 0, 0] == G[1, 1, 1] == G[0, 0, 1] == 0.0
    G = christoffel(make_spec("hyperbolic"), (1.0, 0.0))
    assert G[0, 1, 1] == pytest.approx(-math.sinh(1) * math.cosh(1), rel=1e-14)
    assert not christoffel(make_spec("gaussian_well", {"c": 0.0}), (1.0, 2.0)).any()


@pytest.mark.parametrize("profile", ["hyperbolic", "polydecay", "gaussian_well"])
def test_metric_compatibility(profile):
    # d_k g_ij = g_mj Gamma^m_ik + g_im Gamma^m_jk, residual O(h^2)
    spec = make_spec(profile)
    x = np.array([1.3, 0.4])

    def residual(h):
        G = christoffel(spec, x)
        g = metric_tensor(spec, x)
        out = 0.0
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            dg = (metric_tensor(spec, x + e) - metric_tensor(spec, x - e)) / (2 * h)
            rhs = np.einsum("mj,mi->ij", g, G[:, :, k]) + np.einsum("im,mj->ij", g, G[:, :, k])
            out = max(out, float(np.max(np.abs(dg - rhs))))
        return out

    r1, r2 = residual(1e-2), residual(5e-3)
    assert r1 < 1e-3
    assert r2 < r1 / 3.0 or r2 < 1e-12


def test_distance_to_base():
    assert distance_to_base(make_spec("hyperbolic"), (5.2, 1.0)) == 5.2
    assert distance_to_base(make_spec("gaussian_well", {"c": 0.0}), (3.0, 4.0)) == pytest.approx(5.0)
    d = distance_to_base(make_spec("gaussian_well", {"c": 0.1}), (1.0, 0.0))
    assert d == pytest.approx(CONF_DIST_X1, rel=1e-10)


def test_distance_shooting_matches_arclength():
    # base point off the well centre forces the shooting branch
    from cartan_ray.flows import geodesic_trace, phase_point
    from cartan_ray.manifold import _shoot
    spec = make_spec("gaussian_well", {"c": 0.1}, base_point=(0.5, 0.0))
    x = np.array([1.5, 1.2])
    rho, th = _shoot(spec, x)[:2]
    E1, E2 = spec.frame(spec.base)
    path = geodesic_trace(spec, phase_point(spec, spec.base, math.cos(th) * E1 + math.sin(th) * E2), rho)
    np.testing.assert_allclose(path.position(rho), x, atol=1e-8)
    d = distance_to_base(spec, x)
    assert d == pytest.approx(rho, rel=1e-8)


def test_verify_curvature_class():
    rep = verify_curvature_class(make_spec("hyperbolic"), CurvatureClass("bounded", K0=1.0), 2000)
    assert rep["max_violation"] == 0.0
    assert rep["worst_ratio"] == pytest.approx(1.0, abs=1e-12)
    rep = verify_curvature_class(make_spec("euclidean"), CurvatureClass("polydecay", eta=3, C=1), 500)
    assert rep["max_violation"] == 0.0
    rep = verify_curvature_class(make_spec("gaussian_well"), CurvatureClass("bounded", K0=0.4), 2000)
    assert rep["max_violation"] <= 0.0
    # below the true sup at the well centre: witnesses appear
    rep = verify_curvature_class(make_spec("gaussian_well"), CurvatureClass("bounded", K0=0.3), 2000)
    assert rep["max_violation"] > 0 and rep["witnesses"]


def test_polydecay_profile_in_class():
    spec = make_spec("polydecay")
    C = polydecay_constant(spec, 3.0)
    rep = verify_curvature_class(spec, CurvatureClass("polydecay", eta=3.0, C=C), 5000)
    assert rep["max_violation"] == 0.0


def test_spec_config_roundtrip():
    for p in PROFILES:
        spec = make_spec(p)
        assert spec_from_config(spec.to_config()) == spec


def test_bad_inputs():
    with pytest.raises(ValueError):
        make_spec("sphere")
    with pytest.raises(ValueError):
        CurvatureClass("polydecay", eta=2.0)
    with pytest.raises(ValueError):
        spec_from_config({"profile": "hyperbolic", "family": "conformal"})
