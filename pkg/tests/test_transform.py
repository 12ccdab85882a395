"""Ray and half-ray transforms, tails and decay classes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartan_ray.flows import PhasePoint, geodesic_flow, phase_point, phase_point_polar
from cartan_ray.manifold import make_spec
from cartan_ray.transform import (DecaySpec, DecayTooSlowError, TruncationPolicy,
                                  class_inclusion_check, fit_decay, half_ray_transform,
                                  integrate_along, make_field, ray_transform, tail_bound,
                                  transform_report, uf_decay_certificate)

POLICY = TruncationPolicy()
IF_POLY_HYP_TANGENT = 0.362054337174395866491  # 2 int_0^inf (1 + acosh(cosh 1 cosh t))^-3, mpmath


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 2.0])
def test_gaussian_line_integral(s):
    spec = make_spec("euclidean")
    f = make_field(spec, "gaussian")
    val = ray_transform(spec, f, phase_point(spec, (-3.0, s), (1.0, 0.0)))
    assert abs(val - math.sqrt(math.pi) * math.exp(-s * s)) <= 1e-8


def test_compact_support_short_circuit():
    spec = make_spec("hyperbolic")
    f = make_field(spec, "bump", radius=1.0)
    rep = transform_report(spec, f, phase_point_polar(spec, 2.0, 0.3, math.pi / 2))
    assert rep["value"] == 0.0 and rep["short_circuit"]


def test_poly_on_hyperbolic_tangent_geodesic():
    spec = make_spec("hyperbolic")
    f = make_field(spec, "poly", eta=3.0)
    val = ray_transform(spec, f, phase_point_polar(spec, 1.0, 0.0, math.pi / 2))
    assert val == pytest.approx(IF_POLY_HYP_TANGENT, rel=1e-6)


def test_radial_half_ray_closed_form():
    spec = make_spec("euclidean")
    f = make_field(spec, "poly", eta=3.0)
    val = half_ray_transform(spec, f, phase_point_polar(spec, 2.0, 0.4, 0.0))
    assert abs(val - 1 / 18) <= POLICY.eps_tail + 1e-12


@pytest.mark.parametrize("profile", ["euclidean", "hyperbolic", "polydecay", "gaussian_well"])
def test_additivity(profile):
    spec = make_spec(profile)
    f = make_field(spec, "gaussian")
    rng = np.random.default_rng(0)
    for _ in range(20):
        pp = phase_point_polar(spec, rng.uniform(0.1, 3), rng.uniform(0, 6.3), rng.uniform(0, 6.3))
        lhs = half_ray_transform(spec, f, pp) + half_ray_transform(spec, f, pp.flip())
        assert abs(lhs - ray_transform(spec, f, pp)) <= 2 * POLICY.eps_tail


def test_flow_shift():
    spec = make_spec("polydecay")
    f = make_field(spec, "smooth_poly", eta=3.0)
    pp = phase_point_polar(spec, 1.0, 0.2, 2.5)
    t = 1.7
    lhs = half_ray_transform(spec, f, geodesic_flow(spec, pp, t))
    rhs = half_ray_transform(spec, f, pp) - integrate_along(spec, f, pp, 0.0, t)
    assert abs(lhs - rhs) <= 1e-8


@pytest.mark.slow
@pytest.mark.parametrize("profile", ["euclidean", "polydecay", "gaussian_well", "hyperbolic"])
def test_flow_invariance(profile):
    spec = make_spec(profile)
    f = make_field(spec, "gaussian")
    rng = np.random.default_rng(1)
    n = 1000 if profile == "euclidean" else 100
    for _ in range(n):
        pp = phase_point_polar(spec, rng.uniform(0, 2), rng.uniform(0, 6.3), rng.uniform(0, 6.3))
        ref = ray_transform(spec, f, pp)
        for t in (1.0, -1.0, 10.0, -10.0):
            # on K = -1 re-tracing from phi_t(pp) amplifies integrator error like e^|t|
            tol = 4 * POLICY.eps_tail + (1e-8 * math.exp(abs(t)) if profile == "hyperbolic" else 0.0)
            assert abs(ray_transform(spec, f, geodesic_flow(spec, pp, t)) - ref) <= tol


def test_truncation_honesty():
    spec = make_spec("euclidean")
    f = make_field(spec, "poly", eta=2.5)
    pp = phase_point_polar(spec, 1.0, 0.0, 0.3)
    loose = TruncationPolicy(eps_tail=1e-4)
    rep = transform_report(spec, f, pp, loose, half=True)
    longer = integrate_along(spec, f, pp, 0.0, 2 * rep["T"], 1e-12)
    assert abs(longer - rep["value"]) <= rep["tail"]


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 2.5), st.floats(0, 2 * math.pi))
def test_linearity(a, b, r, ang):
    spec = make_spec("hyperbolic")
    f = make_field(spec, "gaussian")
    g = make_field(spec, "exp", eta=2.0)
    pp = phase_point_polar(spec, r, 0.3, ang)
    combo = f.scaled(a) + g.scaled(b)
    lhs = ray_transform(spec, combo, pp)
    rhs = a * ray_transform(spec, f, pp) + b * ray_transform(spec, g, pp)
    assert abs(lhs - rhs) <= 1e-8 * (1 + abs(a) + abs(b))


def test_tail_bound_values():
    assert tail_bound(DecaySpec("poly", 3.0, 2.0), 1.0, 2.0) == pytest.approx(2.0 / 8)
    assert tail_bound(DecaySpec("exp", 1.0, 1.0), 0.0, 5.0) == pytest.approx(math.exp(-5))
    with pytest.raises(DecayTooSlowError):
        tail_bound(DecaySpec("poly", 1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        tail_bound(DecaySpec("poly", 3.0), 2.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 20), st.floats(0, 20), st.floats(0.01, 5), st.sampled_from(["poly", "exp"]))
def test_tail_bound_decreasing(d, extra, dt, kind):
    dec = DecaySpec(kind, 2.5)
    T = 2 * d + extra
    assert tail_bound(dec, d, T + dt) < tail_bound(dec, d, T)


def test_uf_decay_exponent():
    spec = make_spec("euclidean")
    f = make_field(spec, "poly", eta=3.0)
    rep = uf_decay_certificate(spec, f, [2, 4, 8, 16, 32, 64])
    assert rep["measured_exponent"] <= -1.8


def test_uf_zero_beyond_support():
    spec = make_spec("hyperbolic")
    f = make_field(spec, "bump", radius=2.0)
    rep = uf_decay_certificate(spec, f, [3.0, 5.0])
    assert rep["sup"] == [0.0, 0.0]


def test_uf_exp_on_hyperbolic_envelope():
    spec = make_spec("hyperbolic")
    f = make_field(spec, "exp", eta=1.0)
    rep = uf_decay_certificate(spec, f, [1.0, 2.0, 4.0, 6.0])
    assert math.isfinite(rep["max_constant"]) and rep["max_constant"] > 0


def test_class_inclusion():
    spec = make_spec("euclidean")
    assert class_inclusion_check(spec, make_field(spec, "exp", eta=1.0), DecaySpec("poly", 5.0))["member"]
    rep = class_inclusion_check(spec, make_field(spec, "poly", eta=2.0), DecaySpec("exp", 0.1))
    assert not rep["member"] and rep["witness"] is not None
    g = make_field(spec, "gaussian")
    assert class_inclusion_check(spec, g, g.decay.gradient_class(), gradient=True)["member"]


def test_fit_decay():
    spec = make_spec("euclidean")
    assert fit_decay(spec, make_field(spec, "gaussian"), np.linspace(1, 5, 9)).kind == "exp"
    est = fit_decay(spec, make_field(spec, "poly", eta=3.0), np.geomspace(10, 1000, 9))
    assert est.kind == "poly" and 2.9 <= est.eta <= 3.1
    zero = make_field(spec, "gaussian", amplitude=0.0)
    assert fit_decay(spec, zero, [1.0, 2.0]).eta == math.inf


def test_slow_decay_rejected():
    spec = make_spec("euclidean")
    with pytest.raises(DecayTooSlowError):
        ray_transform(spec, make_field(spec, "poly", eta=1.0), PhasePoint(np.zeros(2) + 1, np.array([1.0, 0.0])))
