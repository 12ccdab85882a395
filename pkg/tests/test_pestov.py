"""Quadrature on SM_{p,r}, the energy identity, boundary scans and cutoffs."""

import math

import numpy as np
import pytest

from cartan_ray.calculus import ClassMismatchError, SMFunction
from cartan_ray.manifold import make_spec
from cartan_ray.pestov import (CutoffFamily, QuadratureError, ball_area, boundary_decay_scan,
                               build_quadrature, cutoff_convergence, cutoff_field, cutoff_profile,
                               pestov_inequality_check, pestov_refinement, pestov_terms,
                               pestov_terms_uf, synthetic_functions)
from cartan_ray.transform import DecaySpec, make_field

PROFILES = ["euclidean", "hyperbolic", "polydecay", "gaussian_well"]


def test_quadrature_volumes():
    q = build_quadrature(make_spec("euclidean"), r=1.0)
    assert q.total_weight == pytest.approx(2 * math.pi**2, rel=1e-12)
    q = build_quadrature(make_spec("hyperbolic"), r=1.0)
    assert q.total_weight == pytest.approx(4 * math.pi**2 * (math.cosh(1) - 1), rel=1e-10)
    q = build_quadrature(make_spec("euclidean"), r=2.0)
    assert q.boundary_weight == pytest.approx(8 * math.pi**2, rel=1e-12)


def test_quadrature_polydecay_and_fibre_rules():
    spec = make_spec("polydecay")
    q = build_quadrature(spec, r=3.0, n_r=24)
    assert q.total_weight == pytest.approx(2 * math.pi * ball_area(spec, 3.0), rel=1e-6)
    g = build_quadrature(spec, r=3.0, n_r=24, alpha_rule="graded")
    assert g.alpha_w.sum() == pytest.approx(2 * math.pi, rel=1e-13)
    assert len(q.nodes) == q.area_w.size * q.alpha.size
    # outward normals at the boundary have unit length
    for pp, _, nu in q.boundary_nodes[:5]:
        assert float(spec.norm(pp.x, nu)) == pytest.approx(1.0, abs=1e-9)


def test_quadrature_bad_inputs():
    spec = make_spec("euclidean")
    with pytest.raises(ValueError):
        build_quadrature(spec, r=1.0, n_r=3)
    with pytest.raises(ValueError):
        build_quadrature(spec, r=0.0)
    with pytest.raises(ValueError):
        build_quadrature(spec, r=1.0, alpha_rule="simpson")
    with pytest.raises(QuadratureError):
        build_quadrature(make_spec("hyperbolic"), r=12.0, n_r=4)


@pytest.mark.parametrize("profile", PROFILES)
def test_constant_function(profile):
    spec = make_spec(profile)
    u = SMFunction(lambda X, b: np.full(len(X), 2.5))
    rep = pestov_terms(spec, u, build_quadrature(spec, r=1.5, n_r=8, n_theta=8, n_alpha=8))
    for v in (rep.vxu2, rep.xvu2, rep.xu2, rep.curv_term, rep.b1, rep.b2, rep.residual):
        assert v == 0.0


def test_report_residual_definition():
    spec = make_spec("hyperbolic")
    u = synthetic_functions(spec, 2.0)["offset_mixed"]
    rep = pestov_terms(spec, u, build_quadrature(spec, r=2.0, n_r=12, n_theta=12, n_alpha=12))
    assert rep.residual == rep.vxu2 - (rep.xvu2 + rep.xu2 - rep.curv_term - rep.b1 + rep.b2)
    assert rep.to_dict()["relative_residual"] == rep.relative_residual


@pytest.mark.parametrize("profile", ["euclidean", "hyperbolic"])
def test_synthetic_identity(profile):
    spec = make_spec(profile)
    q = build_quadrature(spec, r=2.0, n_r=48, n_theta=48, n_alpha=48)
    for name in ("bump_cos", "offset_mixed"):
        rep = pestov_terms(spec, synthetic_functions(spec, 2.0)[name], q, 1e-3)
        # compact support inside the ball: no boundary contribution
        assert rep.b1 == 0.0 and rep.b2 == 0.0
        assert rep.relative_residual <= 1e-2


@pytest.mark.slow
def test_synthetic_refinement_order():
    spec = make_spec("euclidean")
    rep = pestov_refinement(spec, synthetic_functions(spec, 2.0)["bump_cos"], 2.0, (16, 24, 32))
    assert np.all(np.diff(rep["relative_residuals"]) < 0)
    assert rep["order"] >= 1.0


@pytest.mark.parametrize("profile", ["euclidean", "hyperbolic"])
def test_identity_for_uf(profile):
    spec = make_spec(profile)
    f = make_field(spec, "gaussian")
    q = build_quadrature(spec, r=2.0, n_r=16, n_theta=8, n_alpha=8, alpha_rule="graded")
    rep, extra = pestov_terms_uf(spec, f, q)
    assert rep.vxu2 <= 1e-10
    assert extra["symmetric"]
    assert extra["reduced_relative"] <= 1e-2
    assert rep.relative_residual <= 1e-2


def test_inequality_zero_field():
    spec = make_spec("euclidean")
    rep = pestov_inequality_check(spec, make_field(spec, "gaussian", amplitude=0.0), r=2.0,
                                  resolutions=((16, 8, 8),))
    assert rep["lhs"] == 0.0 and rep["rhs"] == 0.0 and rep["pass"]


@pytest.mark.slow
@pytest.mark.parametrize("profile", PROFILES)
@pytest.mark.parametrize("name,params", [("gaussian", {}), ("bump", {"radius": 3.0})])
def test_inequality_builtins(profile, name, params):
    spec = make_spec(profile)
    f = make_field(spec, name, **params)
    for r in (2.0, 4.0, 6.0):
        rep = pestov_inequality_check(spec, f, r=r)
        assert rep["slack"] >= -1e-3 * rep["lhs"]


def test_boundary_scan_exponential_flat():
    spec = make_spec("euclidean")
    rep = boundary_decay_scan(spec, make_field(spec, "exp", eta=2.0))
    assert rep["predicted_b1"] == -4.0
    assert rep["rate_b1"] <= -3.6 and rep["pass"]


def test_boundary_scan_compact_support():
    spec = make_spec("hyperbolic")
    rep = boundary_decay_scan(spec, make_field(spec, "bump", radius=1.5), r_list=(2.0, 3.0))
    for row in rep["rows"]:
        assert row["b1_escaping"] == 0.0 and row["b2_escaping"] == 0.0


def test_boundary_scan_polynomial():
    spec = make_spec("polydecay")
    rep = boundary_decay_scan(spec, make_field(spec, "poly", eta=2.5), r_list=(4, 8, 16, 32))
    assert rep["kind"] == "poly"
    assert rep["rate_b1"] <= rep["threshold"]


def test_cutoff_profile():
    s = np.linspace(0, 3, 3001)
    phi = cutoff_profile(s)
    assert np.all((phi >= 0) & (phi <= 1))
    assert np.all(phi[s <= 1] == 1.0) and np.all(phi[s >= 2] == 0.0)
    h = 1e-6
    mid = np.linspace(1.1, 1.9, 9)
    fd = (cutoff_profile(mid + h) - cutoff_profile(mid - h)) / (2 * h)
    np.testing.assert_allclose(cutoff_profile(mid, derivative=True), fd, atol=1e-7)


@pytest.mark.parametrize("profile", PROFILES)
def test_cutoff_family_properties(profile):
    spec = make_spec(profile)
    for k in (1.0, 4.0):
        rep = CutoffFamily(k, spec).check(2000)
        assert rep["range"] and rep["one_inside"] and rep["zero_outside"] and rep["gradient"]
    with pytest.raises(ValueError):
        CutoffFamily(0.0, spec)


def test_cutoff_field():
    spec = make_spec("polydecay")
    f = make_field(spec, "poly", eta=3.0)
    fam = CutoffFamily(2.0, spec)
    g = cutoff_field(fam, f)
    rng = np.random.default_rng(0)
    X = rng.uniform(-6, 6, (4000, 2))
    d = spec.distance(X)
    inside, outside = d <= 2.0, d >= 4.0
    np.testing.assert_array_equal(g(X)[inside], f(X)[inside])
    assert np.all(g(X)[outside] == 0.0)
    assert g.support_radius == 4.0
    # |grad(phi f)| <= |grad f| + (C / k) |f|
    Ginv = np.linalg.inv(spec.metric_cart(X))

    def gnorm(G):
        return np.sqrt(np.einsum("ni,nij,nj->n", G, Ginv, G))

    bound = gnorm(f.gradient(X)) + fam.gradient_constant / fam.k * np.abs(f(X))
    assert np.all(gnorm(g.gradient(X)) <= bound * (1 + 1e-12))


def test_cutoff_convergence_anisotropic():
    spec = make_spec("polydecay")
    f = make_field(spec, "aniso_poly", eta=3.0, contrast=0.5, mode=1)
    rep = cutoff_convergence(spec, f, r=4.0, k_list=(8, 16, 32), n_samples=16)
    assert rep["predicted_ratios"] == [0.25, 0.25]
    assert rep["pass"]


def test_cutoff_convergence_compact_support():
    spec = make_spec("euclidean")
    f = make_field(spec, "bump", radius=3.0)
    f.decay = DecaySpec("poly", 3.0)
    rep = cutoff_convergence(spec, f, r=2.0, k_list=(4.0, 8.0), n_samples=8)
    assert rep["sup_diff_Xperp"] == [0.0, 0.0] and rep["sup_diff_V"] == [0.0, 0.0]
    assert rep["pass"]


def test_cutoff_convergence_guards():
    hyp = make_spec("hyperbolic")
    with pytest.raises(ClassMismatchError):
        cutoff_convergence(hyp, make_field(hyp, "poly", eta=3.0))
    flat = make_spec("euclidean")
    with pytest.raises(ClassMismatchError):
        cutoff_convergence(flat, make_field(flat, "gaussian"))
    with pytest.raises(ValueError):
        cutoff_convergence(flat, make_field(flat, "poly", eta=3.0), r=4.0, k_list=(16, 8))
