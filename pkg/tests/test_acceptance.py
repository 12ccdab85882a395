"""Acceptance criteria 1-15, each run through its experiment preset at the
stated tolerance.  One PASS/FAIL line per criterion is printed in the
terminal summary."""

import pytest

from cartan_ray.experiments import run_experiment
from cartan_ray.manifold import make_spec

from conftest import record


def _run(number, label, runs):
    """Run ``(preset, spec)`` pairs, record the criterion line, assert."""
    results = [(name, run_experiment(name, spec)) for name, spec in runs]
    ok = all(res.passed for _, res in results)
    parts = []
    for name, res in results:
        for c in res.checks:
            shown = c.get("value", res.timings.get(c["name"]))
            parts.append(f"{c['name']}={shown:.3g}{c['op']}{c['limit']:g}")
    record(number, ok, f"{label}: " + ", ".join(parts))
    failed = [f"{name}: {c}" for name, res in results for c in res.checks if not c["pass"]]
    assert ok, failed


def test_c01_hyperbolic_jacobi():
    _run(1, "Jacobi fields vs sinh/cosh", [("jacobi-hyperbolic", make_spec("hyperbolic"))])


def test_c02_exponential_envelope():
    _run(2, "exponential envelope", [("jacobi-envelope", make_spec("euclidean"))])


def test_c03_waltman():
    _run(3, "linear growth certificate", [("waltman-certificate", make_spec("polydecay"))])


def test_c04_sphere_volumes():
    _run(4, "circle lengths", [("sphere-volume", make_spec("euclidean"))])


def test_c05_gaussian_line_integrals():
    _run(5, "Gaussian line integrals", [("ray-transform-gaussian", make_spec("euclidean"))])


def test_c06_transport():
    _run(6, "transport equation", [("transport-check", make_spec("euclidean"))])


def test_c07_structural_equations():
    _run(7, "commutator orders", [("structural-equations", make_spec("euclidean"))])


def test_c08_uf_decay():
    _run(8, "u^f decay", [("uf-decay", make_spec("euclidean"))])


def test_c09_derivative_decay():
    _run(9, "derivative decay", [("derivative-decay", make_spec("euclidean"))])


def test_c10_energy_identity():
    _run(10, "energy identity", [("pestov-flat-synthetic", make_spec("euclidean")),
                                 ("pestov-uf", make_spec("euclidean"))])


def test_c11_energy_inequality():
    _run(11, "energy inequality", [("pestov-inequality", make_spec("euclidean"))])


def test_c12_boundary_decay():
    _run(12, "boundary term decay", [("boundary-decay", make_spec("euclidean"))])


def test_c13_cutoff_convergence():
    _run(13, "cutoff convergence", [("cutoff-convergence", make_spec("polydecay"))])


def test_c14_inversion():
    _run(14, "phantom recovery", [("inversion-euclidean", make_spec("euclidean")),
                                  ("inversion-curved", make_spec("hyperbolic", {"k": 0.25}))])


def test_c15_escaping_dichotomy():
    _run(15, "escaping dichotomy", [("escaping-dichotomy", make_spec("euclidean"))])
