"""Experiment runners behind the command line presets.

Each runner takes an :class:`ExperimentContext` and returns a
:class:`Result`: metrics, named checks against tolerances, CSV tables and
wall-clock timings.  Timings are kept out of the summary so that equal
configs give identical summaries.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import calculus, inversion, jacobi, pestov, transform
from .flows import (PhasePoint, classify_escaping_batch, geodesic_trace, phase_point,
                    phase_point_polar)
from .manifold import MetricSpec, make_spec
from .transform import TruncationPolicy

__all__ = ["ExperimentContext", "Result", "Experiment", "EXPERIMENTS", "run_experiment"]


@dataclass
class ExperimentContext:
    spec: MetricSpec
    fields: list
    params: dict
    tolerances: dict
    seed: int = 0
    threads: int = 1

    @property
    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass
class Result:
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def check(self, name: str, value, op: str, limit, timing: bool = False):
        value = float(value)
        ok = {"<=": value <= limit, ">=": value >= limit}[op]
        row = {"name": name, "op": op, "limit": limit, "pass": bool(ok)}
        if timing:
            self.timings[name] = value
        else:
            row["value"] = value
        self.checks.append(row)
        return ok

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)


@dataclass
class Experiment:
    runner: Callable
    description: str
    metric: dict
    fields: list
    params: dict
    tolerances: dict


def _specs(names):
    return [make_spec(n) for n in names]


def _escaping_random(spec, n, rng, r_lo=0.5, r_hi=3.0):
    """Random escaping phase points (strictly outward-pointing)."""
    out = []
    for _ in range(n):
        r = rng.uniform(r_lo, r_hi)
        th = rng.uniform(0.0, 2 * math.pi)
        a = rng.uniform(-0.5 * math.pi, 0.5 * math.pi)
        out.append(phase_point_polar(spec, r, th, a))
    return out


# -- Jacobi fields -------------------------------------------------------------

def _jacobi_hyperbolic(ctx: ExperimentContext) -> Result:
    res = Result()
    T = float(ctx.params["T"])
    t0 = time.perf_counter()
    pp = phase_point_polar(ctx.spec, 0.7, 0.3, 1.1)
    path = geodesic_trace(ctx.spec, pp, T)
    k = math.sqrt(ctx.spec.K0)
    t = np.linspace(0.0, T, int(ctx.params["n"]))[1:]
    errs = {}
    for ic, exact in (((0.0, 1.0), np.sinh(k * t) / k), ((1.0, 0.0), np.cosh(k * t))):
        sol = jacobi.solve_jacobi(ctx.spec, path, ic)
        u, _ = sol(t)
        errs[ic] = float(np.max(np.abs(u - exact) / np.abs(exact)))
    elapsed = time.perf_counter() - t0
    res.metrics = {"rel_err_sinh": errs[(0.0, 1.0)], "rel_err_cosh": errs[(1.0, 0.0)], "T": T}
    res.check("sinh_rel_err", errs[(0.0, 1.0)], "<=", ctx.tolerances["rel"])
    res.check("cosh_rel_err", errs[(1.0, 0.0)], "<=", ctx.tolerances["rel"])
    res.check("runtime_s", elapsed, "<=", ctx.tolerances["runtime_s"], timing=True)
    sol = jacobi.solve_jacobi(ctx.spec, path, (0.0, 1.0), n_grid=int(ctx.params["n"]))
    env = jacobi.envelope(sol.grid, ctx.spec.K0, sol.ic)
    res.tables["jacobi"] = (["t", "u", "envelope"],
                            [[float(a), float(b), float(c)] for a, b, c in zip(sol.grid, sol.u, env)])
    return res


def _jacobi_envelope(ctx: ExperimentContext) -> Result:
    res = Result()
    rng = ctx.rng
    T = float(ctx.params["T"])
    rows = []
    worst = 0.0
    for spec in _specs(ctx.params["profiles"]):
        for _ in range(int(ctx.params["n_geodesics"])):
            pp = phase_point_polar(spec, rng.uniform(0, 3), rng.uniform(0, 2 * math.pi),
                                   rng.uniform(0, 2 * math.pi))
            path = geodesic_trace(spec, pp, T)
            for ic in ((0.0, 1.0), (1.0, 0.0)):
                rep = jacobi.exponential_envelope(jacobi.solve_jacobi(spec, path, ic), spec.K0, T)
                worst = max(worst, rep["max_ratio"])
                rows.append([spec.profile, ic[0], ic[1], rep["max_ratio"], rep["t_at_max"]])
    res.metrics = {"max_ratio": worst}
    res.check("max_ratio", worst, "<=", 1.0 + ctx.tolerances["excess"])
    res.tables["envelope"] = (["profile", "u0", "du0", "max_ratio", "t_at_max"], rows)
    return res


def _waltman(ctx: ExperimentContext) -> Result:
    res = Result()
    rng = ctx.rng
    spec = ctx.spec
    T = float(ctx.params["T"])
    t0 = time.perf_counter()
    sols, certs = [], []
    for pp in _escaping_random(spec, int(ctx.params["n_geodesics"]), rng, 1e-3,
                               float(ctx.params["launch_radius"])):
        path = geodesic_trace(spec, pp, T)
        sols.append(jacobi.solve_jacobi(spec, path, (0.0, 1.0)))
        certs.append(jacobi.waltman_certificate(spec, path, (0.0, 1.0)))
    cert = jacobi.uniform_certificate(certs)
    ratio = max(jacobi.linear_bound_ratio(s, cert, 1.0, T) for s in sols)
    elapsed = time.perf_counter() - t0
    res.metrics = {"M_K": cert.M_K, "C1": cert.C1, "C2": cert.C2, "max_ratio": ratio}
    res.check("max_ratio", ratio, "<=", ctx.tolerances["ratio"])
    res.check("runtime_s", elapsed, "<=", ctx.tolerances["runtime_s"], timing=True)
    return res


def _sphere_volume(ctx: ExperimentContext) -> Result:
    res = Result()
    n = int(ctx.params["n_theta"])
    rs = [float(r) for r in ctx.params["radii"]]
    e_flat = max(abs(jacobi.sphere_volume_quadrature(make_spec("euclidean"), r, n) - 2 * math.pi * r)
                 / (2 * math.pi * r) for r in rs)
    e_hyp = max(abs(jacobi.sphere_volume_quadrature(make_spec("hyperbolic"), r, n)
                    - 2 * math.pi * math.sinh(r)) / (2 * math.pi * math.sinh(r)) for r in rs)
    big = np.logspace(1, 2, 7)
    poly = make_spec("polydecay")
    lengths = [jacobi.sphere_volume_quadrature(poly, float(r), n) for r in big]
    slope = float(np.polyfit(np.log(big), np.log(lengths), 1)[0])
    res.metrics = {"euclidean_rel_err": e_flat, "hyperbolic_rel_err": e_hyp, "polydecay_slope": slope}
    res.check("euclidean_rel_err", e_flat, "<=", ctx.tolerances["euclidean"])
    res.check("hyperbolic_rel_err", e_hyp, "<=", ctx.tolerances["hyperbolic"])
    res.check("polydecay_slope", slope, "<=", ctx.tolerances["slope"])
    res.tables["polydecay_sphere"] = (["r", "length"], [[float(a), float(b)] for a, b in zip(big, lengths)])
    return res


# -- transform -----------------------------------------------------------------

def _ray_gaussian(ctx: ExperimentContext) -> Result:
    res = Result()
    f = transform.field_from_config(ctx.spec, ctx.fields[0])
    rows = []
    worst = 0.0
    for s in ctx.params["offsets"]:
        s = float(s)
        val = transform.ray_transform(ctx.spec, f, PhasePoint((-3.0, s), (1.0, 0.0)))
        exact = math.sqrt(math.pi) * math.exp(-s * s)
        worst = max(worst, abs(val - exact))
        rows.append([s, val, exact])
    res.metrics = {"max_abs_err": worst}
    res.check("max_abs_err", worst, "<=", ctx.tolerances["abs"])
    res.tables["sinogram"] = (["offset", "value", "exact"], rows)
    return res


def _transport(ctx: ExperimentContext) -> Result:
    res = Result()
    step = float(ctx.params["step"])
    t0 = time.perf_counter()
    worst = 0.0
    rows = []
    for prof in ctx.params["profiles"]:
        spec = make_spec(prof)
        for fc in ctx.fields:
            f = transform.field_from_config(spec, fc)
            rng = ctx.rng
            for pp in _escaping_random(spec, int(ctx.params["n_points"]), rng):
                r = calculus.transport_residual(spec, f, pp, step=step)
                worst = max(worst, r)
            rows.append([prof, fc["name"], worst])
    elapsed = time.perf_counter() - t0
    res.metrics = {"max_residual": worst}
    res.check("max_residual", worst, "<=", ctx.tolerances["residual"])
    res.check("runtime_s", elapsed, "<=", ctx.tolerances["runtime_s"], timing=True)
    res.tables["transport"] = (["profile", "field", "running_max"], rows)
    return res


def _test_function():
    return calculus.SMFunction(lambda X, b: np.sin(X[:, 0] + 0.3) * np.cos(b)
                               + X[:, 1] ** 2 * np.sin(2 * b) + 0.5 * X[:, 0] * X[:, 1])


def _structural(ctx: ExperimentContext) -> Result:
    res = Result()
    F = _test_function()
    steps = tuple(float(s) for s in ctx.params["steps"])
    rows = []
    for prof in ctx.params["profiles"]:
        spec = make_spec(prof)
        pp = phase_point_polar(spec, 1.2, 0.4, 0.7)
        rep = calculus.structural_orders(spec, F, pp, steps)
        for j, name in enumerate(("[X,V]", "[V,Xperp]", "[X,Xperp]")):
            o = rep["orders"][j]
            rows.append([prof, name, o] + [r[j] for r in rep["residuals"]])
            if math.isinf(o):
                # residual at roundoff on every rung: the stencil is exact
                res.check(f"{prof} {name} exact", max(abs(r[j]) for r in rep["residuals"]), "<=", 1e-9)
            else:
                res.check(f"{prof} {name} order", abs(o - 2.0), "<=", ctx.tolerances["order_dev"])
    res.metrics = {"orders": {f"{r[0]} {r[1]}": r[2] for r in rows}}
    res.tables["structural"] = (["profile", "commutator", "order"] + [f"res_{s}" for s in steps], rows)
    return res


def _uf_decay(ctx: ExperimentContext) -> Result:
    res = Result()
    f = transform.field_from_config(ctx.spec, ctx.fields[0])
    rep = transform.uf_decay_certificate(ctx.spec, f, ctx.params["radii"],
                                         int(ctx.params["n_dirs"]), int(ctx.params["n_pos"]))
    eta = f.decay.eta
    res.metrics = {"measured_exponent": rep["measured_exponent"], "target": -0.9 * (eta - 1)}
    res.check("exponent", rep["measured_exponent"], "<=", -ctx.tolerances["fraction"] * (eta - 1))
    res.tables["uf_decay"] = (["radius", "sup_uf"], [[a, b] for a, b in zip(rep["radii"], rep["sup"])])
    return res


def _derivative_decay(ctx: ExperimentContext) -> Result:
    res = Result()
    out = {}
    runs = (("polynomial", make_spec(ctx.params["poly_profile"]), ctx.fields[0], ctx.params["poly_radii"]),
            ("exponential", make_spec(ctx.params["exp_profile"]), ctx.fields[1], ctx.params["exp_radii"]))
    for regime, spec, fc, radii in runs:
        f = transform.field_from_config(spec, fc)
        rep = calculus.derivative_decay_certificate(spec, f, regime, radii)
        out[regime] = {"rate_Xperp": rep["rate_Xperp"], "rate_V": rep["rate_V"], "target": rep["target"]}
        res.check(f"{regime} rate_Xperp", rep["rate_Xperp"], ">=", rep["target"])
        res.tables[f"decay_{regime}"] = (["radius", "sup_Xperp", "sup_V"],
                                         [[a, b, c] for a, b, c in zip(rep["radii"], rep["sup_Xperp"],
                                                                       rep["sup_V"])])
    res.metrics = out
    return res


# -- Pestov --------------------------------------------------------------------

def _pestov_synthetic(ctx: ExperimentContext) -> Result:
    res = Result()
    r = float(ctx.params["r"])
    n = int(ctx.params["n"])
    step = float(ctx.params["step"])
    fns = pestov.synthetic_functions(ctx.spec, r)
    q = pestov.build_quadrature(ctx.spec, None, r, n, n, n)
    rows = []
    for name, u in fns.items():
        rep = pestov.pestov_terms(ctx.spec, u, q, step)
        rows.append([name, rep.vxu2, rep.xvu2, rep.xu2, rep.curv_term, rep.b1, rep.b2,
                     rep.relative_residual])
        res.check(f"{name} relative_residual", rep.relative_residual, "<=", ctx.tolerances["relative"])
    ref = pestov.pestov_refinement(ctx.spec, fns[ctx.params["refine"]], r,
                                   tuple(int(k) for k in ctx.params["ladder"]))
    res.check("refinement_order", ref["order"], ">=", ctx.tolerances["order"])
    res.metrics = {"relative_residuals": {row[0]: row[-1] for row in rows}, "refinement": ref}
    res.tables["pestov_terms"] = (["function", "vxu2", "xvu2", "xu2", "curv", "b1", "b2", "rel"], rows)
    return res


def _pestov_uf(ctx: ExperimentContext) -> Result:
    res = Result()
    f = transform.field_from_config(ctx.spec, ctx.fields[0])
    n_r, n_t, n_a = (int(k) for k in ctx.params["resolution"])
    q = pestov.build_quadrature(ctx.spec, None, float(ctx.params["r"]), n_r, n_t, n_a,
                                alpha_rule="graded")
    rep, extra = pestov.pestov_terms_uf(ctx.spec, f, q)
    res.metrics = {**rep.to_dict(), **extra}
    res.check("vxu2", rep.vxu2, "<=", ctx.tolerances["vxu2"])
    res.check("reduced_relative", extra["reduced_relative"], "<=", ctx.tolerances["relative"])
    res.check("identity_relative", rep.relative_residual, "<=", ctx.tolerances["relative"])
    return res


def _pestov_inequality(ctx: ExperimentContext) -> Result:
    res = Result()
    rows = []
    for prof in ctx.params["profiles"]:
        spec = make_spec(prof)
        f = transform.field_from_config(spec, ctx.fields[0])
        for r in ctx.params["radii"]:
            rep = pestov.pestov_inequality_check(spec, f, None, float(r))
            rel = rep["slack"] / rep["lhs"] if rep["lhs"] > 0 else 0.0
            rows.append([prof, float(r), rep["lhs"], rep["rhs"], rep["slack"]])
            res.check(f"{prof} r={r} relative_slack", rel, ">=", -ctx.tolerances["relative"])
    res.metrics = {"rows": rows}
    res.tables["pestov_inequality"] = (["profile", "r", "lhs", "rhs", "slack"], rows)
    return res


def _boundary_decay(ctx: ExperimentContext) -> Result:
    res = Result()
    f = transform.field_from_config(ctx.spec, ctx.fields[0])
    rep = pestov.boundary_decay_scan(ctx.spec, f, None, ctx.params["radii"])
    res.metrics = {k: rep[k] for k in ("rate_b1", "rate_b2", "predicted_b1", "threshold")}
    res.check("rate_b1", rep["rate_b1"], "<=", rep["threshold"])
    res.tables["boundary_decay"] = (["r", "b1", "b2", "b1_escaping", "b2_escaping"],
                                    [[x["r"], x["b1"], x["b2"], x["b1_escaping"], x["b2_escaping"]]
                                     for x in rep["rows"]])
    return res


def _cutoff(ctx: ExperimentContext) -> Result:
    res = Result()
    f = transform.field_from_config(ctx.spec, ctx.fields[0])
    rep = pestov.cutoff_convergence(ctx.spec, f, None, float(ctx.params["r"]),
                                    tuple(ctx.params["k"]), int(ctx.params["n_samples"]),
                                    ctx.seed, rtol=ctx.tolerances["ratio_rel"])
    res.metrics = rep
    for op in ("Xperp", "V"):
        for i, (q, pr) in enumerate(zip(rep[f"ratios_{op}"], rep["predicted_ratios"])):
            res.check(f"{op} ratio {i} rel_dev", abs(q / pr - 1.0), "<=", ctx.tolerances["ratio_rel"])
    res.tables["cutoff"] = (["k", "sup_diff_Xperp", "sup_diff_V"],
                            [[a, b, c] for a, b, c in zip(rep["k"], rep["sup_diff_Xperp"], rep["sup_diff_V"])])
    return res


# -- inversion / escaping -----------------------------------------------------

def _inversion(ctx: ExperimentContext) -> Result:
    res = Result()
    p = ctx.params
    t0 = time.perf_counter()
    rep = inversion.recovery_experiment(ctx.spec, p["phantom"], int(p["fan_size"]), float(p["noise"]),
                                        ctx.seed, int(p["n"]), float(p["half_width"]), int(p["iters"]),
                                        float(p["reg"]), threads=ctx.threads,
                                        penalty=p["penalty"])
    elapsed = time.perf_counter() - t0
    grid = inversion.make_grid(int(p["n"]), float(p["half_width"]), ctx.spec.base)
    fan = inversion.fan_geometry(ctx.spec, grid, 200, seed=ctx.seed + 1)
    dot = inversion.dot_test(inversion.build_forward(ctx.spec, grid, fan, n_min=0),
                             seeds=tuple(range(10)))
    res.metrics = {"rel_l2": rep["rel_l2"], "dot_test": dot, "final_residual": rep["residual_history"][-1]}
    res.check("rel_l2", rep["rel_l2"], "<=", ctx.tolerances["rel_l2"])
    res.check("dot_test", dot, "<=", ctx.tolerances["dot"])
    res.check("runtime_s", elapsed, "<=", ctx.tolerances["runtime_s"], timing=True)
    res.tables["residual_history"] = (["iteration", "residual"],
                                      [[i, h] for i, h in enumerate(rep["residual_history"])])
    res.tables["reconstruction"] = rep["reconstruction"]
    return res


def _escaping(ctx: ExperimentContext) -> Result:
    res = Result()
    rng = ctx.rng
    n = int(ctx.params["n_points"])
    worst_frac, worst_dd = 1.0, math.inf
    rows = []
    for spec in _specs(ctx.params["profiles"]):
        r = 5.0 * np.sqrt(rng.uniform(1e-6, 1.0, n))
        th = rng.uniform(0, 2 * math.pi, n)
        X = spec.base + np.column_stack([r * np.cos(th), r * np.sin(th)])
        b = rng.uniform(0, 2 * math.pi, n)
        V = spec.from_frame(X, np.column_stack([np.cos(b), np.sin(b)]))
        fwd = classify_escaping_batch(spec, X, V) >= -1e-10
        bwd = classify_escaping_batch(spec, X, -V) >= -1e-10
        frac = float(np.mean(fwd | bwd))
        worst_frac = min(worst_frac, frac)
        # convexity of t -> d(gamma(t), p)^2
        T, m = float(ctx.params["T"]), int(ctx.params["n_grid"])
        t = np.linspace(0.0, T, m)
        mind = math.inf
        for _ in range(int(ctx.params["n_geodesics"])):
            pp = phase_point_polar(spec, rng.uniform(0, 4), rng.uniform(0, 2 * math.pi),
                                   rng.uniform(0, 2 * math.pi))
            d2 = spec.distance(geodesic_trace(spec, pp, T, jacobi=False).position(t)) ** 2
            mind = min(mind, float(np.min(d2[:-2] - 2 * d2[1:-1] + d2[2:])))
        worst_dd = min(worst_dd, mind)
        rows.append([spec.profile, frac, mind])
    res.metrics = {"dichotomy_fraction": worst_frac, "min_second_difference": worst_dd}
    res.check("dichotomy_fraction", worst_frac, ">=", 1.0)
    res.check("min_second_difference", worst_dd, ">=", -ctx.tolerances["second_diff"])
    res.tables["escaping"] = (["profile", "fraction", "min_second_difference"], rows)
    return res


_G = {"name": "gaussian", "params": {"amplitude": 1.0, "width": 1.0}}

EXPERIMENTS = {
    "jacobi-hyperbolic": Experiment(
        _jacobi_hyperbolic, "Jacobi fields on K = -1 against sinh and cosh",
        {"profile": "hyperbolic", "params": {"k": 1.0}}, [], {"T": 10.0, "n": 2001},
        {"rel": 1e-6, "runtime_s": 1.0}),
    "jacobi-envelope": Experiment(
        _jacobi_envelope, "Jacobi growth below the constant-curvature comparison envelope",
        {"profile": "euclidean"}, [],
        {"profiles": ["euclidean", "hyperbolic", "polydecay", "gaussian_well"], "n_geodesics": 4,
         "T": 50.0}, {"excess": 1e-6}),
    "waltman-certificate": Experiment(
        _waltman, "Linear Jacobi growth bound from the curvature moment",
        {"profile": "polydecay", "params": {"a": 0.4}}, [],
        {"n_geodesics": 100, "launch_radius": 5.0, "T": 200.0}, {"ratio": 1.0, "runtime_s": 30.0}),
    "sphere-volume": Experiment(
        _sphere_volume, "Geodesic circle lengths from Jacobi fields",
        {"profile": "euclidean"}, [], {"radii": [1.0, 2.0, 5.0, 10.0], "n_theta": 16},
        {"euclidean": 1e-8, "hyperbolic": 1e-6, "slope": 1.05}),
    "ray-transform-gaussian": Experiment(
        _ray_gaussian, "Line integrals of a Gaussian against sqrt(pi) exp(-s^2)",
        {"profile": "euclidean"}, [_G], {"offsets": [0.0, 0.5, 1.0, 2.0]}, {"abs": 1e-8}),
    "transport-check": Experiment(
        _transport, "transport equation X u^f = -f by finite differences",
        {"profile": "euclidean"},
        [_G, {"name": "bump", "params": {"radius": 2.0, "amplitude": 1.0}}],
        {"profiles": ["euclidean", "hyperbolic"], "n_points": 100, "step": 1e-4},
        {"residual": 1e-4, "runtime_s": 60.0}),
    "structural-equations": Experiment(
        _structural, "Commutator identities of X, V, X_perp and their difference orders",
        {"profile": "euclidean"}, [],
        {"profiles": ["euclidean", "hyperbolic", "polydecay", "gaussian_well"],
         "steps": [1e-2, 3e-3, 1e-3]}, {"order_dev": 0.2}),
    "uf-decay": Experiment(
        _uf_decay, "Decay of u^f along escaping directions",
        {"profile": "euclidean"}, [{"name": "poly", "params": {"eta": 3.0}}],
        {"radii": [2.0, 4.0, 8.0, 16.0, 32.0, 64.0], "n_dirs": 9, "n_pos": 4}, {"fraction": 0.9}),
    "derivative-decay": Experiment(
        _derivative_decay, "Decay of X_perp u^f and V u^f in both curvature regimes",
        {"profile": "euclidean"},
        [{"name": "poly", "params": {"eta": 2.5}}, {"name": "exp", "params": {"eta": 2.0}}],
        {"poly_profile": "polydecay", "poly_radii": [4.0, 8.0, 16.0, 32.0, 64.0],
         "exp_profile": "euclidean", "exp_radii": [2.0, 4.0, 6.0, 8.0, 10.0]}, {}),
    "pestov-flat-synthetic": Experiment(
        _pestov_synthetic, "energy identity on SM_{p,r} for compactly supported test functions",
        {"profile": "euclidean"}, [],
        {"r": 2.0, "n": 48, "step": 1e-3, "refine": "bump_cos", "ladder": [16, 24, 32, 48]},
        {"relative": 1e-2, "order": 1.0}),
    "pestov-uf": Experiment(
        _pestov_uf, "energy identity for u^f and its reduced form",
        {"profile": "euclidean"}, [_G], {"r": 2.0, "resolution": [16, 8, 8]},
        {"vxu2": 1e-10, "relative": 1e-2}),
    "pestov-inequality": Experiment(
        _pestov_inequality, "L2 norm of f bounded by the boundary terms",
        {"profile": "euclidean"}, [_G],
        {"profiles": ["euclidean", "hyperbolic", "polydecay"], "radii": [2.0, 4.0, 6.0]},
        {"relative": 1e-3}),
    "boundary-decay": Experiment(
        _boundary_decay, "decay of the boundary terms with the ball radius",
        {"profile": "euclidean"}, [{"name": "exp", "params": {"eta": 2.0}}],
        {"radii": [2.0, 4.0, 6.0, 8.0, 10.0]}, {}),
    "cutoff-convergence": Experiment(
        _cutoff, "cutoff approximations u^{phi_k f} converging to u^f",
        {"profile": "polydecay", "params": {"a": 0.4}},
        [{"name": "aniso_poly", "params": {"eta": 3.0, "contrast": 0.5, "mode": 1}}],
        {"r": 4.0, "k": [8.0, 16.0, 32.0], "n_samples": 32}, {"ratio_rel": 0.5}),
    "inversion-euclidean": Experiment(
        _inversion, "smoothness-penalised CG recovery of a phantom from 2000 flat geodesics",
        {"profile": "euclidean"}, [],
        {"phantom": "gauss_pair", "fan_size": 2000, "noise": 0.0, "n": 64, "half_width": 2.0,
         "iters": 200, "reg": 1e-4, "penalty": "gradient"}, {"rel_l2": 0.05, "dot": 1e-10, "runtime_s": 60.0}),
    "inversion-curved": Experiment(
        _inversion, "smoothness-penalised CG recovery from 2000 hyperbolic geodesics (K = -0.25)",
        {"profile": "hyperbolic", "params": {"k": 0.25}}, [],
        {"phantom": "gauss_pair", "fan_size": 2000, "noise": 0.0, "n": 64, "half_width": 2.0,
         "iters": 200, "reg": 1e-4, "penalty": "gradient"}, {"rel_l2": 0.08, "dot": 1e-10, "runtime_s": 60.0}),
    "escaping-dichotomy": Experiment(
        _escaping, "every phase point escapes forward or backward; d^2 convex along geodesics",
        {"profile": "euclidean"}, [],
        {"profiles": ["euclidean", "hyperbolic", "polydecay", "gaussian_well"], "n_points": 10000,
         "n_geodesics": 1000, "T": 8.0, "n_grid": 161}, {"second_diff": 1e-8}),
}


def run_experiment(name: str, spec: MetricSpec, fields=None, params=None, tolerances=None,
                   seed: int = 0, threads: int = 1) -> Result:
    """Run a registered experiment with defaults filled in."""
    exp = EXPERIMENTS[name]
    ctx = ExperimentContext(spec, list(fields if fields is not None else exp.fields),
                            {**exp.params, **(params or {})}, {**exp.tolerances, **(tolerances or {})},
                            seed, threads)
    return exp.runner(ctx)
