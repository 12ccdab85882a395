"""Geodesic ray transform and half-ray transform with tail-aware truncation.

Infinite integrals along unit-speed geodesics are cut at a horizon chosen
from the decay class of the integrand: for ``t >= 2 d(x, p)`` every
geodesic satisfies ``d(gamma(t), p) >= t - d(x, p)``, so the remainder is
bounded in closed form (:func:`tail_bound`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import quadrature
from .flows import PhasePoint, classify_escaping_batch, geodesic_trace, min_distance_parameter
from .manifold import MetricSpec

__all__ = [
    "DecaySpec",
    "ScalarField",
    "TruncationPolicy",
    "DecayTooSlowError",
    "make_field",
    "field_from_config",
    "FIELDS",
    "tail_bound",
    "ray_transform",
    "half_ray_transform",
    "transform_report",
    "integrate_along",
    "escaping_samples",
    "uf_decay_certificate",
    "class_inclusion_check",
    "fit_decay",
    "sinogram_to_csv",
]


class DecayTooSlowError(ValueError):
    """The integrand does not decay fast enough for the line integral to converge."""


@dataclass(frozen=True)
class DecaySpec:
    """``|f(x)| <= C (1 + d(x, p))^-eta`` (``poly``) or ``C e^{-eta d}`` (``exp``)."""

    kind: str
    eta: float
    C: float = 1.0
    base: tuple = (0.0, 0.0)
    with_gradient: bool = False

    def __post_init__(self):
        if self.kind not in ("poly", "exp"):
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.C < 0:
            raise ValueError("C must be non-negative")

    def weight(self, d):
        d = np.asarray(d, dtype=float)
        if self.kind == "poly":
            return (1.0 + d) ** (-self.eta)
        return np.exp(-self.eta * d)

    def bound(self, d):
        return self.C * self.weight(d)

    def gradient_class(self) -> "DecaySpec":
        """Class of ``|grad f|_g`` for members of the C^1 class."""
        if self.kind == "poly":
            return DecaySpec("poly", self.eta + 1.0, self.C, self.base)
        return DecaySpec("exp", self.eta, self.C, self.base)


@dataclass
class ScalarField:
    """A function on the manifold given in Cartesian chart coordinates.

    ``evaluator`` maps points ``(..., 2)`` to values; ``gradient`` (optional)
    returns the differential as covector components.
    """

    name: str
    evaluator: Callable
    gradient: Optional[Callable] = None
    decay: Optional[DecaySpec] = None
    support_radius: float = math.inf
    params: dict = field(default_factory=dict)
    # d -> f'(d) when f depends on x only through d(x, p)
    radial_derivative: Optional[Callable] = None
    # True when f is a function of d(x, p) alone
    radial: bool = False

    def __call__(self, X):
        return self.evaluator(np.asarray(X, dtype=float))

    def scaled(self, a: float) -> "ScalarField":
        g = None if self.gradient is None else (lambda X, _g=self.gradient: a * _g(X))
        dec = None if self.decay is None else DecaySpec(
            self.decay.kind, self.decay.eta, abs(a) * self.decay.C, self.decay.base)
        rd = None if self.radial_derivative is None else (
            lambda d, _r=self.radial_derivative: a * _r(d))
        return ScalarField(f"{a}*{self.name}", lambda X: a * self.evaluator(X), g, dec,
                           self.support_radius, radial_derivative=rd, radial=self.radial)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        dec = None
        if self.decay is not None and other.decay is not None:
            # the slower of the two decay rates dominates
            a, b = sorted([self.decay, other.decay],
                          key=lambda s: (s.kind == "exp", s.eta))
            C = a.C + b.C * (1.0 if a.kind == b.kind else _inclusion_constant(b, a))
            dec = DecaySpec(a.kind, a.eta, C, a.base)
        g = None
        if self.gradient is not None and other.gradient is not None:
            g = lambda X: self.gradient(X) + other.gradient(X)  # noqa: E731
        return ScalarField(f"{self.name}+{other.name}",
                           lambda X: self.evaluator(X) + other.evaluator(X), g, dec,
                           max(self.support_radius, other.support_radius),
                           radial=self.radial and other.radial)


def _inclusion_constant(src: DecaySpec, dst: DecaySpec) -> float:
    """Smallest ``K`` with ``src.weight <= K dst.weight`` (exp into poly)."""
    if src.kind == dst.kind:
        return 1.0 if src.eta >= dst.eta else math.inf
    if src.kind == "exp" and dst.kind == "poly":
        # sup_d (1+d)^eta2 e^{-eta1 d}
        d = max(0.0, dst.eta / src.eta - 1.0)
        return (1 + d) ** dst.eta * math.exp(-src.eta * d)
    return math.inf


@dataclass(frozen=True)
class TruncationPolicy:
    """Stopping rule for the infinite integrals."""

    eps_tail: float = 1e-9
    T_max: float = 1e8
    split_at_min: bool = True
    quad_tol: float = 1e-11

    def __post_init__(self):
        if not self.eps_tail > 0:
            raise ValueError("eps_tail must be positive")
        if not self.T_max > 0:
            raise ValueError("T_max must be positive")


# -- field registry ----------------------------------------------------------

def _base(spec, center):
    return spec.base if center is None else np.asarray(center, dtype=float)


def gaussian_field(spec: MetricSpec, amplitude: float = 1.0, width: float = 1.0,
                   center=None) -> ScalarField:
    """``A exp(-|x - c|^2 / w^2)`` in chart coordinates."""
    c = _base(spec, center)

    def ev(X):
        return amplitude * np.exp(-np.sum((X - c) ** 2, axis=-1) / width**2)

    def gr(X):
        return (-2.0 / width**2) * (X - c) * ev(X)[..., None]

    shift = float(np.linalg.norm(c - spec.base))
    if spec.family == "warped":
        # d = |x| and |x - c| >= d - s, so exp(-rho^2) <= e^{1 + 2s} e^{-2d} (w = 1)
        dec = DecaySpec("exp", 2.0 / width, abs(amplitude) * math.exp(1.0 + 2.0 * shift / width),
                        tuple(spec.base))
    else:
        # distances grow like exp(c rho^2): the chart Gaussian is only
        # polynomial in d.  Bound d(x, p) <= D(|x - c|) + D(|p - c|) with D
        # the distance from the well centre; constant is a sup over radii.
        wc = np.asarray(spec.param("center", (0.0, 0.0)), dtype=float)
        if not np.allclose(wc, c):
            dec = None
        else:
            cc = spec.param("c")
            eta = min(1.0 / (cc * width**2), 12.0) if cc > 0 else 12.0
            rho = np.linspace(0.0, 12.0, 4001)

            def D(r):
                if cc == 0:
                    return r
                return math.sqrt(math.pi) / (2 * math.sqrt(cc)) * special.erfi(math.sqrt(cc) * r)

            dd = D(rho) + D(shift)
            vals = abs(amplitude) * np.exp(-rho**2 / width**2)
            C = float(np.max(vals * (1.0 + dd) ** eta)) * 1.01
            dec = DecaySpec("poly", eta, C, tuple(spec.base))
    rd = None
    if spec.family == "warped" and np.allclose(c, spec.base):
        def rd(d):
            return -2.0 * amplitude * d / width**2 * np.exp(-(d / width) ** 2)
    return ScalarField("gaussian", ev, gr, dec,
                       params={"amplitude": amplitude, "width": width,
                               "center": list(map(float, c))}, radial_derivative=rd,
                       radial=bool(np.allclose(c, spec.base)))


def poly_field(spec: MetricSpec, eta: float = 3.0, amplitude: float = 1.0) -> ScalarField:
    """``A (1 + d(x, p))^-eta`` (not differentiable at ``p``)."""

    def ev(X):
        return amplitude * (1.0 + spec.distance(X)) ** (-eta)

    def gr(X):
        d = spec.distance(X)
        return (-eta * amplitude * (1.0 + d) ** (-eta - 1.0))[..., None] * spec.distance_grad(X)

    return ScalarField("poly", ev, gr, DecaySpec("poly", eta, abs(amplitude), tuple(spec.base)),
                       params={"eta": eta, "amplitude": amplitude},
                       radial_derivative=lambda d: -eta * amplitude * (1.0 + d) ** (-eta - 1.0),
                       radial=True)


def aniso_poly_field(spec: MetricSpec, eta: float = 3.0, amplitude: float = 1.0,
                     contrast: float = 0.5, mode: int = 1) -> ScalarField:
    """``A (1 + d)^-eta (1 + b cos(m theta))`` with ``theta`` the chart polar
    angle about the base point.  Not radial, so its tangential gradient
    decays like ``d^(-eta-1)`` rather than vanishing."""
    if not 0.0 <= contrast < 1.0:
        raise ValueError("contrast must lie in [0, 1)")
    base = spec.base

    def ang(X):
        Y = X - base
        return np.arctan2(Y[..., 1], Y[..., 0]), Y

    def ev(X):
        th, _ = ang(X)
        return amplitude * (1.0 + spec.distance(X)) ** (-eta) * (1.0 + contrast * np.cos(mode * th))

    def gr(X):
        th, Y = ang(X)
        d = spec.distance(X)
        rho2 = np.maximum(np.sum(Y * Y, axis=-1), 1e-300)
        radial = (-eta * amplitude * (1.0 + d) ** (-eta - 1.0)
                  * (1.0 + contrast * np.cos(mode * th)))[..., None] * spec.distance_grad(X)
        dth = np.stack([-Y[..., 1], Y[..., 0]], axis=-1) / rho2[..., None]
        return radial + (-amplitude * contrast * mode * (1.0 + d) ** (-eta)
                         * np.sin(mode * th))[..., None] * dth

    return ScalarField("aniso_poly", ev, gr,
                       DecaySpec("poly", eta, abs(amplitude) * (1.0 + contrast), tuple(base)),
                       params={"eta": eta, "amplitude": amplitude, "contrast": contrast,
                               "mode": mode})


def smooth_poly_field(spec: MetricSpec, eta: float = 3.0, amplitude: float = 1.0) -> ScalarField:
    """``A (1 + d^2)^(-eta/2)``: smooth, polynomial decay of order ``eta``."""

    def ev(X):
        d = spec.distance(X)
        return amplitude * (1.0 + d * d) ** (-0.5 * eta)

    def gr(X):
        d = spec.distance(X)
        fac = -eta * amplitude * d * (1.0 + d * d) ** (-0.5 * eta - 1.0)
        return fac[..., None] * spec.distance_grad(X)

    # (1+d)^2 <= 2 (1+d^2)
    return ScalarField("smooth_poly", ev, gr,
                       DecaySpec("poly", eta, abs(amplitude) * 2.0 ** (0.5 * eta),
                                 tuple(spec.base), with_gradient=True),
                       params={"eta": eta, "amplitude": amplitude},
                       radial_derivative=lambda d: -eta * amplitude * d
                       * (1.0 + d * d) ** (-0.5 * eta - 1.0), radial=True)


def exp_field(spec: MetricSpec, eta: float = 1.0, amplitude: float = 1.0) -> ScalarField:
    """``A e^{-eta d(x, p)}``."""

    def ev(X):
        return amplitude * np.exp(-eta * spec.distance(X))

    def gr(X):
        d = spec.distance(X)
        return (-eta * amplitude * np.exp(-eta * d))[..., None] * spec.distance_grad(X)

    return ScalarField("exp", ev, gr, DecaySpec("exp", eta, abs(amplitude), tuple(spec.base),
                                                with_gradient=True),
                       params={"eta": eta, "amplitude": amplitude},
                       radial_derivative=lambda d: -eta * amplitude * np.exp(-eta * d),
                       radial=True)


def bump_field(spec: MetricSpec, radius: float = 2.0, amplitude: float = 1.0) -> ScalarField:
    """Smooth bump ``A exp(1 - 1 / (1 - (d/R)^2))`` supported in ``d < R``."""
    R = float(radius)

    def ev(X):
        s = (spec.distance(X) / R) ** 2
        out = np.zeros_like(s)
        m = s < 1.0
        out[m] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    def gr(X):
        d = spec.distance(X)
        s = (d / R) ** 2
        fac = np.zeros_like(s)
        m = s < 1.0
        fac[m] = (amplitude * np.exp(1.0 - 1.0 / (1.0 - s[m]))
                  * (-2.0 * d[m] / R**2) / (1.0 - s[m]) ** 2)
        return fac[..., None] * spec.distance_grad(X)

    def rd(d):
        d = np.asarray(d, dtype=float)
        s = (d / R) ** 2
        out = np.zeros_like(s)
        m = s < 1.0
        out[m] = (amplitude * np.exp(1.0 - 1.0 / (1.0 - s[m]))
                  * (-2.0 * d[m] / R**2) / (1.0 - s[m]) ** 2)
        return out

    return ScalarField("bump", ev, gr, None, R, params={"radius": R, "amplitude": amplitude},
                       radial_derivative=rd, radial=True)


FIELDS = {
    "gaussian": gaussian_field,
    "poly": poly_field,
    "aniso_poly": aniso_poly_field,
    "smooth_poly": smooth_poly_field,
    "exp": exp_field,
    "bump": bump_field,
}


def make_field(spec: MetricSpec, name: str, **params) -> ScalarField:
    try:
        factory = FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; known: {sorted(FIELDS)}") from None
    return factory(spec, **params)


def field_from_config(spec: MetricSpec, cfg: dict) -> ScalarField:
    return make_field(spec, cfg["name"], **cfg.get("params", {}))


# -- tails and horizons -----------------------------------------------------

def tail_bound(decay: DecaySpec, d_xp: float, T: float) -> float:
    """Closed-form bound for ``int_T^inf |f(gamma(t))| dt`` along a geodesic
    starting at distance ``d_xp`` from the base point (one direction)."""
    if T < 2.0 * d_xp - 1e-12:
        raise ValueError("tail bound needs T >= 2 d(x, p)")
    if decay.kind == "poly":
        if decay.eta <= 1:
            raise DecayTooSlowError("polynomial decay needs eta > 1")
        return decay.C * (1.0 + T - d_xp) ** (1.0 - decay.eta) / (decay.eta - 1.0)
    return decay.C * math.exp(-decay.eta * (T - d_xp)) / decay.eta


def _horizon(f: ScalarField, d: float, budget: float, T_max: float) -> float:
    """Smallest ``T >= 2d`` whose one-sided tail bound is within ``budget``."""
    if math.isfinite(f.support_radius):
        return max(2.0 * d, d + f.support_radius, 1e-3)
    dec = f.decay
    if dec is None:
        raise DecayTooSlowError(f"field {f.name!r} has neither decay data nor compact support")
    if dec.C == 0:
        return max(2.0 * d, 1e-3)
    if dec.kind == "poly":
        if dec.eta <= 1:
            raise DecayTooSlowError("polynomial decay needs eta > 1")
        T = d - 1.0 + (dec.C / ((dec.eta - 1.0) * budget)) ** (1.0 / (dec.eta - 1.0))
    else:
        T = d + math.log(max(dec.C / (dec.eta * budget), 1.0)) / dec.eta
    return min(max(T, 2.0 * d, 1e-3), T_max)


def integrate_along(spec: MetricSpec, f: ScalarField, pp: PhasePoint, a: float, b: float,
                    tol: float = 1e-11, path=None) -> float:
    """``int_a^b f(gamma(t)) dt`` for ``0 <= a <= b``."""
    if b <= a:
        return 0.0
    if path is None or path.T < b:
        path = geodesic_trace(spec, pp, b, jacobi=False)
    val, _ = quadrature.integrate(lambda t: f(path.position(t)),
                                  quadrature.path_edges(path.ts, a, b), tol)
    return val


def _one_side(spec, f, pp, d, policy, budget):
    T = _horizon(f, d, budget, policy.T_max)
    tail = 0.0 if math.isfinite(f.support_radius) or f.decay is None else tail_bound(f.decay, d, T)
    val = integrate_along(spec, f, pp, 0.0, T, policy.quad_tol)
    return val, T, tail


def transform_report(spec: MetricSpec, f: ScalarField, pp: PhasePoint,
                     policy: TruncationPolicy = TruncationPolicy(), half: bool = False) -> dict:
    """Ray transform (or half-ray transform when ``half``) with its horizon and
    the analytic bound on the discarded tail."""
    if not math.isfinite(f.support_radius) and f.decay is not None \
            and f.decay.kind == "poly" and f.decay.eta <= 1:
        raise DecayTooSlowError("polynomial decay needs eta > 1")
    if half:
        d = float(spec.distance(pp.x))
        if math.isfinite(f.support_radius) and d > f.support_radius:
            if classify_escaping_batch(spec, pp.x[None], pp.v[None])[0] >= 0:
                return {"value": 0.0, "T": 0.0, "tail": 0.0, "short_circuit": True}
        val, T, tail = _one_side(spec, f, pp, d, policy, policy.eps_tail)
        return {"value": val, "T": T, "tail": tail, "short_circuit": False}
    center = pp
    if policy.split_at_min or math.isfinite(f.support_radius):
        t_star, d_star = min_distance_parameter(spec, pp)
        if math.isfinite(f.support_radius) and d_star > f.support_radius:
            return {"value": 0.0, "T": 0.0, "tail": 0.0, "short_circuit": True,
                    "t_star": t_star, "d_star": d_star}
        if policy.split_at_min:
            center = _shift(spec, pp, t_star)
    d = float(spec.distance(center.x))
    a, Ta, ta = _one_side(spec, f, center, d, policy, 0.5 * policy.eps_tail)
    b, Tb, tb = _one_side(spec, f, center.flip(), d, policy, 0.5 * policy.eps_tail)
    return {"value": a + b, "T": max(Ta, Tb), "tail": ta + tb, "short_circuit": False}


def _shift(spec, pp: PhasePoint, t: float) -> PhasePoint:
    if t == 0.0:
        return pp
    src = pp if t > 0 else pp.flip()
    path = geodesic_trace(spec, src, abs(t), jacobi=False)
    x = path.position(abs(t))
    v = path.velocity(abs(t))
    return PhasePoint(x, v if t > 0 else -v)


def ray_transform(spec: MetricSpec, f: ScalarField, pp: PhasePoint,
                  policy: TruncationPolicy = TruncationPolicy()) -> float:
    """``If(x, v) = int_R f(gamma_{x,v}(t)) dt``."""
    return transform_report(spec, f, pp, policy)["value"]


def half_ray_transform(spec: MetricSpec, f: ScalarField, pp: PhasePoint,
                       policy: TruncationPolicy = TruncationPolicy()) -> float:
    """``u^f(x, v) = int_0^inf f(gamma_{x,v}(t)) dt``."""
    return transform_report(spec, f, pp, policy, half=True)["value"]


# -- decay certificates -------------------------------------------------------

def escaping_samples(spec: MetricSpec, radius: float, n_dirs: int, n_pos: int = 8,
                     seed: int = 0):
    """Escaping phase points at distance ``radius`` from the base point.

    Positions are spread over ``n_pos`` polar angles (geodesic polar
    coordinates about ``p``); directions sweep the closed escaping half
    circle ``[-pi/2, pi/2]`` around the outward radial direction.
    """
    from .flows import phase_point, geodesic_trace as _tr
    rng = np.random.default_rng(seed)
    out = []
    E1, E2 = spec.frame(spec.base)
    ths = 2 * np.pi * (np.arange(n_pos) + rng.random()) / n_pos
    angles = np.linspace(-0.5 * np.pi, 0.5 * np.pi, n_dirs)
    for th in ths:
        u = math.cos(th) * E1 + math.sin(th) * E2
        path = _tr(spec, phase_point(spec, spec.base, u), radius)
        x = path.position(radius)
        er = path.velocity(radius)
        for a in angles:
            v = math.cos(a) * er + math.sin(a) * spec.rot90(x, er)
            out.append(PhasePoint(x, v))
    return out


def _fit_line(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sum((A @ coef - y) ** 2))
    return float(coef[0]), float(coef[1]), resid


def uf_decay_certificate(spec: MetricSpec, f: ScalarField, sample_radii, n_dirs: int = 9,
                         n_pos: int = 4, policy: TruncationPolicy = TruncationPolicy()) -> dict:
    """Sup of ``|u^f|`` over escaping directions at each radius, with a fitted
    decay law.

    Poly fields: slope of ``log sup`` against ``log(1 + d)`` (expected about
    ``-(eta - 1)``).  Exp fields: slope of ``log(sup / (1 + d))`` against
    ``d`` (expected about ``-eta``), plus the sup of the envelope ratio.
    """
    radii = np.asarray(sample_radii, dtype=float)
    sups = []
    for r in radii:
        pts = escaping_samples(spec, float(r), n_dirs, n_pos)
        sups.append(max(abs(half_ray_transform(spec, f, pp, policy)) for pp in pts))
    sups = np.asarray(sups)
    kind = f.decay.kind if f.decay is not None else "poly"
    rep = {"radii": radii.tolist(), "sup": sups.tolist(), "kind": kind}
    if np.all(sups == 0):
        rep.update(measured_exponent=-math.inf, max_constant=0.0)
        return rep
    if kind == "poly":
        slope, icpt, _ = _fit_line(np.log1p(radii), np.log(sups))
        const = float(np.max(sups * (1.0 + radii) ** (-slope)))
        rep.update(measured_exponent=slope, max_constant=const)
    else:
        env = (1.0 + radii) * np.exp(-f.decay.eta * radii)
        slope, icpt, _ = _fit_line(radii, np.log(sups / (1.0 + radii)))
        rep.update(measured_exponent=slope, max_constant=float(np.max(sups / env)))
    return rep


def _radial_profile(spec: MetricSpec, f: ScalarField, d_grid, n_dirs: int, gradient=False):
    """Sup over ``n_dirs`` directions of ``|f|`` (or ``|grad f|_g``) on spheres."""
    from .flows import phase_point
    E1, E2 = spec.frame(spec.base)
    sup = np.zeros(len(d_grid))
    for th in 2 * np.pi * np.arange(n_dirs) / n_dirs:
        u = math.cos(th) * E1 + math.sin(th) * E2
        if spec.family == "warped":
            X = np.outer(d_grid, u) + spec.base
        else:
            path = geodesic_trace(spec, phase_point(spec, spec.base, u), float(max(d_grid)))
            X = path.position(np.asarray(d_grid))
        if gradient:
            g = f.gradient(X)
            Ginv = np.linalg.inv(spec.metric_cart(X))
            vals = np.sqrt(np.einsum("...i,...ij,...j->...", g, Ginv, g))
        else:
            vals = np.abs(f(X))
        sup = np.maximum(sup, vals)
    return sup


def class_inclusion_check(spec: MetricSpec, f: ScalarField, target: DecaySpec,
                          d_max: float = 50.0, n: int = 2001, n_dirs: int = 8,
                          gradient: bool = False) -> dict:
    """Empirical membership of ``f`` (or ``|grad f|_g``) in a decay class.

    ``|f| / weight`` is sampled on spheres up to ``d_max``.  Membership is
    declared when that ratio is non-increasing over the outer half of the
    range; otherwise the smallest radius beyond which it grows is returned
    as the witness.
    """
    d = np.linspace(0.0, d_max, n)
    vals = _radial_profile(spec, f, d, n_dirs, gradient)
    with np.errstate(divide="ignore"):
        logr = np.log(np.maximum(vals, 1e-300)) - np.log(target.weight(d))
    outer = d >= 0.5 * d_max
    slope = np.diff(logr[outer]) / np.diff(d[outer])
    member = bool(np.all(slope <= 1e-9)) or bool(np.all(vals[outer] == 0))
    imin = int(np.argmin(logr))
    return {
        "member": member,
        "constant": float(np.exp(np.max(logr))),
        "witness": None if member else float(d[-1]),
        "crossover": float(d[imin]),
    }


def fit_decay(spec: MetricSpec, f: ScalarField, radii, n_dirs: int = 8) -> DecaySpec:
    """Least-squares decay law for ``sup |f|`` on spheres: polynomial
    (against ``log(1 + d)``) or exponential (against ``d``), whichever fits
    better.  ``f == 0`` gives the sentinel ``poly`` class with infinite rate."""
    radii = np.asarray(radii, dtype=float)
    sup = _radial_profile(spec, f, radii, n_dirs)
    base = tuple(spec.base)
    if np.all(sup == 0):
        return DecaySpec("poly", math.inf, 0.0, base)
    m = sup > 0
    y = np.log(sup[m])
    sp, cp, rp = _fit_line(np.log1p(radii[m]), y)
    se, ce, re_ = _fit_line(radii[m], y)
    if re_ < rp:
        return DecaySpec("exp", max(-se, 1e-12), float(np.max(sup * np.exp(-se * radii))), base)
    return DecaySpec("poly", max(-sp, 1e-12), float(np.max(sup * (1 + radii) ** (-sp))), base)


def sinogram_to_csv(rows, fh) -> None:
    """Rows of ``(id, x, y, vx, vy, value)``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["id", "x", "y", "vx", "vy", "If"])
    for i, (pp, val) in enumerate(rows):
        w.writerow([i] + [repr(float(c)) for c in (*pp.x, *pp.v)] + [repr(float(val))])
