"""Finite-difference vector fields ``X``, ``V``, ``X_perp`` on the unit sphere bundle.

Derivatives are central differences along the three flows of
:mod:`cartan_ray.flows`.  For ``u^f`` an independent quadrature route is
provided: ``X_perp u^f`` and ``V u^f`` equal the integrals of ``df`` against
the Jacobi fields ``J_h`` and ``J_p`` (:func:`jacobi_pairing`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quadrature
from .flows import PhasePoint, flow_batch_angle, geodesic_trace
from .manifold import MetricSpec
from .transform import (DecaySpec, ScalarField, TruncationPolicy, escaping_samples,
                        half_ray_transform, tail_bound)

__all__ = [
    "SMFunction",
    "DerivativeSample",
    "ClassMismatchError",
    "flow_derivative",
    "derivative_field",
    "commutator",
    "transport_residual",
    "structural_residuals",
    "structural_orders",
    "jacobi_pairing",
    "uf_function",
    "derivative_decay_certificate",
    "decay_report_to_csv",
]

OPS = ("X", "V", "Xperp")
_FLOW = {"X": "X", "V": "V", "Xperp": "H"}


class ClassMismatchError(ValueError):
    """The field or metric does not satisfy the regime's hypotheses."""


@dataclass
class SMFunction:
    """Function on ``SM`` in ``(x, beta)`` coordinates.

    ``evaluator(X, beta)`` is vectorised over rows of ``X`` (chart points)
    and ``beta`` (angle of ``v`` in the global frame ``spec.frame``).
    """

    evaluator: Callable
    smoothness_hint: str = "C2"

    def __call__(self, X, beta):
        return np.asarray(self.evaluator(np.atleast_2d(X), np.atleast_1d(beta)), dtype=float)

    def at(self, spec: MetricSpec, pp: PhasePoint) -> float:
        return float(self(pp.x[None], np.array([_angle(spec, pp)]))[0])


def _angle(spec: MetricSpec, pp: PhasePoint) -> float:
    w = spec.to_frame(pp.x, pp.v)
    return math.atan2(w[1], w[0])


@dataclass(frozen=True)
class DerivativeSample:
    pp: PhasePoint
    op: str
    value: float
    step: float
    order: int


def _shifted(spec, X, beta, op, s):
    return flow_batch_angle(spec, X, beta, s, _FLOW[op])


def derivative_field(spec: MetricSpec, F: SMFunction, op: str, step: float,
                     order: int = 2) -> SMFunction:
    """The finite-difference function ``op F`` (vectorised)."""
    if op not in OPS:
        raise ValueError(f"op must be one of {OPS}")
    if order == 2:
        stencil = ((1.0, 0.5), (-1.0, -0.5))
    elif order == 4:
        stencil = ((-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0))
    else:
        raise ValueError("order must be 2 or 4")

    def ev(X, beta):
        acc = 0.0
        for k, w in stencil:
            Xs, bs = _shifted(spec, X, beta, op, k * step)
            acc = acc + w * F(Xs, bs)
        return acc / step

    return SMFunction(ev, F.smoothness_hint)


def flow_derivative(spec: MetricSpec, F: SMFunction, pp: PhasePoint, op: str,
                    step: float = 1e-4, order: int = 2) -> DerivativeSample:
    """Central difference of ``F`` along the flow generating ``op`` at ``pp``."""
    G = derivative_field(spec, F, op, step, order)
    return DerivativeSample(pp, op, G.at(spec, pp), step, order)


def commutator(spec: MetricSpec, F: SMFunction, a: str, b: str, step: float) -> SMFunction:
    """Nested central differences for ``[A, B] F = A(B F) - B(A F)``."""
    AB = derivative_field(spec, derivative_field(spec, F, b, step), a, step)
    BA = derivative_field(spec, derivative_field(spec, F, a, step), b, step)
    return SMFunction(lambda X, beta: AB(X, beta) - BA(X, beta))


def structural_residuals(spec: MetricSpec, F: SMFunction, pp: PhasePoint,
                         step: float = 1e-2) -> tuple:
    """Residuals of ``[X,V] = X_perp``, ``[V,X_perp] = X`` and ``[X,X_perp] = -K V``
    applied to ``F`` at ``pp``."""
    X = pp.x[None]
    beta = np.array([_angle(spec, pp)])

    def d(op):
        return derivative_field(spec, F, op, step)(X, beta)[0]

    K = float(spec.curvature_cart(pp.x))
    r1 = commutator(spec, F, "X", "V", step)(X, beta)[0] - d("Xperp")
    r2 = commutator(spec, F, "V", "Xperp", step)(X, beta)[0] - d("X")
    r3 = commutator(spec, F, "X", "Xperp", step)(X, beta)[0] + K * d("V")
    return float(r1), float(r2), float(r3)


def structural_orders(spec: MetricSpec, F: SMFunction, pp: PhasePoint,
                      steps=(1e-2, 3e-3, 1e-3)) -> dict:
    """Residuals on a step ladder and their fitted log-log orders.

    An order is reported as ``inf`` when every residual on the ladder sits
    at the roundoff floor (the commutator is then reproduced exactly by the
    stencil, as for commuting flows).
    """
    steps = np.asarray(steps, dtype=float)
    res = np.array([structural_residuals(spec, F, pp, float(s)) for s in steps])
    orders = []
    floor = 1e-9
    for j in range(3):
        r = np.abs(res[:, j])
        if np.all(r <= floor):
            orders.append(math.inf)
        else:
            orders.append(float(np.polyfit(np.log(steps), np.log(np.maximum(r, 1e-300)), 1)[0]))
    return {"steps": steps.tolist(), "residuals": res.tolist(), "orders": orders}


# -- u^f on SM ----------------------------------------------------------------

def uf_function(spec: MetricSpec, f: ScalarField,
                policy: TruncationPolicy = TruncationPolicy()) -> SMFunction:
    """``u^f`` as an :class:`SMFunction` (one geodesic per evaluation)."""

    def ev(X, beta):
        V = spec.from_frame(X, np.column_stack([np.cos(beta), np.sin(beta)]))
        return np.array([half_ray_transform(spec, f, PhasePoint(x, v), policy)
                         for x, v in zip(X, V)])

    return SMFunction(ev, "C1")


def transport_residual(spec: MetricSpec, f: ScalarField, pp: PhasePoint,
                       policy: TruncationPolicy = TruncationPolicy(), step: float = 1e-4) -> float:
    """``|X u^f(pp) + f(x)|`` with ``X u^f`` by central differences."""
    Xu = flow_derivative(spec, uf_function(spec, f, policy), pp, "X", step).value
    return abs(Xu + float(f(pp.x[None])[0]))


def jacobi_pairing(spec: MetricSpec, f: ScalarField, pp: PhasePoint, which: str = "Jh",
                   policy: TruncationPolicy = TruncationPolicy()) -> float:
    """``int_0^inf df(J(t)) dt`` with ``J_h = u_h (-rot90 gamma')`` (gives
    ``X_perp u^f``) or ``J_p = u_p rot90 gamma'`` (gives ``V u^f``).

    The horizon starts from the tail bound of the gradient class and is
    doubled while the integrand at the horizon, times the horizon, still
    exceeds ``eps_tail`` (the Jacobi factor may grow, so the class bound
    alone does not control the remainder).
    """
    if f.gradient is None:
        raise ValueError("jacobi_pairing needs an analytic gradient")
    if which not in ("Jh", "Jp"):
        raise ValueError("which must be 'Jh' or 'Jp'")
    col = 4 if which == "Jh" else 6
    sign = -1.0 if which == "Jh" else 1.0
    d = float(spec.distance(pp.x))
    # u_h, u_p grow like exp(sqrt(K0) t) on the hyperbolic plane
    T_cap = 600.0 / math.sqrt(spec.K0) if spec.profile == "hyperbolic" else policy.T_max
    if math.isfinite(f.support_radius):
        T = max(2.0 * d, d + f.support_radius, 1e-3)
    else:
        if f.decay is None:
            raise ClassMismatchError("pairing needs a decay class or compact support")
        g = f.decay.gradient_class()
        T = max(2.0 * d, 1.0)
        while tail_bound(g, d, T) > policy.eps_tail and T < T_cap:
            T *= 2.0
    T = min(T, T_cap)

    radial = spec.family == "warped" and f.radial_derivative is not None

    def make(path):
        if radial:
            # <grad d, N> = -sign * sin(alpha) and f(r) sin(alpha) is the
            # Clairaut constant: exact even where sin(alpha) is below roundoff
            c = float(path.clairaut_along(0.0))

            def integrand(t):
                s = path(t)
                r = np.linalg.norm(s[..., :2], axis=-1)
                f_r = spec.warp(r)[0]
                with np.errstate(invalid="ignore", divide="ignore"):
                    sin_a = np.where(f_r > 0, c / f_r, 0.0)
                return f.radial_derivative(r) * (-sign * sin_a) * s[..., col]
            return integrand

        def integrand(t):
            s = path(t)
            X = s[..., :2]
            w = s[..., 2:4]
            Nw = sign * np.stack([-w[..., 1], w[..., 0]], axis=-1)
            return np.sum(f.gradient(X) * spec.from_frame(X, Nw), axis=-1) * s[..., col]
        return integrand

    while True:
        path = geodesic_trace(spec, pp, T)
        integrand = make(path)
        if math.isfinite(f.support_radius) or T >= T_cap \
                or abs(float(integrand(np.array([T]))[0])) * T <= policy.eps_tail:
            break
        T = min(2.0 * T, T_cap)
    val, _ = quadrature.integrate(integrand, quadrature.path_edges(path.ts, 0.0, T),
                                  policy.quad_tol)
    return val


# -- decay certificates -------------------------------------------------------

def derivative_decay_certificate(spec: MetricSpec, f: ScalarField, regime: str, radii,
                                 n_dirs: int = 9, n_pos: int = 4,
                                 policy: TruncationPolicy = TruncationPolicy()) -> dict:
    """Sup over escaping directions of ``|X_perp u^f|`` and ``|V u^f|`` per radius,
    with fitted decay.

    ``"exponential"`` (bounded curvature, exponential class): rate of
    ``log sup`` against ``d``, target ``0.9 (eta - 2 sqrt K0)``.
    ``"polynomial"`` (decaying curvature, polynomial class): exponent against
    ``log(1 + d)``, target ``0.9 (eta - 1)``.
    """
    dec = f.decay
    if regime == "exponential":
        if dec is None or dec.kind != "exp":
            raise ClassMismatchError("the exponential regime needs an exponentially decaying field")
        if dec.eta <= math.sqrt(spec.K0):
            raise ClassMismatchError("the exponential regime needs eta > sqrt(K0)")
        target = 0.9 * (dec.eta - 2.0 * math.sqrt(spec.K0))
    elif regime == "polynomial":
        if dec is None or dec.kind != "poly" or dec.eta <= 1:
            raise ClassMismatchError("the polynomial regime needs decay with eta > 1")
        if spec.profile == "hyperbolic":
            raise ClassMismatchError("the polynomial regime needs decaying curvature")
        target = 0.9 * (dec.eta - 1.0)
    else:
        raise ValueError("regime must be 'exponential' or 'polynomial'")
    radii = np.asarray(radii, dtype=float)
    sup_h, sup_p = [], []
    for r in radii:
        pts = escaping_samples(spec, float(r), n_dirs, n_pos)
        sup_h.append(max(abs(jacobi_pairing(spec, f, q, "Jh", policy)) for q in pts))
        sup_p.append(max(abs(jacobi_pairing(spec, f, q, "Jp", policy)) for q in pts))
    sup_h, sup_p = np.asarray(sup_h), np.asarray(sup_p)
    xs = radii if regime == "exponential" else np.log1p(radii)

    def rate(s):
        if np.all(s == 0):
            return math.inf
        return -float(np.polyfit(xs, np.log(np.maximum(s, 1e-300)), 1)[0])

    rep = {"regime": regime, "radii": radii.tolist(), "sup_Xperp": sup_h.tolist(),
           "sup_V": sup_p.tolist(), "rate_Xperp": rate(sup_h), "rate_V": rate(sup_p),
           "target": target}
    rep["pass"] = rep["rate_Xperp"] >= target and rep["rate_V"] >= target
    return rep


def decay_report_to_csv(rep: dict, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["radius", "sup_Xperp_uf", "sup_V_uf", "rate_Xperp", "rate_V"])
    for r, a, b in zip(rep["radii"], rep["sup_Xperp"], rep["sup_V"]):
        w.writerow([r, repr(a), repr(b), rep["rate_Xperp"], rep["rate_V"]])
