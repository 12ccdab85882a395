"""Scalar Jacobi fields along geodesics and their growth certificates.

Normal Jacobi fields in dimension two reduce to ``u'' + K(gamma(t)) u = 0``.
The geodesic integrator already carries the two fundamental solutions
``u_h`` (data ``1, 0``) and ``u_p`` (data ``0, 1``), so a solution with data
``(c1, c2)`` is ``c1 u_h + c2 u_p``.  A separate route through
``scipy.integrate.solve_ivp`` integrates the scalar equation directly with
``K`` read off the dense geodesic; it serves as a cross-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import quadrature
from .flows import GeodesicPath, geodesic_trace, phase_point
from .manifold import CurvatureClass, MetricSpec, polydecay_constant

__all__ = [
    "JacobiSolution",
    "GrowthCertificate",
    "DivergentMomentError",
    "solve_jacobi",
    "exponential_envelope",
    "envelope",
    "curvature_moment",
    "waltman_certificate",
    "uniform_certificate",
    "linear_bound_ratio",
    "sphere_volume",
    "sphere_volume_quadrature",
    "jacobi_to_csv",
]


class DivergentMomentError(ValueError):
    """The first curvature moment along the geodesic is not finite."""


def _kind(ic) -> str:
    if tuple(ic) == (1.0, 0.0):
        return "Jh"
    if tuple(ic) == (0.0, 1.0):
        return "Jp"
    return "Custom"


@dataclass
class JacobiSolution:
    """Dense solution of the scalar Jacobi equation along ``path``."""

    path: GeodesicPath
    ic: tuple
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    kind: str
    _dense: object = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def __call__(self, t):
        """``(u(t), u'(t))`` at arbitrary times in ``[0, T]``."""
        t = np.asarray(t, dtype=float)
        if self._dense is not None:
            out = self._dense(np.atleast_1d(t))
            return out[0].reshape(t.shape), out[1].reshape(t.shape)
        c1, c2 = self.ic
        j = self.path.jacobi(t)
        return c1 * j[..., 0] + c2 * j[..., 2], c1 * j[..., 1] + c2 * j[..., 3]

    def wronskian(self, other: "JacobiSolution", t):
        u1, d1 = self(t)
        u2, d2 = other(t)
        return u1 * d2 - d1 * u2

    def residual(self, t, h: float = 1e-3):
        """Central-difference residual of ``u'' + K u`` at ``t``."""
        t = np.asarray(t, dtype=float)
        _, dp = self(t + h)
        _, dm = self(t - h)
        u, _ = self(t)
        K = self.path.spec.curvature_cart(self.path.position(t))
        return (dp - dm) / (2 * h) + K * u


def solve_jacobi(spec: MetricSpec, path: GeodesicPath, ic=(0.0, 1.0), T: float | None = None,
                 tol: float = 1e-10, n_grid: int = 1001, method: str = "path") -> JacobiSolution:
    """Solve ``u'' + K u = 0``, ``u(0), u'(0) = ic`` along ``path`` up to ``T``.

    ``method="path"`` combines the fundamental solutions integrated with the
    geodesic; ``method="ivp"`` integrates the scalar equation with DOP853,
    reading ``K`` from the dense geodesic.
    """
    ic = (float(ic[0]), float(ic[1]))
    T = path.T if T is None else float(T)
    if T > path.T * (1 + 1e-12):
        raise ValueError("path does not cover [0, T]")
    grid = np.linspace(0.0, T, n_grid)
    if method == "path":
        sol = JacobiSolution(path, ic, grid, None, None, _kind(ic))
        sol.u, sol.du = sol(grid)
        return sol
    if method != "ivp":
        raise ValueError(f"unknown method {method!r}")

    def rhs(t, y):
        K = float(spec.curvature_cart(path.position(min(t, path.T))))
        return [y[1], -K * y[0]]

    res = solve_ivp(rhs, (0.0, T), list(ic), method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True, max_step=max(T / 50, 0.05))
    if not res.success:
        raise RuntimeError(res.message)
    sol = JacobiSolution(path, ic, grid, None, None, _kind(ic), res.sol)
    sol.u, sol.du = sol(grid)
    return sol


def envelope(t, K0: float, ic=(0.0, 1.0)):
    """Constant-curvature comparison solution for ``K = -K0``, data ``|ic|``."""
    t = np.asarray(t, dtype=float)
    c1, c2 = abs(ic[0]), abs(ic[1])
    if K0 == 0.0:
        return c1 + c2 * t
    k = math.sqrt(K0)
    return c1 * np.cosh(k * t) + c2 * np.sinh(k * t) / k


def exponential_envelope(sol: JacobiSolution, K0: float, t_max: float | None = None,
                         n: int = 5001) -> dict:
    """Sup over a grid of ``|u(t)| / env(t)`` with ``env`` the comparison solution."""
    if K0 < 0:
        raise ValueError("K0 must be >= 0")
    t_max = sol.T if t_max is None else min(t_max, sol.T)
    t = np.linspace(0.0, t_max, n)[1:]
    u, _ = sol(t)
    ratio = np.abs(u) / envelope(t, K0, sol.ic)
    i = int(np.argmax(ratio))
    return {"max_ratio": float(ratio[i]), "t_at_max": float(t[i])}


def _poly_class(spec: MetricSpec, cls: CurvatureClass | None) -> CurvatureClass:
    if cls is not None:
        if cls.kind != "polydecay":
            raise DivergentMomentError("curvature moment needs a polynomially decaying class")
        if cls.eta <= 2:
            raise DivergentMomentError(f"eta={cls.eta} <= 2: first moment diverges")
        return cls
    if spec.profile == "euclidean":
        return CurvatureClass("polydecay", eta=3.0, C=0.0)
    if spec.profile in ("polydecay",):
        return CurvatureClass("polydecay", eta=3.0, C=polydecay_constant(spec, 3.0))
    if spec.profile == "gaussian_well":
        # Gaussian decay dominates every power; eta=4 keeps the tail cheap
        return CurvatureClass("polydecay", eta=4.0, C=polydecay_constant(spec, 4.0))
    raise DivergentMomentError(f"{spec.profile}: curvature does not decay")


def _moment_tail(cls: CurvatureClass, d0: float, Tq: float) -> float:
    """``C * int_Tq^inf s (1 + s - d0)^-eta ds`` in closed form (needs Tq > d0)."""
    if cls.C == 0.0:
        return 0.0
    W = 1.0 + Tq - d0
    eta = cls.eta
    return cls.C * (W ** (2 - eta) / (eta - 2) + (d0 - 1.0) * W ** (1 - eta) / (eta - 1))


def curvature_moment(spec: MetricSpec, path: GeodesicPath, t0: float = 0.0,
                     cls: CurvatureClass | None = None, tail_tol: float = 1e-10,
                     tol: float = 1e-11, T_cap: float = 1e12) -> dict:
    """``int_t0^inf s |K(gamma(s))| ds``: quadrature plus an analytic tail.

    Along any unit-speed geodesic ``d(gamma(s), p) >= s - d(x, p)``, so the
    class bound gives the tail beyond the quadrature horizon.  If ``path`` is
    shorter than the horizon it is re-traced.
    """
    cls = _poly_class(spec, cls)
    d0 = float(spec.distance(path.origin.x))
    Tq = max(2.0 * d0 + 1.0, t0 + 1.0, path.T)
    while _moment_tail(cls, d0, Tq) > tail_tol and Tq < T_cap:
        Tq *= 4.0
    tail = _moment_tail(cls, d0, Tq)
    if Tq > path.T:
        path = geodesic_trace(spec, path.origin, Tq)

    def integrand(s):
        return s * np.abs(spec.curvature_cart(path.position(s)))

    edges = quadrature.path_edges(path.ts, t0, Tq)
    val, err = quadrature.integrate(integrand, edges, tol)
    return {"M": val + tail, "quadrature": val, "tail": tail, "horizon": Tq,
            "error": err, "path": path}


@dataclass(frozen=True)
class GrowthCertificate:
    """Constants of the linear bound ``|u(t)| <= C1 t + C2``."""

    K0: float
    M_K: float
    C1: float
    C2: float
    v1_norm: float
    ic: tuple = (0.0, 1.0)
    tail: float = 0.0

    def bound(self, t):
        return self.C1 * np.asarray(t, dtype=float) + self.C2


def waltman_certificate(spec: MetricSpec, path: GeodesicPath, ic=(0.0, 1.0), t0: float = 1.0,
                        K0: float | None = None, cls: CurvatureClass | None = None,
                        tail_tol: float = 1e-10) -> GrowthCertificate:
    """Linear growth constants for the Jacobi solution with data ``ic``.

    ``|v(t0)| = |u'(t0)| + |u(t0) - t0 u'(t0)| / t0`` and
    ``C1 = exp(2 M_K) |v(t0)|``; ``C2`` is the comparison envelope at ``t0``,
    which bounds ``|u|`` on ``[0, t0]``.
    """
    K0 = spec.K0 if K0 is None else float(K0)
    mom = curvature_moment(spec, path, cls=cls, tail_tol=tail_tol)
    if not math.isfinite(mom["M"]):
        raise DivergentMomentError("curvature moment is not finite")
    ext = mom["path"]
    sol = solve_jacobi(spec, ext, ic, T=max(t0, 1e-9), n_grid=2)
    u1, du1 = sol(t0)
    v1 = abs(float(du1)) + abs(float(u1) - t0 * float(du1)) / t0
    C2 = float(envelope(t0, K0, ic))
    return GrowthCertificate(K0=K0, M_K=mom["M"], C1=math.exp(2.0 * mom["M"]) * v1, C2=C2,
                             v1_norm=v1, ic=tuple(float(c) for c in ic), tail=mom["tail"])


def uniform_certificate(certs) -> GrowthCertificate:
    """One certificate valid for every geodesic in the family: worst ``M_K``,
    worst ``|v(1)|`` and worst envelope constant."""
    certs = list(certs)
    if not certs:
        raise ValueError("empty family")
    M = max(c.M_K for c in certs)
    v1 = max(c.v1_norm for c in certs)
    return GrowthCertificate(K0=max(c.K0 for c in certs), M_K=M, C1=math.exp(2 * M) * v1,
                             C2=max(c.C2 for c in certs), v1_norm=v1, ic=certs[0].ic,
                             tail=max(c.tail for c in certs))


def linear_bound_ratio(sol: JacobiSolution, cert: GrowthCertificate, t_min: float = 1.0,
                       t_max: float | None = None, n: int = 2001) -> float:
    """``sup |u(t)| / (C1 t + C2)`` on a grid."""
    t_max = sol.T if t_max is None else t_max
    t = np.linspace(t_min, t_max, n)
    u, _ = sol(t)
    return float(np.max(np.abs(u) / cert.bound(t)))


def sphere_volume_quadrature(spec: MetricSpec, r: float, n_theta: int = 64) -> float:
    """Trapezoid rule over launch angles of ``|u_p(r)|`` along radial geodesics."""
    if not r > 0:
        raise ValueError("r must be positive")
    p = spec.base
    e1, e2 = spec.frame(p)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = np.empty(n_theta)
    for i, a in enumerate(th):
        pp = phase_point(spec, p, math.cos(a) * e1 + math.sin(a) * e2)
        vals[i] = abs(geodesic_trace(spec, pp, r).jacobi(r)[2])
    return float(2 * np.pi * vals.mean())


def sphere_volume(spec: MetricSpec, r: float, n_theta: int | None = None,
                  rtol: float = 1e-8) -> float:
    """Length of the geodesic circle of radius ``r`` about the base point.

    Warped specs return ``2 pi f(r)`` after a quadrature cross-check.  For
    other specs ``n_theta`` is doubled until two successive trapezoid values
    agree to ``rtol`` (or the given ``n_theta`` is used as is).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if spec.family == "warped":
        exact = float(2 * np.pi * spec.warp(r)[0])
        q = sphere_volume_quadrature(spec, r, n_theta or 4)
        if abs(q - exact) > 1e-6 * exact:
            raise RuntimeError(f"sphere volume cross-check failed: {q} vs {exact}")
        return exact
    if n_theta is not None:
        return sphere_volume_quadrature(spec, r, n_theta)
    n = 16
    prev = sphere_volume_quadrature(spec, r, n)
    while n < 4096:
        n *= 2
        cur = sphere_volume_quadrature(spec, r, n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    return cur


def jacobi_to_csv(sol: JacobiSolution, fh, K0: float) -> None:
    """Write ``t, u, envelope`` rows."""
    w = csv.writer(fh)
    w.writerow(["t", "u", "envelope"])
    env = envelope(sol.grid, K0, sol.ic)
    for t, u, e in zip(sol.grid, sol.u, env):
        w.writerow([f"{t:.12g}", f"{u:.17g}", f"{e:.17g}"])
