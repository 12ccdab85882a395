"""Metric families on the plane chart.

Two families are supported: rotationally symmetric warped products
``dr^2 + f(r)^2 dtheta^2`` with the pole at the chart origin, and conformal
metrics ``exp(2 phi) (dx^2 + dy^2)`` with a Gaussian-well potential.

Internally every point and tangent vector is stored in Cartesian chart
components, which keeps the pole of the warped family regular.  The
public chart-level operations (:func:`metric_tensor`,
:func:`christoffel`, ...) take ``(r, theta)`` for warped specs and
``(x, y)`` for conformal ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special
from scipy.stats import qmc

from ._backend import kernels

__all__ = [
    "MetricSpec",
    "CurvatureClass",
    "PoleError",
    "ShootingError",
    "make_spec",
    "spec_from_config",
    "euclidean",
    "hyperbolic",
    "polydecay",
    "gaussian_well",
    "metric_tensor",
    "gaussian_curvature",
    "christoffel",
    "distance_to_base",
    "verify_curvature_class",
    "polar_to_cartesian",
    "cartesian_to_polar",
]

POLE_R = 1e-6

_PROFILE_IDS = {"euclidean": 0, "hyperbolic": 1, "polydecay": 2, "gaussian_well": 3}
_FAMILY_OF = {
    "euclidean": "warped",
    "hyperbolic": "warped",
    "polydecay": "warped",
    "gaussian_well": "conformal",
}


class PoleError(ValueError):
    """Chart quantity requested at the pole of a warped chart."""


class ShootingError(RuntimeError):
    """Newton shooting on the exponential map did not converge."""


@dataclass(frozen=True)
class CurvatureClass:
    """Curvature hypothesis: ``bounded`` (``|K| <= K0``) or ``polydecay``
    (``|K| <= C (1 + d)^(-eta)``)."""

    kind: str
    K0: float = 0.0
    eta: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        if self.kind == "bounded":
            if self.K0 < 0:
                raise ValueError("K0 must be non-negative")
        elif self.kind == "polydecay":
            if self.eta <= 2 or self.C < 0:
                raise ValueError("polydecay class needs eta > 2 and C >= 0")
        else:
            raise ValueError(f"unknown curvature class {self.kind!r}")

    def bound(self, d):
        if self.kind == "bounded":
            return np.full_like(np.asarray(d, dtype=float), self.K0)
        return self.C * (1.0 + np.asarray(d, dtype=float)) ** (-self.eta)


@dataclass(frozen=True)
class MetricSpec:
    """Immutable description of a complete non-positively curved plane metric.

    Parameters
    ----------
    profile : {"euclidean", "hyperbolic", "polydecay", "gaussian_well"}
    params : mapping of parameter names to floats
        ``hyperbolic``: ``k`` (curvature is ``-k``); ``polydecay``: ``a``
        (profile ``f(r) = r + a (r - asinh r)``); ``gaussian_well``: ``c``
        and optional ``center`` (potential ``c |x - center|^2``).
    base_point : Cartesian chart coordinates of the base point ``p``.
    """

    profile: str
    params: tuple = ()
    base_point: tuple = (0.0, 0.0)
    _kparams: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.profile not in _PROFILE_IDS:
            raise ValueError(f"unknown metric profile {self.profile!r}")
        p = dict(self.params)
        if self.profile == "hyperbolic":
            if p.get("k", 0.0) <= 0:
                raise ValueError("hyperbolic profile needs k > 0")
            kp = [p["k"], 0.0, 0.0, 0.0]
        elif self.profile == "polydecay":
            if p.get("a", -1.0) < 0:
                raise ValueError("polydecay profile needs a >= 0")
            kp = [p["a"], 0.0, 0.0, 0.0]
        elif self.profile == "gaussian_well":
            if p.get("c", -1.0) < 0:
                raise ValueError("gaussian_well profile needs c >= 0")
            cx, cy = p.get("center", (0.0, 0.0))
            kp = [p["c"], cx, cy, 0.0]
        else:
            kp = [0.0, 0.0, 0.0, 0.0]
        if self.family == "warped" and tuple(self.base_point) != (0.0, 0.0):
            raise ValueError("warped specs have their base point at the pole")
        object.__setattr__(self, "_kparams", np.array(kp, dtype=float))

    # -- identity -------------------------------------------------------
    @property
    def family(self) -> str:
        return _FAMILY_OF[self.profile]

    @property
    def kernel_id(self) -> int:
        return _PROFILE_IDS[self.profile]

    @property
    def kernel_params(self) -> np.ndarray:
        return self._kparams

    @property
    def base(self) -> np.ndarray:
        return np.asarray(self.base_point, dtype=float)

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def K0(self) -> float:
        """Sharp bound ``sup |K|`` (attained at the pole / well centre)."""
        if self.profile == "euclidean":
            return 0.0
        if self.profile == "gaussian_well":
            return 4.0 * self.param("c")
        return float(self._kparams[0])

    def to_config(self) -> dict:
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params}
        return {
            "family": self.family,
            "profile": self.profile,
            "params": params,
            "base_point": list(self.base_point),
        }

    # -- radial profile (warped) ----------------------------------------
    def warp(self, r):
        """Return ``f, f', f''`` of the warped profile at radii ``r``."""
        r = np.asarray(r, dtype=float)
        if self.profile == "euclidean":
            return r, np.ones_like(r), np.zeros_like(r)
        if self.profile == "hyperbolic":
            s = math.sqrt(self.param("k"))
            return np.sinh(s * r) / s, np.cosh(s * r), s * np.sinh(s * r)
        if self.profile == "polydecay":
            a = self.param("a")
            q = np.sqrt(1.0 + r * r)
            return r + a * _asinh_defect(r), 1.0 + a * (1.0 - 1.0 / q), a * r / q**3
        raise ValueError("warp() is only defined for warped specs")

    def _f_over_r(self, r):
        f = self.warp(np.maximum(r, POLE_R))[0]
        return np.where(r < POLE_R, 1.0, f / np.maximum(r, POLE_R))

    # -- vectorised Cartesian geometry ----------------------------------
    def conformal_factor(self, X):
        X = np.asarray(X, dtype=float)
        c = self.param("c")
        cen = np.asarray(self.param("center", (0.0, 0.0)), dtype=float)
        return np.exp(2.0 * c * np.sum((X - cen) ** 2, axis=-1))

    def metric_cart(self, X):
        """Metric matrices at Cartesian points, shape ``(..., 2, 2)``."""
        X = np.asarray(X, dtype=float)
        if self.family == "conformal":
            return self.conformal_factor(X)[..., None, None] * np.eye(2)
        r = np.linalg.norm(X, axis=-1)
        h = self._f_over_r(r) ** 2
        xh = X / np.maximum(r, 1e-300)[..., None]
        outer = xh[..., :, None] * xh[..., None, :]
        return h[..., None, None] * np.eye(2) + (1.0 - h)[..., None, None] * outer

    def inner(self, X, U, W):
        g = self.metric_cart(X)
        return np.einsum("...i,...ij,...j->...", np.asarray(U, float), g, np.asarray(W, float))

    def norm(self, X, V):
        return np.sqrt(self.inner(X, V, V))

    def normalize(self, X, V):
        V = np.asarray(V, dtype=float)
        return V / self.norm(X, V)[..., None]

    def rot90(self, X, V):
        """Rotate tangent vectors by +pi/2 in the chart orientation."""
        g = self.metric_cart(X)
        V = np.asarray(V, dtype=float)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        s = 1.0 / np.sqrt(det)
        out = np.empty(np.broadcast(g[..., 0], V).shape)
        out[..., 0] = -(g[..., 0, 1] * V[..., 0] + g[..., 1, 1] * V[..., 1]) * s
        out[..., 1] = (g[..., 0, 0] * V[..., 0] + g[..., 0, 1] * V[..., 1]) * s
        return out

    def _frame_q2(self, r):
        """``(r/f - 1) / r^2`` for warped specs, regular at the pole."""
        r = np.asarray(r, dtype=float)
        if self.profile == "euclidean":
            return np.zeros_like(r)
        small = r < 1e-4
        rr = np.where(small, 1e-4, r)
        if self.profile == "hyperbolic":
            k = self.param("k")
            s = math.sqrt(k)
            z = s * rr
            with np.errstate(over="ignore"):
                big = -_sinh_defect(z) / (np.sinh(z) * rr * rr)
            big = np.where(z > 30.0, (-1.0 + 2.0 * z * np.exp(-np.minimum(z, 700.0))) / (rr * rr), big)
            zs = s * r
            return np.where(small, -k * (1.0 / 6.0 - 7.0 * zs * zs / 360.0), big)
        a = self.param("a")
        dd = _asinh_defect(rr)
        big = -a * dd / ((rr + a * dd) * rr * rr)
        return np.where(small, -a * (1.0 / 6.0 - r * r * (3.0 / 40.0 + a / 36.0)), big)

    def frame(self, X):
        """Smooth global oriented orthonormal frame ``(E1, E2)``.

        Warped specs use the polar frame rotated back by ``-theta``, which
        equals ``(d/dx, d/dy)`` at the pole; conformal specs use
        ``e^{-phi} (d/dx, d/dy)``.
        """
        X = np.asarray(X, dtype=float)
        E1 = np.zeros(X.shape)
        E2 = np.zeros(X.shape)
        if self.family == "conformal":
            e = 1.0 / np.sqrt(self.conformal_factor(X))
            E1[..., 0] = e
            E2[..., 1] = e
            return E1, E2
        q2 = self._frame_q2(np.linalg.norm(X, axis=-1))
        x, y = X[..., 0], X[..., 1]
        E1[..., 0] = 1.0 + q2 * y * y
        E1[..., 1] = -q2 * x * y
        E2[..., 0] = -q2 * x * y
        E2[..., 1] = 1.0 + q2 * x * x
        return E1, E2

    def from_frame(self, X, W):
        """Chart components of the vector with frame components ``W``."""
        E1, E2 = self.frame(X)
        W = np.asarray(W, dtype=float)
        return W[..., :1] * E1 + W[..., 1:2] * E2

    def to_frame(self, X, V):
        """Frame components of the chart vector ``V``."""
        E1, E2 = self.frame(X)
        return np.stack([self.inner(X, E1, V), self.inner(X, E2, V)], axis=-1)

    def curvature_cart(self, X):
        X = np.asarray(X, dtype=float)
        if self.profile == "gaussian_well":
            cen = np.asarray(self.param("center", (0.0, 0.0)), dtype=float)
            # written with exp(-2 phi) so far-out samples underflow to 0
            return -4.0 * self.param("c") * np.exp(-2.0 * self.param("c")
                                                   * np.sum((X - cen) ** 2, axis=-1))
        r = np.linalg.norm(X, axis=-1)
        return self.curvature_radial(r)

    def curvature_radial(self, r):
        """Gaussian curvature of a warped spec as a function of the radius."""
        r = np.asarray(r, dtype=float)
        if self.profile == "euclidean":
            return np.zeros_like(r)
        if self.profile == "hyperbolic":
            return np.full_like(r, -self.param("k"))
        rr = np.maximum(r, POLE_R)
        f, _, fpp = self.warp(rr)
        return np.where(r < POLE_R, -self.param("a"), -fpp / f)

    def distance(self, X):
        """Riemannian distance from the base point, vectorised."""
        X = np.asarray(X, dtype=float)
        if self.family == "warped":
            return np.linalg.norm(X, axis=-1)
        if self._radial_about_base():
            c = self.param("c")
            rho = np.linalg.norm(X - self.base, axis=-1)
            if c == 0.0:
                return rho
            return math.sqrt(math.pi) / (2.0 * math.sqrt(c)) * special.erfi(math.sqrt(c) * rho)
        flat = X.reshape(-1, 2)
        out = np.array([_shoot(self, x)[0] for x in flat])
        return out.reshape(X.shape[:-1])

    def distance_grad(self, X):
        """Differential of the distance function (covector components)."""
        X = np.asarray(X, dtype=float)
        if self.family == "warped":
            r = np.linalg.norm(X, axis=-1)
            return X / np.maximum(r, 1e-300)[..., None]
        if self._radial_about_base():
            D = X - self.base
            rho = np.linalg.norm(D, axis=-1)
            scale = np.sqrt(self.conformal_factor(X)) / np.maximum(rho, 1e-300)
            return D * scale[..., None]
        flat = X.reshape(-1, 2)
        out = []
        for x in flat:
            _, _, vend = _shoot(self, x)
            out.append(self.metric_cart(x) @ vend)
        return np.array(out).reshape(X.shape)

    def _radial_about_base(self):
        cen = np.asarray(self.param("center", (0.0, 0.0)), dtype=float)
        return np.allclose(cen, self.base, rtol=0, atol=1e-15)

    # -- scalar kernels --------------------------------------------------
    def accel(self, x, v):
        """Geodesic acceleration ``-Gamma(v, v)`` at a single point."""
        state = np.zeros(8)
        state[:2] = x
        state[2:4] = v
        return kernels.rhs_cart(self.kernel_id, self.kernel_params, state)[2:4]


def _sinh_defect(w):
    w = np.asarray(w, dtype=float)
    w2 = w * w
    series = w * w2 * (1.0 / 6.0 + w2 * (1.0 / 120.0 + w2 * (1.0 / 5040.0
                       + w2 * (1.0 / 362880.0 + w2 / 39916800.0))))
    with np.errstate(over="ignore"):
        return np.where(np.abs(w) < 0.1, series, np.sinh(w) - w)


def _asinh_defect(r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    big = r >= 0.1
    out[big] = r[big] - np.arcsinh(r[big])
    small = ~big
    if np.any(small):
        rs = r[small]
        r2 = rs * rs
        term = rs * r2
        c = 1.0 / 6.0
        tot = np.zeros_like(rs)
        for n in range(1, 13):
            tot += c * term if n % 2 == 1 else -c * term
            c = c * (2 * n + 1) ** 2 / ((2 * n + 2) * (2 * n + 3))
            term = term * r2
        out[small] = tot
    return out


# -- registry ------------------------------------------------------------

def euclidean() -> MetricSpec:
    return MetricSpec("euclidean")


def hyperbolic(k: float = 1.0) -> MetricSpec:
    return MetricSpec("hyperbolic", (("k", float(k)),))


def polydecay(a: float = 0.4) -> MetricSpec:
    """Warped profile ``f(r) = r + a (r - asinh r)``; ``K ~ -r^-3`` at infinity."""
    return MetricSpec("polydecay", (("a", float(a)),))


def gaussian_well(c: float = 0.1, center=(0.0, 0.0), base_point=None) -> MetricSpec:
    center = (float(center[0]), float(center[1]))
    base = center if base_point is None else (float(base_point[0]), float(base_point[1]))
    return MetricSpec("gaussian_well", (("c", float(c)), ("center", center)), base)


def make_spec(profile: str, params: Mapping | None = None, base_point=None) -> MetricSpec:
    params = dict(params or {})
    if profile == "euclidean":
        return euclidean()
    if profile == "hyperbolic":
        return hyperbolic(params.get("k", 1.0))
    if profile == "polydecay":
        return polydecay(params.get("a", 0.4))
    if profile == "gaussian_well":
        return gaussian_well(params.get("c", 0.1), params.get("center", (0.0, 0.0)), base_point)
    raise ValueError(f"unknown metric profile {profile!r}")


def spec_from_config(cfg: Mapping) -> MetricSpec:
    family = cfg.get("family")
    profile = cfg["profile"]
    if family is not None and family != _FAMILY_OF.get(profile):
        raise ValueError(f"profile {profile!r} does not belong to family {family!r}")
    base = cfg.get("base_point")
    if family == "warped" and base is not None and any(b != 0 for b in base):
        raise ValueError("warped specs have their base point at the pole")
    return make_spec(profile, cfg.get("params"), None if family == "warped" else base)


# -- chart helpers -----------------------------------------------------------

def polar_to_cartesian(r, theta, vr=None, vtheta=None):
    """Convert a polar point (and optionally polar vector components)."""
    c, s = math.cos(theta), math.sin(theta)
    x = np.array([r * c, r * s])
    if vr is None:
        return x
    v = np.array([vr * c - vtheta * r * s, vr * s + vtheta * r * c])
    return x, v


def cartesian_to_polar(x, v=None):
    r = math.hypot(x[0], x[1])
    theta = math.atan2(x[1], x[0]) % (2 * math.pi)
    if v is None:
        return r, theta
    if r == 0.0:
        raise PoleError("polar components are undefined at the pole")
    vr = (x[0] * v[0] + x[1] * v[1]) / r
    vt = (x[0] * v[1] - x[1] * v[0]) / (r * r)
    return (r, theta), (vr, vt)


def _chart_to_cart(spec: MetricSpec, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ValueError("chart coordinates must be finite")
    if spec.family == "warped":
        if point[0] < 0:
            raise ValueError("radial coordinate must be non-negative")
        return polar_to_cartesian(point[0], point[1])
    return point


# -- chart-level operations --------------------------------------------------

def metric_tensor(spec: MetricSpec, point) -> np.ndarray:
    """Metric matrix in the spec's chart: polar for warped, Cartesian otherwise."""
    point = np.asarray(point, dtype=float)
    if spec.family == "warped":
        r = point[0]
        if r <= 0.0:
            raise PoleError("the polar metric is degenerate at the pole")
        f = spec.warp(r)[0]
        return np.diag([1.0, float(f) ** 2])
    return spec.metric_cart(point)


def gaussian_curvature(spec: MetricSpec, point) -> float:
    return float(spec.curvature_cart(_chart_to_cart(spec, point)))


def christoffel(spec: MetricSpec, point) -> np.ndarray:
    """Christoffel symbols ``G[m, i, j] = Gamma^m_{ij}`` in the spec's chart."""
    point = np.asarray(point, dtype=float)
    G = np.zeros((2, 2, 2))
    if spec.family == "warped":
        r = point[0]
        if r <= 0.0:
            raise PoleError("polar Christoffel symbols are singular at the pole")
        f, fp, _ = (float(a) for a in spec.warp(r))
        G[0, 1, 1] = -f * fp
        G[1, 0, 1] = G[1, 1, 0] = fp / f
        return G
    c = spec.param("c")
    cen = np.asarray(spec.param("center", (0.0, 0.0)))
    dphi = 2.0 * c * (point - cen)
    for m in range(2):
        for i in range(2):
            for j in range(2):
                G[m, i, j] = ((m == i) * dphi[j] + (m == j) * dphi[i]
                              - (i == j) * dphi[m])
    return G


def christoffel_cart(spec: MetricSpec, x) -> np.ndarray:
    """Cartesian Christoffel symbols recovered by polarising the geodesic
    acceleration (which is exactly quadratic in the velocity)."""
    x = np.asarray(x, dtype=float)
    e = np.eye(2)
    Q = {}
    for i in range(2):
        Q[i, i] = -spec.accel(x, e[i])
    s = -spec.accel(x, e[0] + e[1])
    G = np.zeros((2, 2, 2))
    G[:, 0, 0] = Q[0, 0]
    G[:, 1, 1] = Q[1, 1]
    G[:, 0, 1] = G[:, 1, 0] = 0.5 * (s - Q[0, 0] - Q[1, 1])
    return G


def distance_to_base(spec: MetricSpec, point, tol: float = 1e-9) -> float:
    """Distance from the base point.  Warped: the radial coordinate.  Conformal:
    closed form for a well centred at the base point, Newton shooting otherwise."""
    if spec.family == "warped":
        r = float(np.asarray(point, dtype=float)[0])
        if r < 0:
            raise ValueError("radial coordinate must be non-negative")
        return r
    x = _chart_to_cart(spec, point)
    if spec._radial_about_base():
        return float(spec.distance(x))
    return _shoot(spec, x, tol=tol)[0]


def _shoot(spec: MetricSpec, x, tol: float = 1e-9, max_iter: int = 60):
    """Solve ``exp_p(rho * u(theta)) = x``.

    Returns ``(rho, theta, velocity at x)``.
    """
    p = spec.base
    x = np.asarray(x, dtype=float)
    dx = x - p
    if np.hypot(*dx) < 1e-14:
        return 0.0, 0.0, np.zeros(2)
    rho = float(np.sqrt(spec.inner(p, dx, dx)))
    theta = math.atan2(dx[1], dx[0])
    for _ in range(max_iter):
        # launch direction given by its angle in the global frame at p
        y0 = np.array([p[0], p[1], math.cos(theta), math.sin(theta), 1.0, 0.0, 0.0, 1.0])
        ts, ys, _ = kernels.trace(spec.kernel_id, spec.kernel_params, y0, rho, 1e-12, 1e-14)
        end = ys[-1]
        vend = spec.from_frame(end[:2], end[2:4])
        F = end[:2] - x
        if np.hypot(*F) < tol:
            return rho, theta, vend
        jac = np.column_stack([vend, end[6] * spec.rot90(end[:2], vend)])
        step = np.linalg.solve(jac, -F)
        lam = 1.0
        while rho + lam * step[0] <= 0:
            lam *= 0.5
        rho += lam * step[0]
        theta += lam * step[1]
    raise ShootingError(f"shooting to {x} did not converge")


def verify_curvature_class(spec: MetricSpec, cls: CurvatureClass, n_samples: int = 10_000,
                           radius: float = 100.0, seed: int = 0) -> dict:
    """Sample ``K`` on a scrambled Halton set in the chart disc of ``radius``.

    ``max_violation`` is ``max(0, sup |K| / bound - 1)``; ``worst_ratio`` is the
    unclipped supremum and ``witnesses`` lists points with ratio above one.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n_samples)
    rho = radius * np.sqrt(u[:, 0])
    ang = 2 * np.pi * u[:, 1]
    X = spec.base + np.column_stack([rho * np.cos(ang), rho * np.sin(ang)])
    # the sup of |K| sits at the pole / well centre for every built-in family
    X = np.vstack([spec.base[None, :], X])
    K = spec.curvature_cart(X)
    d = spec.distance(X)
    bound = cls.bound(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, np.abs(K) / bound, np.where(np.abs(K) > 0, np.inf, 0.0))
    worst = float(np.max(ratio))
    bad = np.nonzero(ratio > 1.0 + 1e-12)[0]
    return {
        "max_violation": max(0.0, worst - 1.0),
        "worst_ratio": worst,
        "max_curvature": float(np.max(K)),
        "witnesses": [tuple(X[i]) for i in bad[:20]],
    }


def polydecay_constant(spec: MetricSpec, eta: float, r_max: float = 1e6) -> float:
    """Smallest ``C`` with ``|K(r)| <= C (1 + r)^-eta`` on a fine radial grid,
    inflated by one part in a thousand."""
    if spec.family == "warped":
        r = np.concatenate([[0.0], np.geomspace(1e-6, r_max, 20001)])
        d = r
        K = spec.curvature_radial(r)
    else:
        rho = np.concatenate([[0.0], np.geomspace(1e-6, 12.0, 20001)])
        X = spec.base + np.column_stack([rho, np.zeros_like(rho)])
        d = spec.distance(X)
        K = spec.curvature_cart(X)
    return float(np.max(np.abs(K) * (1.0 + d) ** eta)) * 1.001
