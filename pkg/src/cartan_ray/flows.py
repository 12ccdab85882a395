"""Geodesic, vertical and horizontal flows on the unit sphere bundle.

Orientation convention
----------------------
``rotate_tangent(pp, a)`` rotates counter-clockwise in the chart
orientation, and the vertical flow is ``p_s = rotate_tangent(., s)``.
The horizontal flow moves along ``v_perp = rotate_tangent(v, -pi/2)``.
With this pairing the frame ``(X, V, X_perp)`` satisfies
``[X, V] = X_perp``, ``[V, X_perp] = X`` and ``[X, X_perp] = -K V``
(checked numerically in the test-suite).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ._backend import kernels
from .manifold import MetricSpec, christoffel_cart

__all__ = [
    "PhasePoint",
    "GeodesicPath",
    "EscapeVerdict",
    "BaseCoincidenceError",
    "BracketError",
    "phase_point",
    "phase_point_polar",
    "classify_escaping_batch",
    "geodesic_trace",
    "rotate_tangent",
    "perp",
    "vertical_flow",
    "horizontal_flow",
    "geodesic_flow",
    "flow_batch",
    "flow_batch_angle",
    "classify_escaping",
    "min_distance_parameter",
    "distance_lower_bound",
    "parallel_transport",
    "path_to_csv",
]

RTOL = 1e-10
ATOL = 1e-12
UNIT_TOL = 1e-10


class BaseCoincidenceError(ValueError):
    """Escaping classification requested at the base point itself."""


class BracketError(RuntimeError):
    """Bracket expansion for the distance minimiser ran away."""


@dataclass(frozen=True)
class PhasePoint:
    """A point of the unit sphere bundle in Cartesian chart components."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(2))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("phase point must be finite")

    def flip(self) -> "PhasePoint":
        return PhasePoint(self.x, -self.v)

    def check(self, spec: MetricSpec, tol: float = UNIT_TOL) -> "PhasePoint":
        n = float(spec.norm(self.x, self.v))
        if abs(n - 1.0) > tol:
            raise ValueError(f"tangent vector has g-norm {n}, not 1")
        return self

    def state(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])


def phase_point(spec: MetricSpec, x, v, normalize: bool = True) -> PhasePoint:
    """Build a phase point, optionally rescaling ``v`` onto ``SM``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if normalize:
        v = v / float(spec.norm(x, v))
    return PhasePoint(x, v).check(spec)


def phase_point_polar(spec: MetricSpec, r, theta, angle) -> PhasePoint:
    """Phase point at polar position ``(r, theta)`` whose direction makes
    ``angle`` with the outward radial direction (counter-clockwise)."""
    x = np.array([r * math.cos(theta), r * math.sin(theta)]) + spec.base
    if r == 0.0:
        e1, e2 = spec.frame(x)
        er = math.cos(theta) * e1 + math.sin(theta) * e2
    else:
        er = np.asarray(spec.distance_grad(x), dtype=float)
        er = np.linalg.solve(spec.metric_cart(x), er)
        er = er / float(spec.norm(x, er))
    v = math.cos(angle) * er + math.sin(angle) * spec.rot90(x, er)
    return PhasePoint(x, v)


class GeodesicPath:
    """Dense solution of the geodesic flow with both normal Jacobi fields.

    The state columns are ``x, y, w1, w2, u_h, u_h', u_p, u_p'``: chart
    position, velocity components in the global frame ``spec.frame`` and the
    scalar Jacobi solutions ``u_h`` (data ``1, 0``) and ``u_p`` (data ``0, 1``).
    """

    def __init__(self, spec: MetricSpec, origin: PhasePoint, ts, ys, rc):
        self.spec = spec
        self.origin = origin
        self.ts = ts
        self.ys = ys
        self.rc = rc

    @property
    def T(self) -> float:
        return float(self.ts[-1])

    @property
    def n_steps(self) -> int:
        return len(self.ts) - 1

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t < -1e-12) or np.any(t > self.T * (1 + 1e-12) + 1e-12):
            raise ValueError("time outside the traced interval")
        idx = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.n_steps - 1)
        t0 = self.ts[idx]
        h = self.ts[idx + 1] - t0
        th = ((t - t0) / h)[:, None]
        th1 = 1.0 - th
        c = self.rc[idx]
        out = c[:, 0] + th * (c[:, 1] + th1 * (c[:, 2] + th * (c[:, 3] + th1 * c[:, 4])))
        return out[0] if scalar else out

    def position(self, t):
        return self(t)[..., :2]

    def velocity(self, t):
        """Chart components of the velocity."""
        s = self(t)
        return self.spec.from_frame(s[..., :2], s[..., 2:4])

    def frame_velocity(self, t):
        return self(t)[..., 2:4]

    def jacobi(self, t):
        """``(u_h, u_h', u_p, u_p')`` at times ``t``."""
        return self(t)[..., 4:8]

    def distance(self, t):
        return self.spec.distance(self.position(t))

    @property
    def clairaut(self) -> float | None:
        if self.spec.family != "warped":
            return None
        return float(self.clairaut_along(0.0))

    def clairaut_along(self, t):
        """``f(r)^2 theta'`` along the path (warped specs only)."""
        s = self(t)
        X = s[..., :2]
        m = X[..., 0] * s[..., 3] - X[..., 1] * s[..., 2]
        r = np.linalg.norm(X, axis=-1)
        # f^2 theta' = f * (angular frame component) = (f / r) * m
        return self.spec._f_over_r(r) * m

    def speed_defect(self, t):
        return np.linalg.norm(self(t)[..., 2:4], axis=-1) - 1.0


def geodesic_trace(spec: MetricSpec, pp: PhasePoint, T: float, tol: float = RTOL,
                   atol: float = ATOL, h_max: float = 0.0, jacobi: bool = True) -> GeodesicPath:
    """Adaptive Dormand-Prince integration of the geodesic and its Jacobi
    fields on ``[0, T]``.

    ``jacobi=False`` zeroes the Jacobi data (they then stay zero), which
    avoids overflow on long negatively curved traces.
    """
    if not T > 0 or not math.isfinite(T):
        raise ValueError("T must be positive and finite")
    w = spec.to_frame(pp.x, pp.v)
    j = 1.0 if jacobi else 0.0
    y0 = np.array([pp.x[0], pp.x[1], w[0], w[1], j, 0.0, 0.0, j])
    ts, ys, rc = kernels.trace(spec.kernel_id, spec.kernel_params, y0, float(T),
                               tol, atol, h_max)
    return GeodesicPath(spec, pp, ts, ys, rc)


def rotate_tangent(spec: MetricSpec, pp: PhasePoint, angle: float) -> PhasePoint:
    """Rotate ``v`` by ``angle`` inside the oriented orthonormal frame at ``x``."""
    if angle == 0.0:
        return pp
    w = spec.rot90(pp.x, pp.v)
    return PhasePoint(pp.x, math.cos(angle) * pp.v + math.sin(angle) * w)


def perp(spec: MetricSpec, X, V):
    """``v_perp`` in the frame convention of this module (clockwise quarter turn)."""
    return -spec.rot90(X, V)


def vertical_flow(spec: MetricSpec, pp: PhasePoint, s: float) -> PhasePoint:
    return rotate_tangent(spec, pp, s)


def _endpoint(spec: MetricSpec, x, w, s, tol=RTOL, atol=ATOL):
    """Position and frame velocity of ``gamma_{x,w}(s)`` for either sign of
    ``s``; ``w`` holds frame components."""
    if s == 0.0:
        return np.asarray(x, float), np.asarray(w, float)
    sign = 1.0 if s > 0 else -1.0
    y0 = np.array([x[0], x[1], sign * w[0], sign * w[1], 0.0, 0.0, 0.0, 0.0])
    _, ys, _ = kernels.trace(spec.kernel_id, spec.kernel_params, y0, abs(float(s)), tol, atol, 0.0)
    return ys[-1, :2].copy(), sign * ys[-1, 2:4]


def geodesic_flow(spec: MetricSpec, pp: PhasePoint, s: float, tol: float = RTOL) -> PhasePoint:
    x, w = _endpoint(spec, pp.x, spec.to_frame(pp.x, pp.v), s, tol)
    return PhasePoint(x, spec.from_frame(x, w))


def horizontal_flow(spec: MetricSpec, pp: PhasePoint, s: float, tol: float = RTOL) -> PhasePoint:
    """Move the base point for time ``s`` along the geodesic through ``v_perp``
    and carry ``v`` along by parallel transport.

    In two dimensions the transported vector keeps a constant angle with
    the (parallel) geodesic velocity, so ``Z(s) = rot90(gamma'(s))``.
    """
    if s == 0.0:
        return pp
    w = spec.to_frame(pp.x, pp.v)
    # frame components: v_perp = (w2, -w1), rot90 = (-w2, w1)
    x, vel = _endpoint(spec, pp.x, np.array([w[1], -w[0]]), s, tol)
    return PhasePoint(x, spec.from_frame(x, np.array([-vel[1], vel[0]])))


def flow_batch(spec: MetricSpec, X, V, s: float, kind: str):
    """Apply one of the three flows (``"X"``, ``"V"``, ``"H"``) to arrays of
    phase points for a short time ``s`` (fixed-step RK4, vectorised)."""
    X = np.ascontiguousarray(X, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    W = spec.to_frame(X, V)
    beta = np.arctan2(W[:, 1], W[:, 0])
    Xn, bn = flow_batch_angle(spec, X, beta, s, kind)
    return Xn, spec.from_frame(Xn, np.column_stack([np.cos(bn), np.sin(bn)]))


def flow_batch_angle(spec: MetricSpec, X, beta, s: float, kind: str):
    """:func:`flow_batch` on ``SM = M x S^1`` coordinates ``(x, beta)``, with
    ``beta`` the angle of ``v`` in the global frame.

    The vertical flow is ``beta + s``; ``v_perp`` is ``beta - pi/2``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if s == 0.0 or kind == "V":
        return X.copy(), beta + s
    if kind not in ("X", "H"):
        raise ValueError(f"unknown flow {kind!r}")
    nsub = max(4, int(math.ceil(abs(s) / 2.5e-3)))
    b0 = beta - 0.5 * math.pi if kind == "H" else beta
    st = np.ascontiguousarray(np.column_stack([X, np.cos(b0), np.sin(b0)]))
    out = kernels.short_flow(spec.kernel_id, spec.kernel_params, st, float(s), nsub)
    bn = b0 + np.angle((out[:, 2] + 1j * out[:, 3]) * np.exp(-1j * b0))
    if kind == "H":
        bn = bn + 0.5 * math.pi
    return out[:, :2], bn


@dataclass(frozen=True)
class EscapeVerdict:
    escaping: bool
    tangency: bool
    derivative_at_zero: float


def classify_escaping(spec: MetricSpec, pp: PhasePoint, tol: float = 1e-10) -> EscapeVerdict:
    """Sign of ``d/dt d(gamma(t), p)^2`` at ``t = 0``; by strict convexity a
    non-negative sign means the distance increases for all ``t > 0``."""
    d = float(spec.distance(pp.x))
    if d < 1e-12:
        raise BaseCoincidenceError("classification undefined at the base point")
    grad = spec.distance_grad(pp.x)
    deriv = 2.0 * d * float(grad @ pp.v)
    return EscapeVerdict(deriv >= -tol, abs(deriv) <= tol, deriv)


def classify_escaping_batch(spec: MetricSpec, X, V, tol: float = 1e-10) -> np.ndarray:
    d = spec.distance(X)
    deriv = 2.0 * d * np.sum(spec.distance_grad(X) * V, axis=-1)
    return deriv


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def min_distance_parameter(spec: MetricSpec, pp: PhasePoint, tol: float = 1e-10,
                           max_expand: int = 60):
    """Minimiser ``t*`` of the strictly convex ``t -> d(gamma(t), p)^2`` and
    the minimal distance ``d*``."""
    d0 = float(spec.distance(pp.x))
    span = max(1.0, 2.0 * d0 + 1.0)
    fwd = geodesic_trace(spec, pp, span, jacobi=False)
    bwd = geodesic_trace(spec, pp.flip(), span, jacobi=False)

    def dist2(t):
        if t >= 0:
            return float(fwd.distance(t)) ** 2
        return float(bwd.distance(-t)) ** 2

    step = 0.5
    lo, hi = -step, step
    # convexity: the minimiser is bracketed once the slope changes sign
    for _ in range(max_expand):
        delta = 1e-6 * step
        if dist2(lo) >= dist2(lo + delta) and dist2(hi) >= dist2(hi - delta):
            break
        if step >= span:
            raise BracketError("bracket expansion overflow")
        step = min(2.0 * step, span)
        lo, hi = -step, step
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = dist2(c), dist2(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = dist2(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = dist2(d)
    t_star = 0.5 * (a + b)
    return t_star, math.sqrt(max(dist2(t_star), 0.0))


def distance_lower_bound(kind: str, d_xp: float, s: float, t: float) -> float:
    """Piecewise lower bound for ``d(gamma(t), p)`` along escaping geodesics.

    ``kind`` is ``"geodesic"``, ``"vflow"`` (perturbed by ``p_s``) or
    ``"hflow"`` (perturbed by ``h_s``, which shifts the bound by ``s``).
    """
    kind = kind.lower()
    if t < 0 or s < 0:
        raise ValueError("t and s must be non-negative")
    base = d_xp if t <= 2.0 * d_xp else t - d_xp
    if kind in ("geodesic", "vflow"):
        return base
    if kind == "hflow":
        return base - s
    raise ValueError(f"unknown bound kind {kind!r}")


def parallel_transport(spec: MetricSpec, path: GeodesicPath, Z0, t: float,
                       rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """Integrate ``DZ/dt = 0`` along ``path`` with Cartesian Christoffel symbols.

    Slow and independent of the frame identity used by
    :func:`horizontal_flow`; intended as a cross-check.
    """
    def rhs(tt, z):
        G = christoffel_cart(spec, path.position(tt))
        return -np.einsum("mij,i,j->m", G, path.velocity(tt), z)

    sol = solve_ivp(rhs, (0.0, t), np.asarray(Z0, float), rtol=rtol, atol=atol, method="DOP853")
    return sol.y[:, -1]


def path_to_csv(path: GeodesicPath, fh, n: int = 200) -> None:
    """Write ``t, x, y, vx, vy`` (plus ``r, theta`` for warped specs) rows."""
    t = np.linspace(0.0, path.T, n)
    s = path(t)
    s[:, 2:4] = path.velocity(t)
    w = csv.writer(fh, lineterminator="\n")
    polar = path.spec.family == "warped"
    w.writerow(["t", "x", "y", "vx", "vy"] + (["r", "theta"] if polar else []))
    for ti, row in zip(t, s):
        extra = []
        if polar:
            extra = [repr(float(math.hypot(row[0], row[1]))),
                     repr(float(math.atan2(row[1], row[0]) % (2 * math.pi)))]
        w.writerow([repr(float(ti))] + [repr(float(v)) for v in row[:4]] + extra)
