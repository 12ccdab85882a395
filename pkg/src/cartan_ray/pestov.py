"""Integration over ``SM_{p,r}``, the Pestov energy identity and cutoffs.

Nodes live in geodesic polar coordinates about ``p``: Gauss-Legendre in the
radius, the trapezoid rule in the launch angle ``theta`` and in the fibre
angle ``alpha`` (measured counter-clockwise from the outward radial
direction).  The base area density along each radial geodesic is the Jacobi
solution ``u_p``, so warped and conformal metrics share one code path.

Terms of the identity, for real ``u`` on ``SM_{p,r}``::

    |VXu|^2 = |XVu|^2 + |Xu|^2 - <K Vu, Vu>
              - <<v,nu> Vu, X_perp u>_boundary + <<v_perp,nu> Vu, Xu>_boundary
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate as sint

from .calculus import ClassMismatchError, SMFunction, derivative_field, jacobi_pairing
from .flows import PhasePoint, flow_batch_angle, geodesic_trace, phase_point
from .jacobi import sphere_volume
from .manifold import MetricSpec
from .transform import ScalarField, TruncationPolicy

__all__ = [
    "QuadratureError",
    "SMQuadrature",
    "PestovReport",
    "CutoffFamily",
    "build_quadrature",
    "graded_alpha",
    "ball_area",
    "pestov_terms",
    "pestov_terms_uf",
    "pestov_refinement",
    "pestov_inequality_check",
    "boundary_decay_scan",
    "synthetic_functions",
    "cutoff_profile",
    "cutoff_field",
    "cutoff_convergence",
    "report_to_json",
]

_GL8 = np.polynomial.legendre.leggauss(8)


class QuadratureError(RuntimeError):
    """The node set fails its weight-sum check."""


# -- quadrature ----------------------------------------------------------------

def ball_area(spec: MetricSpec, r: float) -> float:
    """``Vol(B(base, r))`` for warped specs, ``2 pi int_0^r f``."""
    if spec.family != "warped":
        raise ValueError("closed-form ball area needs a warped spec")
    if spec.profile == "euclidean":
        return math.pi * r * r
    if spec.profile == "hyperbolic":
        k = spec.param("k")
        return 2.0 * math.pi * (math.cosh(math.sqrt(k) * r) - 1.0) / k
    val, _ = sint.quad(lambda s: float(spec.warp(s)[0]), 0.0, r, epsabs=0, epsrel=1e-13, limit=200)
    return 2.0 * math.pi * val


@dataclass
class SMQuadrature:
    """Tensor-product nodes on ``SM_{p,r}`` and on its boundary.

    Interior arrays have shape ``(n_r, n_theta)``; every base node carries
    the same fibre nodes ``alpha`` with weights ``alpha_w``.
    """

    spec: MetricSpec
    p: np.ndarray
    r: float
    resolution: tuple
    rho: np.ndarray
    X: np.ndarray         # (n_r, n_theta, 2)
    beta_r: np.ndarray    # frame angle of the outward radial direction
    area_w: np.ndarray    # base weights
    bX: np.ndarray        # (n_theta, 2)
    bbeta_r: np.ndarray
    bw: np.ndarray        # boundary length weights
    alpha: np.ndarray
    alpha_w: np.ndarray   # fibre weights, summing to 2 pi

    @property
    def total_weight(self) -> float:
        return float(self.area_w.sum()) * 2.0 * math.pi

    @property
    def boundary_weight(self) -> float:
        return float(self.bw.sum()) * 2.0 * math.pi

    def interior(self, theta_index=None):
        """Flattened ``(X, beta, weight, alpha)``, ordered ``(r, theta, alpha)``.

        With ``theta_index`` only that launch angle is returned and its
        weights absorb the whole circle (for rotation invariant integrands).
        """
        X, b, w = self.X, self.beta_r, self.area_w
        if theta_index is not None:
            X = X[:, theta_index:theta_index + 1]
            b = b[:, theta_index:theta_index + 1]
            w = w.sum(axis=1, keepdims=True)
        na = self.alpha.size
        Xf = np.repeat(X.reshape(-1, 2), na, axis=0)
        beta = (b.reshape(-1, 1) + self.alpha[None, :]).ravel()
        wf = (w.reshape(-1, 1) * self.alpha_w[None, :]).ravel()
        al = np.tile(self.alpha, b.size)
        return Xf, beta, wf, al

    def boundary(self, theta_index=None):
        """Flattened ``(X, beta, weight, <v, nu>, <v_perp, nu>)``."""
        X, b, w = self.bX, self.bbeta_r, self.bw
        if theta_index is not None:
            X, b, w = X[theta_index:theta_index + 1], b[theta_index:theta_index + 1], w.sum(keepdims=True)
        na = self.alpha.size
        Xf = np.repeat(X, na, axis=0)
        beta = (b[:, None] + self.alpha[None, :]).ravel()
        wf = (w[:, None] * self.alpha_w[None, :]).ravel()
        al = np.tile(self.alpha, b.size)
        # v sits at angle alpha from nu; v_perp is the clockwise quarter turn
        return Xf, beta, wf, np.cos(al), np.sin(al)

    def _pp(self, X, beta):
        V = self.spec.from_frame(X, np.column_stack([np.cos(beta), np.sin(beta)]))
        return [PhasePoint(x, v) for x, v in zip(X, V)]

    @property
    def nodes(self):
        X, beta, w, _ = self.interior()
        return list(zip(self._pp(X, beta), w))

    @property
    def boundary_nodes(self):
        """``(PhasePoint, weight, nu)`` with ``nu`` the outward unit normal."""
        X, beta, w, _, _ = self.boundary()
        bn = np.repeat(self.bbeta_r, self.alpha.size)
        nu = self.spec.from_frame(X, np.column_stack([np.cos(bn), np.sin(bn)]))
        return list(zip(self._pp(X, beta), w, nu))


def graded_alpha(scale: float, m: int = 8) -> tuple:
    """Fibre nodes clustered at the inward direction ``alpha = pi``.

    Gauss-Legendre panels (``m`` points each) whose widths halve towards
    ``pi`` until they reach ``0.1 / scale``.  Directions that return
    towards ``p`` from a sphere of length ``~ scale`` fill an angle of order
    ``1 / scale``, which a uniform rule misses on fast-growing spheres.
    """
    h_min = 0.1 / max(scale, 1.0)
    K = max(1, int(math.ceil(math.log2(math.pi / h_min))))
    h = math.pi * 0.5 ** np.arange(K + 1)
    # edges pi - h_0 < ... < pi - h_K < pi + h_K < ... < pi + h_0
    edges = np.concatenate([math.pi - h, (math.pi + h)[::-1]])
    x, w = np.polynomial.legendre.leggauss(m)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None, :]).ravel()
    weights = (0.5 * (b - a)[:, None] * w[None, :]).ravel()
    return nodes, weights


def build_quadrature(spec: MetricSpec, p=None, r: float = 1.0, n_r: int = 16, n_theta: int = 16,
                     n_alpha: int = 16, check: bool = True, alpha_rule: str = "trapezoid") -> SMQuadrature:
    """Nodes and weights on ``SM_{p,r}`` and ``dSM_{p,r}``.

    Base measure ``|u_p(rho)| d rho d theta`` along radial geodesics, fibre
    measure ``d alpha`` (uniform trapezoid, or ``alpha_rule="graded"`` for
    :func:`graded_alpha` scaled by the boundary density; ``n_alpha`` then
    sets the points per panel).  On warped specs centred at the base point
    the weight sums are checked against ``2 pi Vol(B)`` and ``2 pi Vol(S)``.
    """
    if min(n_r, n_theta, n_alpha) < 4:
        raise ValueError("resolutions must be >= 4")
    if not r > 0:
        raise ValueError("r must be positive")
    p = spec.base if p is None else np.asarray(p, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    rho = 0.5 * r * (xg + 1.0)
    wr = 0.5 * r * wg
    th = 2.0 * math.pi * np.arange(n_theta) / n_theta
    E1, E2 = spec.frame(p)
    X = np.empty((n_r, n_theta, 2))
    beta = np.empty((n_r, n_theta))
    dens = np.empty((n_r, n_theta))
    bX = np.empty((n_theta, 2))
    bb = np.empty(n_theta)
    bd = np.empty(n_theta)
    for j, t in enumerate(th):
        path = geodesic_trace(spec, phase_point(spec, p, math.cos(t) * E1 + math.sin(t) * E2), r)
        s = path(np.append(rho, r))
        X[:, j] = s[:-1, :2]
        beta[:, j] = np.arctan2(s[:-1, 3], s[:-1, 2])
        dens[:, j] = np.abs(s[:-1, 6])
        bX[j] = s[-1, :2]
        bb[j] = math.atan2(s[-1, 3], s[-1, 2])
        bd[j] = abs(s[-1, 6])
    dth = 2.0 * math.pi / n_theta
    if alpha_rule == "trapezoid":
        alpha = 2.0 * math.pi * np.arange(n_alpha) / n_alpha
        alpha_w = np.full(n_alpha, 2.0 * math.pi / n_alpha)
    elif alpha_rule == "graded":
        alpha, alpha_w = graded_alpha(float(bd.max()), n_alpha)
    else:
        raise ValueError("alpha_rule must be 'trapezoid' or 'graded'")
    quad = SMQuadrature(spec, p, float(r), (n_r, n_theta, alpha.size), rho, X, beta,
                        dens * wr[:, None] * dth, bX, bb, bd * dth, alpha, alpha_w)
    if check and spec.family == "warped" and np.allclose(p, spec.base):
        area = ball_area(spec, r)
        if abs(quad.total_weight - 2 * math.pi * area) > 1e-6 * 2 * math.pi * area:
            raise QuadratureError(f"SM volume {quad.total_weight} vs {2 * math.pi * area}: "
                                  "radial resolution too coarse")
        length = 2.0 * math.pi * float(spec.warp(r)[0])
        if abs(quad.boundary_weight - 2 * math.pi * length) > 1e-6 * 2 * math.pi * length:
            raise QuadratureError("boundary weight check failed")
    return quad


# -- identity ------------------------------------------------------------------

@dataclass
class PestovReport:
    vxu2: float
    xvu2: float
    xu2: float
    curv_term: float
    b1: float
    b2: float
    residual: float
    resolution: tuple
    step: float

    @property
    def scale(self) -> float:
        return self.vxu2 + self.xvu2 + self.xu2 + abs(self.curv_term) + abs(self.b1) + abs(self.b2)

    @property
    def relative_residual(self) -> float:
        s = self.scale
        return abs(self.residual) / s if s > 0 else abs(self.residual)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        d["relative_residual"] = self.relative_residual
        return d


def _assemble(q, w, xu, vu, vxu, xvu, K, bw, cvn, svn, bvu, bxpu, bxu, step):
    vxu2 = float(np.sum(w * vxu**2))
    xvu2 = float(np.sum(w * xvu**2))
    xu2 = float(np.sum(w * xu**2))
    curv = float(np.sum(w * K * vu**2))
    b1 = float(np.sum(bw * cvn * bvu * bxpu))
    b2 = float(np.sum(bw * svn * bvu * bxu))
    vals = np.array([vxu2, xvu2, xu2, curv, b1, b2])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite Pestov term")
    res = vxu2 - (xvu2 + xu2 - curv - b1 + b2)
    return PestovReport(vxu2, xvu2, xu2, curv, b1, b2, res, tuple(q.resolution), step)


def pestov_terms(spec: MetricSpec, u: SMFunction, quad: SMQuadrature,
                 step: float = 1e-3) -> PestovReport:
    """All six terms for a function given on ``SM``, by nested central
    differences along the three flows."""
    X, beta, w, _ = quad.interior()
    Xu = derivative_field(spec, u, "X", step)
    Vu = derivative_field(spec, u, "V", step)
    xu = Xu(X, beta)
    vu = Vu(X, beta)
    vxu = derivative_field(spec, Xu, "V", step)(X, beta)
    xvu = derivative_field(spec, Vu, "X", step)(X, beta)
    K = spec.curvature_cart(X)
    bX, bb, bw, cvn, svn = quad.boundary()
    bxpu = derivative_field(spec, u, "Xperp", step)(bX, bb)
    return _assemble(quad, w, xu, vu, vxu, xvu, K, bw, cvn, svn,
                     Vu(bX, bb), bxpu, Xu(bX, bb), step)


def _symmetric(spec: MetricSpec, p, f: ScalarField) -> bool:
    """Rotations about ``p`` are isometries fixing ``f``."""
    if not f.radial or not np.allclose(p, spec.base):
        return False
    if spec.family == "warped":
        return True
    return spec._radial_about_base()


def _chord_xu(spec, f, X, beta, h):
    """``(u(phi_h z) - u(phi_-h z)) / 2h = -(1/2h) int_{-h}^{h} f(gamma(t)) dt``
    for ``u = u^f``: the tails cancel, leaving a short chord integral."""
    t, wt = _GL8
    acc = np.zeros(len(beta))
    for tj, wj in zip(t, wt):
        Xs, _ = flow_batch_angle(spec, X, beta, float(h * tj), "X")
        acc += wj * f(Xs)
    return -0.5 * acc


def _pairings(spec, f, X, beta, which, policy):
    V = spec.from_frame(X, np.column_stack([np.cos(beta), np.sin(beta)]))
    return np.array([jacobi_pairing(spec, f, PhasePoint(x, v), which, policy)
                     for x, v in zip(X, V)])


def pestov_terms_uf(spec: MetricSpec, f: ScalarField, quad: SMQuadrature,
                    policy: TruncationPolicy = TruncationPolicy(), step: float = 1e-3,
                    h: float = 1e-3) -> tuple:
    """Pestov terms for ``u = u^f`` plus the reduced identity.

    ``Vu`` and ``X_perp u`` come from Jacobi pairings, ``XVu`` from central
    differences of the pairing along the geodesic flow, ``Xu`` from the
    chord quotient (:func:`_chord_xu`) and ``VXu`` from its ``V`` difference.
    When rotations about ``p`` preserve both metric and field, one launch
    angle is evaluated and reused.

    Returns ``(report, extra)`` with ``extra`` holding ``|X_perp u|^2``,
    ``|f|^2`` and the reduced residual
    ``|X_perp u|^2 + |f|^2 - curv - b1 + b2``.
    """
    ti = 0 if _symmetric(spec, quad.p, f) else None
    X, beta, w, _ = quad.interior(ti)
    xu = _chord_xu(spec, f, X, beta, h)
    vxu = (_chord_xu(spec, f, X, beta + step, h) - _chord_xu(spec, f, X, beta - step, h)) / (2 * step)
    vu = _pairings(spec, f, X, beta, "Jp", policy)
    xpu = _pairings(spec, f, X, beta, "Jh", policy)
    Xp, bp = flow_batch_angle(spec, X, beta, step, "X")
    Xm, bm = flow_batch_angle(spec, X, beta, -step, "X")
    xvu = (_pairings(spec, f, Xp, bp, "Jp", policy)
           - _pairings(spec, f, Xm, bm, "Jp", policy)) / (2 * step)
    K = spec.curvature_cart(X)
    bX, bb, bw, cvn, svn = quad.boundary(ti)
    bvu = _pairings(spec, f, bX, bb, "Jp", policy)
    bxpu = _pairings(spec, f, bX, bb, "Jh", policy)
    bxu = _chord_xu(spec, f, bX, bb, h)
    rep = _assemble(quad, w, xu, vu, vxu, xvu, K, bw, cvn, svn, bvu, bxpu, bxu, step)
    xperp2 = float(np.sum(w * xpu**2))
    f2 = float(np.sum(w * f(X) ** 2))
    reduced = xperp2 + f2 - rep.curv_term - rep.b1 + rep.b2
    scale = xperp2 + f2 + abs(rep.curv_term) + abs(rep.b1) + abs(rep.b2)
    extra = {"xperp_u2": xperp2, "f2": f2, "reduced_residual": reduced,
             "reduced_relative": abs(reduced) / scale if scale > 0 else abs(reduced),
             "symmetric": ti is not None}
    return rep, extra


def pestov_refinement(spec: MetricSpec, u: SMFunction, r: float, ns=(16, 24, 32, 48),
                      step_scale: float = 0.048, p=None) -> dict:
    """Relative residual under simultaneous refinement: ``n_r = n_theta =
    n_alpha = n`` and difference step ``step_scale / n``.  ``order`` is minus
    the log-log slope against ``n``."""
    res = []
    for n in ns:
        q = build_quadrature(spec, p, r, n, n, n)
        res.append(pestov_terms(spec, u, q, step_scale / n).relative_residual)
    res = np.asarray(res)
    order = -float(np.polyfit(np.log(ns), np.log(np.maximum(res, 1e-300)), 1)[0])
    return {"ns": list(ns), "steps": [step_scale / n for n in ns],
            "relative_residuals": res.tolist(), "order": order}


def _bump(X, c, R):
    s = np.sum((X - c) ** 2, axis=-1) / R**2
    out = np.zeros_like(s)
    m = s < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m]))
    return out


def synthetic_functions(spec: MetricSpec, r: float, p=None) -> dict:
    """Five smooth test functions on ``SM`` with base support inside ``B(p, r)``."""
    p = spec.base if p is None else np.asarray(p, dtype=float)
    R = 0.6 * r
    # shrink the chart radius until its circle sits inside the geodesic ball
    ring = np.stack([np.cos(np.linspace(0, 2 * np.pi, 16, endpoint=False)),
                     np.sin(np.linspace(0, 2 * np.pi, 16, endpoint=False))], axis=-1)
    while np.max(spec.distance(p + R * ring)) > 0.8 * r:
        R *= 0.8
    c2 = p + np.array([0.3 * R, -0.2 * R])
    R2 = 0.5 * R

    def chi(X):
        return _bump(X, p, R)

    def chi2(X):
        return _bump(X, c2, R2)

    return {
        "bump_cos": SMFunction(lambda X, b: chi(X) * np.cos(b)),
        "bump_sin2": SMFunction(lambda X, b: chi(X) * np.sin(2 * b)),
        "offset_mixed": SMFunction(lambda X, b: chi2(X) * (1.0 + np.cos(b))),
        "bump_xcos": SMFunction(lambda X, b: chi(X) * (X[:, 0] - p[0]) * np.cos(b) * np.sin(b)),
        "bump_sq": SMFunction(lambda X, b: chi(X) ** 2 * np.cos(3 * b) + chi(X) * np.sin(b)),
    }


def _boundary_uf(spec, f, quad, policy, h=1e-3):
    ti = 0 if _symmetric(spec, quad.p, f) else None
    bX, bb, bw, cvn, svn = quad.boundary(ti)
    vu = _pairings(spec, f, bX, bb, "Jp", policy)
    xpu = _pairings(spec, f, bX, bb, "Jh", policy)
    xu = _chord_xu(spec, f, bX, bb, h)
    return bw, cvn, svn, vu, xpu, xu


def pestov_inequality_check(spec: MetricSpec, f: ScalarField, p=None, r: float = 4.0,
                            resolutions=((32, 8, 8), (48, 8, 16)),
                            policy: TruncationPolicy = TruncationPolicy(),
                            tol: float = 1e-3, alpha_rule: str = "graded") -> dict:
    """``|f|^2_{L^2(SM_{p,r})} <= b1 - b2`` for ``u = u^f``.

    Holds for every ``r`` on a non-positively curved surface; a negative
    slack beyond ``tol |f|^2`` flags a bug.
    """
    p = spec.base if p is None else np.asarray(p, dtype=float)
    rows = []
    for res in resolutions:
        q = build_quadrature(spec, p, r, *res, alpha_rule=alpha_rule)
        X, beta, w, _ = q.interior(0 if _symmetric(spec, p, f) else None)
        if np.max(spec.curvature_cart(X)) > 1e-12:
            raise ClassMismatchError("positive curvature inside the ball")
        lhs = float(np.sum(w * f(X) ** 2))
        bw, cvn, svn, vu, xpu, xu = _boundary_uf(spec, f, q, policy)
        b1 = float(np.sum(bw * cvn * vu * xpu))
        b2 = float(np.sum(bw * svn * vu * xu))
        rows.append({"resolution": list(res), "lhs": lhs, "b1": b1, "b2": b2,
                     "rhs": b1 - b2, "slack": b1 - b2 - lhs})
    last = rows[-1]
    return {"r": r, "rows": rows, "lhs": last["lhs"], "rhs": last["rhs"], "slack": last["slack"],
            "pass": last["slack"] >= -tol * max(last["lhs"], 1e-300) or last["lhs"] == 0.0}


def boundary_decay_scan(spec: MetricSpec, f: ScalarField, p=None, r_list=(2, 4, 6, 8, 10),
                        n_theta: int = 8, n_alpha: int = 16,
                        policy: TruncationPolicy = TruncationPolicy()) -> dict:
    """Boundary terms ``b1(r)``, ``b2(r)`` with the escaping half
    (``<v, nu> >= 0``) reported separately, and fitted rates of its magnitude.

    Exponential fields are fitted against ``r`` (predicted ``b1`` rate
    ``5 sqrt(K0) - 2 eta``); polynomial fields against ``log r`` with
    predicted exponent ``-2 (eta - 1) + 1`` (the ``+1`` is the sphere length).
    """
    if f.decay is None and not math.isfinite(f.support_radius):
        raise ClassMismatchError("scan needs a decay class or compact support")
    p = spec.base if p is None else np.asarray(p, dtype=float)
    r_list = np.asarray(r_list, dtype=float)
    rows = []
    for r in r_list:
        # interior nodes are unused here
        q = build_quadrature(spec, p, float(r), 4, n_theta, n_alpha, check=False, alpha_rule="graded")
        bw, cvn, svn, vu, xpu, xu = _boundary_uf(spec, f, q, policy)
        esc = np.where(np.abs(cvn) < 1e-12, 0.5, (cvn > 0).astype(float))
        rows.append({
            "r": float(r),
            "b1": float(np.sum(bw * cvn * vu * xpu)),
            "b2": float(np.sum(bw * svn * vu * xu)),
            "b1_escaping": float(np.sum(esc * bw * cvn * vu * xpu)),
            "b2_escaping": float(np.sum(esc * bw * svn * vu * xu)),
            "sphere_length": sphere_volume(spec, float(r)),
        })
    kind = "support" if f.decay is None else f.decay.kind
    x = r_list if kind == "exp" else np.log(r_list)

    def fit(key):
        y = np.abs([row[key] for row in rows])
        if np.all(y == 0):
            return -math.inf
        return float(np.polyfit(x, np.log(np.maximum(y, 1e-300)), 1)[0])

    rep = {"kind": kind, "rows": rows, "rate_b1": fit("b1_escaping"), "rate_b2": fit("b2_escaping")}
    if kind == "exp":
        s = math.sqrt(spec.K0)
        rep["predicted_b1"] = 5 * s - 2 * f.decay.eta
        rep["predicted_b2"] = 3 * s - 2 * f.decay.eta
        rep["threshold"] = 0.9 * rep["predicted_b1"]
    elif kind == "poly":
        rep["predicted_b1"] = -2 * (f.decay.eta - 1) + 1
        rep["threshold"] = -0.9 * 2 * (f.decay.eta - 1) + 1
    else:
        rep["predicted_b1"] = -math.inf
        rep["threshold"] = -math.inf
    rep["pass"] = rep["rate_b1"] <= rep["threshold"]
    return rep


# -- cutoffs -------------------------------------------------------------------

def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m])
    return out


def _dpsi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m]) / t[m] ** 2
    return out


def cutoff_profile(s, derivative: bool = False):
    """``psi(2-s) / (psi(2-s) + psi(s-1))`` with ``psi(t) = exp(-1/t)``:
    one on ``s <= 1``, zero on ``s >= 2``, smooth in between."""
    s = np.asarray(s, dtype=float)
    a, b = _psi(2.0 - s), _psi(s - 1.0)
    if not derivative:
        return a / (a + b)
    da, db = -_dpsi(2.0 - s), _dpsi(s - 1.0)
    return (da * b - a * db) / (a + b) ** 2


@dataclass
class CutoffFamily:
    """``phi_k(x) = profile(d(x, p) / k)``."""

    k: float
    spec: MetricSpec
    profile: Callable = cutoff_profile

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")

    @property
    def gradient_constant(self) -> float:
        """``C`` with ``|grad phi_k| <= C / k``."""
        s = np.linspace(1.0, 2.0, 20001)
        return float(np.max(np.abs(self.profile(s, derivative=True))))

    def value(self, d):
        return self.profile(np.asarray(d, dtype=float) / self.k)

    def dvalue(self, d):
        return self.profile(np.asarray(d, dtype=float) / self.k, derivative=True) / self.k

    def check(self, n: int = 4000, seed: int = 0) -> dict:
        """Sample the four defining properties on random points."""
        rng = np.random.default_rng(seed)
        X = self.spec.base + rng.uniform(-3 * self.k, 3 * self.k, size=(n, 2))
        d = self.spec.distance(X)
        phi = self.value(d)
        G = self.spec.distance_grad(X) * self.dvalue(d)[:, None]
        gnorm = np.sqrt(np.einsum("ni,nij,nj->n", G, np.linalg.inv(self.spec.metric_cart(X)), G))
        C = self.gradient_constant
        return {
            "range": bool(np.all((phi >= 0) & (phi <= 1))),
            "one_inside": bool(np.all(phi[d <= self.k] == 1.0)),
            "zero_outside": bool(np.all(phi[d >= 2 * self.k] == 0.0)),
            "gradient": bool(np.all(gnorm <= C / self.k * (1 + 1e-12))),
            "C": C,
        }


def cutoff_field(family: CutoffFamily, f: ScalarField) -> ScalarField:
    """``phi_k f`` with the product-rule gradient; support radius ``2k``."""
    spec = family.spec

    def ev(X):
        return family.value(spec.distance(X)) * f(X)

    def gr(X):
        d = spec.distance(X)
        return (family.value(d)[..., None] * f.gradient(X)
                + (family.dvalue(d) * f(X))[..., None] * spec.distance_grad(X))

    rd = None
    if f.radial_derivative is not None and spec.family == "warped":
        base = spec.base

        def rd(d):
            d = np.asarray(d, dtype=float)
            fv = f(base + np.stack([d, np.zeros_like(d)], axis=-1))
            return family.value(d) * f.radial_derivative(d) + family.dvalue(d) * fv

    return ScalarField(f"cutoff{family.k:g}*{f.name}", ev, None if f.gradient is None else gr,
                       None, min(2.0 * family.k, f.support_radius), dict(f.params, k=family.k),
                       radial_derivative=rd, radial=f.radial)


def _sample_sm(spec, p, r, n, seed):
    """Random phase points with base point in ``B(p, r)``."""
    rng = np.random.default_rng(seed)
    E1, E2 = spec.frame(p)
    out = []
    for _ in range(n):
        rho = r * math.sqrt(rng.random())
        th, al = 2 * math.pi * rng.random(), 2 * math.pi * rng.random()
        pp = phase_point(spec, p, math.cos(th) * E1 + math.sin(th) * E2)
        if rho > 0:
            path = geodesic_trace(spec, pp, rho, jacobi=False)
            x, w = path.position(rho), path.frame_velocity(rho)
        else:
            x, w = p, spec.to_frame(p, pp.v)
        b = math.atan2(w[1], w[0]) + al
        out.append(PhasePoint(x, spec.from_frame(x, np.array([math.cos(b), math.sin(b)]))))
    return out


def cutoff_convergence(spec: MetricSpec, f: ScalarField, p=None, r: float = 4.0,
                       k_list=(8, 16, 32), n_samples: int = 32, seed: int = 0,
                       policy: TruncationPolicy = TruncationPolicy(), rtol: float = 0.5) -> dict:
    """``sup |X_perp u_k - X_perp u^f|`` and the same for ``V`` over sampled
    ``SM_{p,r}``, with ``u_k = u^{phi_k f}``.

    Each doubling of ``k`` is expected to scale the difference by
    ``2^(1 - eta)``; ``pass`` requires monotone decrease and every ratio
    within ``rtol`` (relative) of that.
    """
    if f.decay is None or f.decay.kind != "poly" or f.decay.eta <= 1:
        raise ClassMismatchError("cutoff convergence needs polynomial decay with eta > 1")
    if spec.profile == "hyperbolic":
        raise ClassMismatchError("polynomial decay needs decaying curvature")
    k_list = [float(k) for k in k_list]
    if min(k_list) <= r or sorted(k_list) != k_list:
        raise ValueError("k_list must increase and exceed r")
    p = spec.base if p is None else np.asarray(p, dtype=float)
    pts = _sample_sm(spec, p, r, n_samples, seed)
    ref = {w: np.array([jacobi_pairing(spec, f, q, w, policy) for q in pts]) for w in ("Jh", "Jp")}
    sup = {"Xperp": [], "V": []}
    for k in k_list:
        fk = cutoff_field(CutoffFamily(k, spec), f)
        for op, w in (("Xperp", "Jh"), ("V", "Jp")):
            vals = np.array([jacobi_pairing(spec, fk, q, w, policy) for q in pts])
            sup[op].append(float(np.max(np.abs(vals - ref[w]))))
    predicted = [(k_list[i + 1] / k_list[i]) ** (1.0 - f.decay.eta) for i in range(len(k_list) - 1)]
    rep = {"k": k_list, "predicted_ratios": predicted}
    ok = True
    for op in ("Xperp", "V"):
        s = np.asarray(sup[op])
        # an exactly vanishing difference (support inside B(p, k)) counts as converged
        exact = s[1:] == 0.0
        ratios = np.divide(s[1:], s[:-1], out=np.zeros(len(s) - 1), where=s[:-1] > 0).tolist()
        rep[f"sup_diff_{op}"] = s.tolist()
        rep[f"ratios_{op}"] = ratios
        ok &= bool(np.all((np.diff(s) < 0) | exact))
        ok &= all(e or abs(q / pr - 1.0) <= rtol for q, pr, e in zip(ratios, predicted, exact))
    rep["pass"] = ok
    return rep


def report_to_json(report, fh, timing: Optional[float] = None) -> None:
    """JSON dump of a report (dataclass or dict), numpy scalars converted."""
    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if timing is not None:
        d["timing_s"] = timing

    def conv(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    json.dump(d, fh, indent=2, sort_keys=True, default=conv)
    fh.write("\n")

