"""Discrete ray transform on a chart box, its adjoint and least-squares recovery.

Grid values live on the ``n x n`` nodes of a square box and define a field
by bilinear interpolation (zero outside the box).  Each row of the forward
matrix integrates that field along one traced geodesic: the segments inside
the box are located exactly and sampled with the composite trapezoid rule.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from .flows import PhasePoint, geodesic_trace
from .manifold import MetricSpec

__all__ = [
    "CoverageError",
    "DivergenceError",
    "GridField",
    "FanGeometry",
    "ForwardOperator",
    "make_grid",
    "fan_geometry",
    "build_forward",
    "apply_adjoint",
    "dot_test",
    "solve_least_squares",
    "discrepancy_reg",
    "gradient_penalty",
    "phantom",
    "phantom_mass",
    "PHANTOMS",
    "recovery_experiment",
    "export_grid",
    "sinogram_to_csv",
]


class CoverageError(RuntimeError):
    """Some grid cell is crossed by too few geodesics."""


class DivergenceError(RuntimeError):
    """The residual of an iterative solver grew by more than 10%."""


@dataclass
class GridField:
    """Node values on the box ``[cx - L, cx + L] x [cy - L, cy + L]``.

    ``values[i, j]`` sits at ``(x_i, y_j)``.
    """

    center: tuple
    half_width: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("values must be a square array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def axes(self):
        cx, cy = self.center
        t = np.linspace(-self.half_width, self.half_width, self.n)
        return cx + t, cy + t

    @property
    def domain(self) -> list:
        cx, cy = self.center
        L = self.half_width
        return [cx - L, cx + L, cy - L, cy + L]

    def with_values(self, values) -> "GridField":
        return GridField(self.center, self.half_width, np.reshape(values, (self.n, self.n)))

    def stencil(self, X):
        """Bilinear stencils: flat node indices ``(m, 4)``, weights ``(m, 4)``
        and an inside mask."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x0, y0 = self.domain[0], self.domain[2]
        u = (X[:, 0] - x0) / self.h
        v = (X[:, 1] - y0) / self.h
        n = self.n
        inside = (u >= 0) & (u <= n - 1) & (v >= 0) & (v <= n - 1)
        i = np.clip(np.floor(u).astype(int), 0, n - 2)
        j = np.clip(np.floor(v).astype(int), 0, n - 2)
        a, b = u - i, v - j
        idx = np.stack([i * n + j, (i + 1) * n + j, i * n + j + 1, (i + 1) * n + j + 1], axis=1)
        w = np.stack([(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b], axis=1)
        w[~inside] = 0.0
        return idx, w, inside

    def __call__(self, X):
        idx, w, _ = self.stencil(X)
        return np.sum(self.values.ravel()[idx] * w, axis=1)

    def l2(self) -> float:
        return float(np.linalg.norm(self.values))


def make_grid(n: int = 64, half_width: float = 2.0, center=(0.0, 0.0)) -> GridField:
    return GridField(tuple(map(float, center)), float(half_width), np.zeros((n, n)))


@dataclass
class FanGeometry:
    launch: list
    step: float
    lengths: np.ndarray
    seed: int = 0
    launch_radius: float = 0.0


def _meets_box(spec, grid, pp, T, step):
    path = geodesic_trace(spec, pp, T, jacobi=False)
    ts = np.linspace(0.0, T, max(2, int(math.ceil(T / step))) + 1)
    return bool(np.any(_box_margin(grid, path.position(ts)) > 0))


def _aperture(spec, c, R, rho_c):
    """Half-angle about the inward normal containing every launch direction
    whose geodesic can reach the chart disk of radius ``rho_c``.

    For metrics rotationally symmetric about ``c`` the Clairaut quantity
    ``h(rho) sin(a)`` is conserved (``h = f`` warped, ``h = e^phi rho``
    conformal), so the geodesic reaches radius ``rho_c`` only if
    ``|sin a| <= h(rho_c) / h(R)``.
    """
    if not np.allclose(c, spec.base):
        return 0.5 * math.pi
    if spec.family == "warped":
        h = lambda rho: float(spec.warp(rho)[0])  # noqa: E731
    elif spec._radial_about_base():
        h = lambda rho: math.sqrt(float(spec.conformal_factor(c + np.array([rho, 0.0])))) * rho  # noqa: E731
    else:
        return 0.5 * math.pi
    q = h(rho_c) / h(R)
    return 0.5 * math.pi if q >= 1.0 else min(0.5 * math.pi, math.asin(q) * (1.0 + 1e-9))


def fan_geometry(spec: MetricSpec, grid: GridField, n_geodesics: int, seed: int = 0,
                 step: float | None = None, max_tries: int = 100) -> FanGeometry:
    """Geodesics launched from the chart circle of twice the box
    circumradius, with launch angle and inward direction uniform (seeded);
    draws that miss the box are rejected.

    Directions are drawn from the aperture of :func:`_aperture`, which
    only skips draws that would be rejected anyway.
    """
    rng = np.random.default_rng(seed)
    c = np.asarray(grid.center, dtype=float)
    R = 2.0 * math.sqrt(2.0) * grid.half_width
    step = grid.h / 4.0 if step is None else float(step)
    amax = _aperture(spec, c, R, math.sqrt(2.0) * grid.half_width)
    pts, lengths = [], []
    tries = 0
    while len(pts) < n_geodesics:
        tries += 1
        if tries > max_tries * max(n_geodesics, 1):
            raise CoverageError("too few launched geodesics meet the box")
        t = rng.uniform(0.0, 2.0 * math.pi)
        a = rng.uniform(-amax, amax)
        x = c + R * np.array([math.cos(t), math.sin(t)])
        # a is a metric angle: rotate within a g-orthonormal inward frame
        n_in = np.array([-math.cos(t), -math.sin(t)])
        n_in = n_in / float(spec.norm(x, n_in))
        tau = np.array([-n_in[1], n_in[0]])
        tau = tau - float(spec.inner(x, tau, n_in)) * n_in
        tau = tau / float(spec.norm(x, tau))
        pp = PhasePoint(x, math.cos(a) * n_in + math.sin(a) * tau)
        # a geodesic leaves the ball B(p, d(x)) within time 2 d(x) for good
        T = 2.0 * float(spec.distance(x)) + 1.0
        if _meets_box(spec, grid, pp, T, step):
            pts.append(pp)
            lengths.append(T)
    return FanGeometry(pts, step, np.asarray(lengths), seed, R)


@dataclass
class ForwardOperator:
    matrix: sparse.csr_matrix
    grid: GridField
    chords: np.ndarray
    segments: list = field(default_factory=list)

    @property
    def shape(self):
        return self.matrix.shape

    def __call__(self, g: GridField) -> np.ndarray:
        return self.matrix @ g.values.ravel()


def _box_margin(grid, X):
    x0, x1, y0, y1 = grid.domain
    return np.minimum(np.minimum(X[..., 0] - x0, x1 - X[..., 0]),
                      np.minimum(X[..., 1] - y0, y1 - X[..., 1]))


def _row(spec, grid, pp, T, step):
    path = geodesic_trace(spec, pp, T, jacobi=False)
    m = max(2, int(math.ceil(T / step)))
    ts = np.linspace(0.0, T, m + 1)
    g = _box_margin(grid, path.position(ts))

    def margin(t):
        return float(_box_margin(grid, path.position(np.array([t])))[0])

    # exact entry and exit times of every pass through the box
    cross = []
    for k in np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]:
        if g[k] == 0.0:
            cross.append(ts[k])
        else:
            cross.append(optimize.brentq(margin, ts[k], ts[k + 1], xtol=1e-14, rtol=1e-15))
    if g[0] >= 0:
        cross.insert(0, 0.0)
    if g[-1] > 0:
        cross.append(T)
    segs = [(cross[i], cross[i + 1]) for i in range(0, len(cross) - 1, 2)]
    idx_all, w_all = [], []
    for a, b in segs:
        k = max(1, int(math.ceil((b - a) / step)))
        tt = np.linspace(a, b, k + 1)
        wt = np.full(k + 1, (b - a) / k)
        wt[0] *= 0.5
        wt[-1] *= 0.5
        P = path.position(tt)
        # clamp roundoff just outside the box back onto it
        x0, x1, y0, y1 = grid.domain
        P[:, 0] = np.clip(P[:, 0], x0, x1)
        P[:, 1] = np.clip(P[:, 1], y0, y1)
        idx, w, _ = grid.stencil(P)
        idx_all.append(idx.ravel())
        w_all.append((w * wt[:, None]).ravel())
    if idx_all:
        return np.concatenate(idx_all), np.concatenate(w_all), segs
    return np.zeros(0, int), np.zeros(0), segs


def build_forward(spec: MetricSpec, grid: GridField, fan: FanGeometry, n_min: int = 1,
                  threads: int = 1) -> ForwardOperator:
    """Sparse matrix whose rows integrate the bilinear field along the fan."""
    def job(i):
        return _row(spec, grid, fan.launch[i], float(fan.lengths[i]), fan.step)

    n_rows = len(fan.launch)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(job, range(n_rows)))
    else:
        rows = [job(i) for i in range(n_rows)]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([r[0].size for r in rows])
    idx = np.concatenate([r[0] for r in rows]) if n_rows else np.zeros(0, int)
    val = np.concatenate([r[1] for r in rows]) if n_rows else np.zeros(0)
    A = sparse.csr_matrix((val, idx, indptr), shape=(n_rows, grid.n * grid.n))
    A.sum_duplicates()
    chords = np.array([sum(b - a for a, b in r[2]) for r in rows])
    if n_min > 0:
        # every cell (lower-left node) must be touched by n_min rows
        hits = np.asarray((A != 0).sum(axis=0)).ravel().reshape(grid.n, grid.n)[:-1, :-1]
        if hits.min() < n_min:
            raise CoverageError(f"{int(np.sum(hits < n_min))} cells crossed by < {n_min} geodesics")
    return ForwardOperator(A, grid, chords, [r[2] for r in rows])


def apply_adjoint(opr: ForwardOperator, sinogram) -> GridField:
    return opr.grid.with_values(opr.matrix.T @ np.asarray(sinogram, dtype=float))


def dot_test(opr: ForwardOperator, seeds=(0, 1, 2)) -> float:
    """Largest ``|<Af, g> - <f, A^T g>| / (|Af| |g|)`` over random pairs."""
    worst = 0.0
    for s in seeds:
        rng = np.random.default_rng(s)
        f = rng.standard_normal(opr.shape[1])
        g = rng.standard_normal(opr.shape[0])
        Af = opr.matrix @ f
        lhs = float(Af @ g)
        rhs = float(f @ (opr.matrix.T @ g))
        worst = max(worst, abs(lhs - rhs) / max(np.linalg.norm(Af) * np.linalg.norm(g), 1e-300))
    return worst


def gradient_penalty(grid: GridField):
    """``L^T L`` for the forward-difference gradient on ``grid`` (the
    discrete H1 seminorm, natural boundary)."""
    n = grid.n
    D = sparse.diags([-1.0, 1.0], [0, 1], shape=(n - 1, n)) / grid.h
    eye = sparse.identity(n)
    L = sparse.vstack([sparse.kron(eye, D), sparse.kron(D, eye)]).tocsr()
    return (L.T @ L).tocsr()


def _penalty(opr: ForwardOperator, penalty: str):
    if penalty == "identity":
        return sparse.identity(opr.matrix.shape[1], format="csr")
    if penalty == "gradient":
        return gradient_penalty(opr.grid)
    raise ValueError("penalty must be 'identity' or 'gradient'")


def _norm_estimate(A, reg, P=None, iters=100, seed=0):
    """Power iteration for the largest eigenvalue of ``A^T A + reg P``."""
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    lam = 0.0
    for _ in range(iters):
        y = A.T @ (A @ x) + reg * (x if P is None else P @ x)
        lam_new = float(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
        if abs(lam_new - lam) <= 1e-10 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam * 1.01


def solve_least_squares(opr: ForwardOperator, data, method: str = "cg", iters: int = 200,
                        reg: float = 0.0, x0=None, penalty: str = "identity"):
    """Minimise ``|Af - d|^2 + reg |Lf|^2``.

    ``penalty="identity"`` takes ``L = I``; ``"gradient"`` takes the grid
    gradient, which for an underdetermined fan selects the smoothest
    consistent image instead of the minimum-norm one.  ``cg``: conjugate
    gradients on the normal equations; ``landweber``: gradient steps of
    length ``1 / |A^T A + reg L^T L|``.  Returns ``(GridField, history)``
    with ``history`` the data residual norms.
    """
    if reg < 0:
        raise ValueError("reg must be >= 0")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    A = opr.matrix
    P = _penalty(opr, penalty)
    d = np.asarray(data, dtype=float)
    x = np.zeros(A.shape[1]) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    r = d - A @ x
    hist = [float(np.linalg.norm(r))]
    if method == "cg":
        s = A.T @ r - reg * (P @ x)
        p = s.copy()
        gamma = float(s @ s)
        for _ in range(iters):
            if gamma == 0.0:
                break
            q = A @ p
            alpha = gamma / (float(q @ q) + reg * float(p @ (P @ p)))
            x += alpha * p
            r -= alpha * q
            s = A.T @ r - reg * (P @ x)
            gamma_new = float(s @ s)
            p = s + (gamma_new / gamma) * p
            gamma = gamma_new
            hist.append(float(np.linalg.norm(r)))
    elif method == "landweber":
        omega = 1.0 / _norm_estimate(A, reg, P)
        for _ in range(iters):
            x += omega * (A.T @ r - reg * (P @ x))
            r = d - A @ x
            hist.append(float(np.linalg.norm(r)))
            if hist[-1] > 1.1 * hist[-2]:
                raise DivergenceError("Landweber residual increased")
    else:
        raise ValueError("method must be 'cg' or 'landweber'")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("solver produced non-finite values")
    return opr.grid.with_values(x), hist


def discrepancy_reg(opr: ForwardOperator, data, noise_norm: float, tau: float = 1.05,
                    iters: int = 200, grid=None, penalty: str = "identity") -> float:
    """Largest ``reg`` on a log grid whose solution fits the data to
    ``tau * noise_norm``."""
    grid = np.logspace(1, -8, 28) if grid is None else grid
    for lam in grid:
        sol, hist = solve_least_squares(opr, data, "cg", iters, float(lam), penalty=penalty)
        if np.linalg.norm(opr.matrix @ sol.values.ravel() - data) <= tau * noise_norm:
            return float(lam)
    return float(grid[-1])


# -- phantoms ------------------------------------------------------------------

def _gauss_pair(X, c, L):
    w = 0.25 * L
    out = np.zeros(X.shape[:-1])
    for cc in ((-0.4 * L, 0.1 * L), (0.35 * L, -0.25 * L)):
        out += np.exp(-np.sum((X - c - np.array(cc)) ** 2, axis=-1) / w**2)
    return out


def _disk(X, c0, R, power):
    s = np.sum((X - c0) ** 2, axis=-1) / R**2
    return np.where(s < 1.0, np.clip(1.0 - s, 0.0, None) ** power, 0.0)


def _smooth_disks(X, c, L):
    return (_disk(X, c + np.array([-0.3 * L, -0.2 * L]), 0.45 * L, 3)
            + 0.6 * _disk(X, c + np.array([0.35 * L, 0.3 * L]), 0.35 * L, 3))


def _offset_bump(X, c, L):
    return _disk(X, c + np.array([0.3 * L, -0.2 * L]), 0.5 * L, 4)


PHANTOMS = {
    "gauss_pair": (_gauss_pair, lambda L: 2 * math.pi * (0.25 * L) ** 2),
    "smooth_disks": (_smooth_disks,
                     lambda L: math.pi * (0.45 * L) ** 2 / 4 + 0.6 * math.pi * (0.35 * L) ** 2 / 4),
    "offset_bump": (_offset_bump, lambda L: math.pi * (0.5 * L) ** 2 / 5),
}


def phantom(name: str, grid: GridField) -> GridField:
    """Deterministic smooth phantom sampled on the grid nodes (chart
    coordinates relative to the box centre)."""
    try:
        fn, _ = PHANTOMS[name]
    except KeyError:
        raise ValueError(f"unknown phantom {name!r}; known: {sorted(PHANTOMS)}") from None
    xs, ys = grid.axes
    X = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    return grid.with_values(fn(X, np.asarray(grid.center), grid.half_width))


def phantom_mass(name: str, grid: GridField) -> float:
    """Closed-form chart integral ``int phantom dx dy``."""
    return float(PHANTOMS[name][1](grid.half_width))


def recovery_experiment(spec: MetricSpec, phantom_name: str = "gauss_pair", fan_size: int = 2000,
                        noise: float = 0.0, seed: int = 0, n: int = 64, half_width: float = 2.0,
                        iters: int = 200, reg: float | None = 1e-4, threads: int = 1,
                        penalty: str = "gradient") -> dict:
    """Forward-project a phantom, optionally add Gaussian noise of relative
    size ``noise``, reconstruct by CG and report the relative L2 error.

    ``reg=None`` selects the regularisation by the discrepancy principle.
    The default gradient penalty at ``reg=1e-4`` picks the smoothest image
    consistent with the data; fans of a few thousand geodesics leave the
    64x64 grid underdetermined.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    grid = make_grid(n, half_width, spec.base)
    truth = phantom(phantom_name, grid)
    fan = fan_geometry(spec, grid, fan_size, seed=int(rng.integers(2**31)))
    opr = build_forward(spec, grid, fan, n_min=0, threads=threads)
    data = opr(truth)
    noise_norm = 0.0
    if noise > 0:
        e = rng.standard_normal(data.size)
        e *= noise * np.linalg.norm(data) / np.linalg.norm(e)
        noise_norm = float(np.linalg.norm(e))
        data = data + e
    if reg is None:
        lam = discrepancy_reg(opr, data, noise_norm, iters=iters, penalty=penalty)
    else:
        lam = float(reg)
    rec, hist = solve_least_squares(opr, data, "cg", iters, lam, penalty=penalty)
    err = float(np.linalg.norm(rec.values - truth.values) / np.linalg.norm(truth.values))
    return {"spec": spec.to_config(), "phantom": phantom_name, "fan_size": fan_size,
            "noise": noise, "seed": seed, "n": n, "half_width": half_width, "iters": iters,
            "reg": lam, "penalty": penalty, "rel_l2": err, "residual_history": hist,
            "min_coverage": int(np.asarray((opr.matrix != 0).sum(axis=0)).min()),
            "reconstruction": rec, "truth": truth, "timing_s": time.perf_counter() - t0}


def export_grid(g: GridField, prefix, spec: MetricSpec | None = None, seed: int | None = None) -> None:
    """Write ``prefix.bin`` (little-endian float64, row-major) and ``prefix.json``."""
    prefix = str(prefix)
    g.values.astype("<f8").tofile(prefix + ".bin")
    head = {"n": g.n, "domain": g.domain, "spec": None if spec is None else spec.to_config(),
            "seed": seed, "dtype": "<f8", "order": "C"}
    with open(prefix + ".json", "w") as fh:
        json.dump(head, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sinogram_to_csv(fan: FanGeometry, data, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y", "vx", "vy", "value"])
    for pp, val in zip(fan.launch, data):
        w.writerow([repr(float(pp.x[0])), repr(float(pp.x[1])), repr(float(pp.v[0])),
                    repr(float(pp.v[1])), repr(float(val))])
