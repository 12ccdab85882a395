"""Vectorised adaptive Gauss-Legendre panels for integrals along paths."""

from __future__ import annotations

import numpy as np

_N = 8
_X, _W = np.polynomial.legendre.leggauss(_N)


def _gauss(fun, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    t = mid[:, None] + half[:, None] * _X[None, :]
    vals = np.asarray(fun(t.ravel()), dtype=float).reshape(t.shape)
    return half * (vals @ _W)


def integrate(fun, edges, tol: float = 1e-12, max_depth: int = 40, max_panels: int = 200_000):
    """Integrate ``fun`` over the panels delimited by ``edges``.

    Each panel is compared against its two halves; panels whose
    disagreement exceeds their share of ``tol`` are bisected, up to
    ``max_depth`` levels and ``max_panels`` live panels.  Returns
    ``(value, error_estimate)``.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0, 0.0
    share = np.full(a.size, tol / a.size)
    coarse = _gauss(fun, a, b)
    total = 0.0
    err_total = 0.0
    for depth in range(max_depth + 1):
        m = 0.5 * (a + b)
        left = _gauss(fun, a, m)
        right = _gauss(fun, m, b)
        fine = left + right
        err = np.abs(fine - coarse)
        done = (err <= share) | (depth == max_depth) | (b - a <= 1e-13 * np.maximum(1.0, np.abs(a)))
        if 2 * np.count_nonzero(~done) > max_panels:
            # noisy integrand: stop refining, keep the error estimate honest
            done[:] = True
        total += float(np.sum(fine[done]))
        err_total += float(np.sum(err[done]))
        todo = ~done
        if not np.any(todo):
            break
        a, m, b = a[todo], m[todo], b[todo]
        share = np.repeat(0.5 * share[todo], 2)
        coarse = np.column_stack([left[todo], right[todo]]).ravel()
        a, b = np.column_stack([a, m]).ravel(), np.column_stack([m, b]).ravel()
    return total, err_total


def path_edges(ts, a: float, b: float, base: float = 0.5, growth: float = 0.1) -> np.ndarray:
    """Panel edges covering ``[a, b]``: integrator step boundaries refined so no
    panel is longer than ``base + growth * t``."""
    ts = np.asarray(ts, dtype=float)
    inner = ts[(ts > a) & (ts < b)]
    knots = np.concatenate([[a], inner, [b]])
    out = [knots[:1]]
    for lo, hi in zip(knots[:-1], knots[1:]):
        # geometric refinement inside long steps keeps panel/t bounded
        pts = []
        t = lo
        while t < hi:
            t = min(hi, t + base + growth * min(abs(t), abs(hi)))
            pts.append(t)
        out.append(np.asarray(pts))
    return np.concatenate(out)
