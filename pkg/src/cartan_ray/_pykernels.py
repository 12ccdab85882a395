"""Pure-Python twin of ``_kernels.pyx``.

Used when the compiled extension is unavailable.  Same algorithm, same
constants, same return layout; only slower.
"""

import math

import numpy as np

NS = 8
EUCLID, HYPER, POLY, WELL = 0, 1, 2, 3
POLE_R = 1e-6

A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0
A64, A65 = 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0
A75, A76 = -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0
E5, E6, E7 = -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0


def _asinh_defect(r):
    if r >= 0.1:
        return r - math.asinh(r)
    r2 = r * r
    c = 1.0 / 6.0
    term = r * r2
    total = 0.0
    for n in range(1, 13):
        total += c * term if n % 2 == 1 else -c * term
        c = c * (2 * n + 1) * (2 * n + 1) / ((2 * n + 2) * (2 * n + 3))
        term *= r2
    return total


def _sinh_defect(w):
    if abs(w) >= 0.1:
        return math.sinh(w) - w
    w2 = w * w
    return w * w2 * (1.0 / 6.0 + w2 * (1.0 / 120.0 + w2 * (1.0 / 5040.0
        + w2 * (1.0 / 362880.0 + w2 / 39916800.0))))


def _hyper_b(z):
    if abs(z) >= 0.1:
        return math.sinh(z) - z * math.cosh(z)
    z2 = z * z
    return -z * z2 * (1.0 / 3.0 + z2 * (1.0 / 30.0 + z2 * (6.0 / 5040.0
        + z2 * (8.0 / 362880.0 + z2 * 10.0 / 39916800.0))))


def _warped(prof, k, r):
    if prof == EUCLID:
        return r, 0.0, 0.0, 0.0
    if prof == HYPER:
        s = math.sqrt(k)
        z = s * r
        return (math.sinh(z) / s, s * math.sinh(z),
                _sinh_defect(2.0 * z) / (2.0 * s), _hyper_b(z) / s)
    q = math.sqrt(1.0 + r * r)
    dd = _asinh_defect(r)
    ee = r * r / (q * (1.0 + q))
    return (r + k * dd, k * r / (q * q * q),
            k * (r * ee + dd) + k * k * dd * ee, k * (dd - r * ee))


def _curvature(prof, par, x, y):
    if prof == WELL:
        dx = x - par[1]
        dy = y - par[2]
        return -4.0 * par[0] * math.exp(-2.0 * par[0] * (dx * dx + dy * dy))
    if prof == EUCLID:
        return 0.0
    if prof == HYPER:
        return -par[0]
    r = math.hypot(x, y)
    if r < POLE_R:
        return -par[0]
    f, fpp, _, _ = _warped(prof, par[0], r)
    return -fpp / f


def _frame_terms(prof, k, r):
    if prof == EUCLID:
        return 0.0, 0.0
    if prof == HYPER:
        s = math.sqrt(k)
        z = s * r
        if z < 1e-4:
            return -k * (1.0 / 6.0 - 7.0 * z * z / 360.0), -k * (0.5 - z * z / 24.0)
        if z > 30.0:
            q2 = (-1.0 + 2.0 * z * math.exp(-z)) / (r * r)
        else:
            q2 = -_sinh_defect(z) / (math.sinh(z) * r * r)
        return q2, -k * math.tanh(0.5 * z) / z
    q = math.sqrt(1.0 + r * r)
    if r < 1e-4:
        return (-k * (1.0 / 6.0 - r * r * (3.0 / 40.0 + k / 36.0)),
                -k / (q * (1.0 + q) * (1.0 + k * r * r / 6.0)))
    dd = _asinh_defect(r)
    return (-k * dd / ((r + k * dd) * r * r),
            -k / (q * (1.0 + q) * (1.0 + k * dd / r)))


def _rhs(prof, par, s):
    x, y, w1, w2 = s[0], s[1], s[2], s[3]
    if prof == WELL:
        gx = 2.0 * par[0] * (x - par[1])
        gy = 2.0 * par[0] * (y - par[2])
        e = math.exp(-par[0] * ((x - par[1]) ** 2 + (y - par[2]) ** 2))
        dx, dy = e * w1, e * w2
        bp = e * (w1 * gy - w2 * gx)
    else:
        q2, g = _frame_terms(prof, par[0], math.hypot(x, y))
        m = w2 * x - w1 * y
        dx = w1 - q2 * y * m
        dy = w2 + q2 * x * m
        bp = m * g
    kk = _curvature(prof, par, x, y)
    return [dx, dy, -bp * w2, bp * w1, s[5], -kk * s[4], s[7], -kk * s[6]]


def _rhs_cart(prof, par, s):
    x, y, vx, vy = s[0], s[1], s[2], s[3]
    if prof == WELL:
        gx = 2.0 * par[0] * (x - par[1])
        gy = 2.0 * par[0] * (y - par[2])
        gv = gx * vx + gy * vy
        v2 = vx * vx + vy * vy
        ax = -2.0 * gv * vx + v2 * gx
        ay = -2.0 * gv * vy + v2 * gy
    else:
        r = math.hypot(x, y)
        xv = x * vx + y * vy
        lm = x * vy - y * vx
        if r == 0.0:
            ax = ay = 0.0
        elif r < POLE_R:
            c3 = 0.0 if prof == EUCLID else par[0] / 6.0
            w = lm / r
            ax = 4.0 * c3 * (w * w * x + (xv / r) * w * y)
            ay = 4.0 * c3 * (w * w * y - (xv / r) * w * x)
        else:
            f, _, at, bt = _warped(prof, par[0], r)
            r4 = r ** 4
            c3 = lm * lm * at / (r4 * r)
            w = 2.0 * xv * lm * (bt / f) / r4
            ax = c3 * x - w * y
            ay = c3 * y + w * x
    kk = _curvature(prof, par, x, y)
    return [vx, vy, ax, ay, s[5], -kk * s[4], s[7], -kk * s[6]]


def curvature(prof, params, x, y):
    return _curvature(prof, params, x, y)


def rhs(prof, params, state):
    return np.array(_rhs(prof, list(params), list(state)))


def rhs_cart(prof, params, state):
    return np.array(_rhs_cart(prof, list(params), list(state)))


def frame_terms(prof, k, r):
    return _frame_terms(prof, k, r)


def _axpy(y, h, coefs, ks):
    out = list(y)
    for c, k in zip(coefs, ks):
        if c != 0.0:
            hc = h * c
            for i in range(NS):
                out[i] += hc * k[i]
    return out


def trace(prof, params, y0, t_end, rtol=1e-10, atol=1e-12, h_max=0.0,
          max_steps=2000000):
    """See ``_kernels.trace``."""
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    if h_max <= 0.0:
        h_max = t_end
    par = [float(p) for p in params]
    y = [float(v) for v in y0]
    ts, ys, rc = [0.0], [list(y)], []
    t = 0.0
    h = min(1e-2, h_max, t_end)
    k1 = _rhs(prof, par, y)
    nsteps = 0
    last = False
    while True:
        if t + h >= t_end:
            h = t_end - t
            last = True
        k2 = _rhs(prof, par, _axpy(y, h, (A21,), (k1,)))
        k3 = _rhs(prof, par, _axpy(y, h, (A31, A32), (k1, k2)))
        k4 = _rhs(prof, par, _axpy(y, h, (A41, A42, A43), (k1, k2, k3)))
        k5 = _rhs(prof, par, _axpy(y, h, (A51, A52, A53, A54), (k1, k2, k3, k4)))
        k6 = _rhs(prof, par, _axpy(y, h, (A61, A62, A63, A64, A65),
                                   (k1, k2, k3, k4, k5)))
        yn = _axpy(y, h, (A71, A73, A74, A75, A76), (k1, k3, k4, k5, k6))
        k7 = _rhs(prof, par, yn)
        err = 0.0
        for i in range(NS):
            sk = atol + rtol * max(abs(y[i]), abs(yn[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                     + E6 * k6[i] + E7 * k7[i]) / sk
            err += e * e
        err = math.sqrt(err / NS)
        nsteps += 1
        if nsteps > max_steps:
            raise RuntimeError("maximum number of steps exceeded")
        if err <= 1.0:
            row = np.empty((5, NS))
            for i in range(NS):
                r1 = yn[i] - y[i]
                r2 = h * k1[i] - r1
                row[0, i] = y[i]
                row[1, i] = r1
                row[2, i] = r2
                row[3, i] = r1 - h * k7[i] - r2
                row[4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i]
                                 + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            rc.append(row)
            t = t_end if last else t + h
            nrm = math.hypot(yn[2], yn[3])
            if abs(nrm - 1.0) > 0.1 * rtol:
                yn[2] /= nrm
                yn[3] /= nrm
                k7 = _rhs(prof, par, yn)
            y = yn
            k1 = k7
            ts.append(t)
            ys.append(list(y))
            if last:
                break
            fac = 0.9 * max(err, 1e-10) ** -0.2
            h = min(h * min(10.0, max(0.2, fac)), h_max)
        else:
            last = False
            h = h * max(0.1, 0.9 * err ** -0.2)
        if h < 1e-14 * max(1.0, abs(t)):
            raise FloatingPointError("step size underflow at t=%g" % t)
    return np.array(ts), np.array(ys), np.array(rc).reshape(-1, 5, NS)


def short_flow(prof, params, states, s, nsub=4):
    """See ``_kernels.short_flow``."""
    par = [float(p) for p in params]
    states = np.asarray(states, dtype=float)
    out = np.empty((states.shape[0], 4))
    h = s / nsub
    for j in range(states.shape[0]):
        y = list(states[j]) + [0.0] * 4
        for _ in range(nsub):
            k1 = _rhs(prof, par, y)
            k2 = _rhs(prof, par, [y[i] + 0.5 * h * k1[i] for i in range(4)] + [0.0] * 4)
            k3 = _rhs(prof, par, [y[i] + 0.5 * h * k2[i] for i in range(4)] + [0.0] * 4)
            k4 = _rhs(prof, par, [y[i] + h * k3[i] for i in range(4)] + [0.0] * 4)
            y = [y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                 for i in range(4)] + [0.0] * 4
        out[j] = y[:4]
    return out
