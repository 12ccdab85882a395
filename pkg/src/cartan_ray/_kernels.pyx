# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geodesic + Jacobi integrator.

Dormand-Prince 5(4) with the free 4th-order dense output, applied to the
augmented state ``(x, y, w1, w2, u_h, u_h', u_p, u_p')``: Cartesian chart
position, velocity in a global orthonormal frame (well conditioned far
from the pole, where Cartesian velocity components lose the angular
part to roundoff), and the two fundamental Jacobi solutions.  The pure-Python twin lives in ``_pykernels.py`` and must stay
line-for-line equivalent.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sinh, cosh, tanh, asinh, exp, fabs, fmax, fmin, pow

cnp.import_array()

DEF NS = 8

cdef enum:
    EUCLID = 0
    HYPER = 1
    POLY = 2
    WELL = 3

cdef double POLE_R = 1e-6

# Dormand-Prince coefficients
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0
cdef double A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double D1 = -12715105075.0 / 11282082432.0
cdef double D3 = 87487479700.0 / 32700410799.0
cdef double D4 = -10690763975.0 / 1880347072.0
cdef double D5 = 701980252875.0 / 199316789632.0
cdef double D6 = -1453857185.0 / 822651844.0
cdef double D7 = 69997945.0 / 29380423.0


cdef inline double _asinh_defect(double r) nogil:
    # r - asinh(r), series below 0.1 to avoid cancellation
    cdef double term, total, r2, c
    cdef int n
    if r >= 0.1:
        return r - asinh(r)
    r2 = r * r
    c = 1.0 / 6.0
    term = r * r2
    total = 0.0
    for n in range(1, 13):
        if n % 2 == 1:
            total += c * term
        else:
            total -= c * term
        c = c * (2 * n + 1) * (2 * n + 1) / ((2 * n + 2) * (2 * n + 3))
        term *= r2
    return total


cdef inline double _sinh_defect(double w) nogil:
    # sinh(w) - w
    cdef double w2
    if fabs(w) >= 0.1:
        return sinh(w) - w
    w2 = w * w
    return w * w2 * (1.0 / 6.0 + w2 * (1.0 / 120.0 + w2 * (1.0 / 5040.0
        + w2 * (1.0 / 362880.0 + w2 / 39916800.0))))


cdef inline double _hyper_b(double z) nogil:
    # sinh(z) - z cosh(z)
    cdef double z2
    if fabs(z) >= 0.1:
        return sinh(z) - z * cosh(z)
    z2 = z * z
    return -z * z2 * (1.0 / 3.0 + z2 * (1.0 / 30.0 + z2 * (6.0 / 5040.0
        + z2 * (8.0 / 362880.0 + z2 * 10.0 / 39916800.0))))


cdef inline void _warped(int prof, double k, double r, double *f, double *fpp,
                         double *a_term, double *b_term) nogil:
    """f, f'', f f' - r and f - r f' for the warped profiles."""
    cdef double s, z, q, dd, ee
    if prof == EUCLID:
        f[0] = r
        fpp[0] = 0.0
        a_term[0] = 0.0
        b_term[0] = 0.0
    elif prof == HYPER:
        s = sqrt(k)
        z = s * r
        f[0] = sinh(z) / s
        fpp[0] = s * sinh(z)
        a_term[0] = _sinh_defect(2.0 * z) / (2.0 * s)
        b_term[0] = _hyper_b(z) / s
    else:
        q = sqrt(1.0 + r * r)
        dd = _asinh_defect(r)
        ee = r * r / (q * (1.0 + q))
        f[0] = r + k * dd
        fpp[0] = k * r / (q * q * q)
        a_term[0] = k * (r * ee + dd) + k * k * dd * ee
        b_term[0] = k * (dd - r * ee)


cdef inline double _pole_c3(int prof, double k) nogil:
    if prof == EUCLID:
        return 0.0
    return k / 6.0


cdef inline double _curvature(int prof, const double *par, double x, double y) nogil:
    cdef double r, f, fpp, at, bt, dx, dy
    if prof == WELL:
        dx = x - par[1]
        dy = y - par[2]
        return -4.0 * par[0] * exp(-2.0 * par[0] * (dx * dx + dy * dy))
    if prof == EUCLID:
        return 0.0
    if prof == HYPER:
        return -par[0]
    r = sqrt(x * x + y * y)
    if r < POLE_R:
        return -par[0]
    _warped(prof, par[0], r, &f, &fpp, &at, &bt)
    return -fpp / f


cdef inline void _frame_terms(int prof, double k, double r, double *Q2, double *G) nogil:
    """Q2 = (r/f - 1)/r^2 and G = (1 - f')/(f r), both regular at the pole."""
    cdef double s, z, q, dd
    if prof == EUCLID:
        Q2[0] = 0.0
        G[0] = 0.0
    elif prof == HYPER:
        s = sqrt(k)
        z = s * r
        if z < 1e-4:
            Q2[0] = -k * (1.0 / 6.0 - 7.0 * z * z / 360.0)
            G[0] = -k * (0.5 - z * z / 24.0)
        else:
            if z > 30.0:
                Q2[0] = (-1.0 + 2.0 * z * exp(-z)) / (r * r)
            else:
                Q2[0] = -_sinh_defect(z) / (sinh(z) * r * r)
            G[0] = -k * tanh(0.5 * z) / z
    else:
        q = sqrt(1.0 + r * r)
        if r < 1e-4:
            Q2[0] = -k * (1.0 / 6.0 - r * r * (3.0 / 40.0 + k / 36.0))
            G[0] = -k / (q * (1.0 + q) * (1.0 + k * r * r / 6.0))
        else:
            dd = _asinh_defect(r)
            Q2[0] = -k * dd / ((r + k * dd) * r * r)
            G[0] = -k / (q * (1.0 + q) * (1.0 + k * dd / r))


cdef inline void _rhs(int prof, const double *par, const double *s, double *ds) nogil:
    # velocity as components (w1, w2) in the smooth orthonormal frame
    # E1 = (1 + Q2 y^2, -Q2 x y), E2 = (-Q2 x y, 1 + Q2 x^2) (warped) or
    # e^{-phi} (d/dx, d/dy) (conformal); the frame angle turns at rate m G
    cdef double x = s[0], y = s[1], w1 = s[2], w2 = s[3]
    cdef double r, Q2, G, m, e, gx, gy, bp, kk
    if prof == WELL:
        gx = 2.0 * par[0] * (x - par[1])
        gy = 2.0 * par[0] * (y - par[2])
        e = exp(-par[0] * ((x - par[1]) * (x - par[1]) + (y - par[2]) * (y - par[2])))
        ds[0] = e * w1
        ds[1] = e * w2
        bp = e * (w1 * gy - w2 * gx)
    else:
        r = sqrt(x * x + y * y)
        _frame_terms(prof, par[0], r, &Q2, &G)
        m = w2 * x - w1 * y
        ds[0] = w1 - Q2 * y * m
        ds[1] = w2 + Q2 * x * m
        bp = m * G
    ds[2] = -bp * w2
    ds[3] = bp * w1
    kk = _curvature(prof, par, x, y)
    ds[4] = s[5]
    ds[5] = -kk * s[4]
    ds[6] = s[7]
    ds[7] = -kk * s[6]


cdef inline void _rhs_cart(int prof, const double *par, const double *s, double *ds) nogil:
    cdef double x = s[0], y = s[1], vx = s[2], vy = s[3]
    cdef double r, r4, f, fpp, at, bt, xv, lm, c3, w, kk, gx, gy, gv, v2
    ds[0] = vx
    ds[1] = vy
    if prof == WELL:
        gx = 2.0 * par[0] * (x - par[1])
        gy = 2.0 * par[0] * (y - par[2])
        gv = gx * vx + gy * vy
        v2 = vx * vx + vy * vy
        ds[2] = -2.0 * gv * vx + v2 * gx
        ds[3] = -2.0 * gv * vy + v2 * gy
    else:
        r = sqrt(x * x + y * y)
        xv = x * vx + y * vy
        lm = x * vy - y * vx
        if r == 0.0:
            ds[2] = 0.0
            ds[3] = 0.0
        elif r < POLE_R:
            c3 = _pole_c3(prof, par[0])
            w = lm / r
            ds[2] = 4.0 * c3 * (w * w * x + (xv / r) * w * y)
            ds[3] = 4.0 * c3 * (w * w * y - (xv / r) * w * x)
        else:
            _warped(prof, par[0], r, &f, &fpp, &at, &bt)
            r4 = r * r * r * r
            c3 = lm * lm * at / (r4 * r)
            w = 2.0 * xv * lm * (bt / f) / r4
            ds[2] = c3 * x - w * y
            ds[3] = c3 * y + w * x
    kk = _curvature(prof, par, x, y)
    ds[4] = s[5]
    ds[5] = -kk * s[4]
    ds[6] = s[7]
    ds[7] = -kk * s[6]


def curvature(int prof, double[::1] params, double x, double y):
    """Gaussian curvature at a Cartesian chart point (scalar)."""
    return _curvature(prof, &params[0], x, y)


def rhs(int prof, double[::1] params, double[::1] state):
    """Right-hand side of the augmented system in frame components."""
    out = np.empty(NS)
    cdef double[::1] o = out
    _rhs(prof, &params[0], &state[0], &o[0])
    return out


def rhs_cart(int prof, double[::1] params, double[::1] state):
    """Same system with the velocity in Cartesian chart components."""
    out = np.empty(NS)
    cdef double[::1] o = out
    _rhs_cart(prof, &params[0], &state[0], &o[0])
    return out


def frame_terms(int prof, double k, double r):
    """``(Q2, G)`` of the warped frame (testing hook)."""
    cdef double Q2, G
    _frame_terms(prof, k, r, &Q2, &G)
    return Q2, G


def trace(int prof, double[::1] params, double[::1] y0, double t_end,
          double rtol=1e-10, double atol=1e-12, double h_max=0.0,
          int max_steps=2000000):
    """Integrate the augmented geodesic/Jacobi system on ``[0, t_end]``.

    Returns ``(ts, ys, rc)``: step times, states at those times and the
    per-step dense-output coefficients (shape ``(n_steps, 5, 8)``).
    Raises ``FloatingPointError`` on step-size underflow.
    """
    cdef int cap = 256
    ts_arr = np.empty(cap)
    ys_arr = np.empty((cap, NS))
    rc_arr = np.empty((cap, 5, NS))
    cdef double[::1] ts = ts_arr
    cdef double[:, ::1] ys = ys_arr
    cdef double[:, :, ::1] rc = rc_arr
    cdef const double *par = &params[0]
    cdef double y[NS]
    cdef double yn[NS]
    cdef double tmp[NS]
    cdef double k1[NS]
    cdef double k2[NS]
    cdef double k3[NS]
    cdef double k4[NS]
    cdef double k5[NS]
    cdef double k6[NS]
    cdef double k7[NS]
    cdef double t = 0.0, h, err, sk, e, fac, nrm, scale
    cdef int i, n = 0, nsteps = 0, reject_run = 0
    cdef bint last = False

    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    if h_max <= 0.0:
        h_max = t_end
    for i in range(NS):
        y[i] = y0[i]
        ts[0] = 0.0
        ys[0, i] = y[i]
    h = fmin(1e-2, fmin(h_max, t_end))
    _rhs(prof, par, y, k1)

    while True:
        if t + h >= t_end:
            h = t_end - t
            last = True
        with nogil:
            for i in range(NS):
                tmp[i] = y[i] + h * A21 * k1[i]
            _rhs(prof, par, tmp, k2)
            for i in range(NS):
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            _rhs(prof, par, tmp, k3)
            for i in range(NS):
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            _rhs(prof, par, tmp, k4)
            for i in range(NS):
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i]
                                     + A54 * k4[i])
            _rhs(prof, par, tmp, k5)
            for i in range(NS):
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                     + A64 * k4[i] + A65 * k5[i])
            _rhs(prof, par, tmp, k6)
            for i in range(NS):
                yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i]
                                    + A75 * k5[i] + A76 * k6[i])
            _rhs(prof, par, yn, k7)
            err = 0.0
            for i in range(NS):
                sk = atol + rtol * fmax(fabs(y[i]), fabs(yn[i]))
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                         + E6 * k6[i] + E7 * k7[i]) / sk
                err += e * e
            err = sqrt(err / NS)
        nsteps += 1
        if nsteps > max_steps:
            raise RuntimeError("maximum number of steps exceeded")
        if err <= 1.0:
            if n + 1 >= cap:
                cap *= 2
                ts_arr = np.resize(ts_arr, cap)
                ys_arr = np.resize(ys_arr, (cap, NS))
                rc_arr = np.resize(rc_arr, (cap, 5, NS))
                ts = ts_arr
                ys = ys_arr
                rc = rc_arr
            for i in range(NS):
                rc[n, 0, i] = y[i]
                rc[n, 1, i] = yn[i] - y[i]
                rc[n, 2, i] = h * k1[i] - rc[n, 1, i]
                rc[n, 3, i] = rc[n, 1, i] - h * k7[i] - rc[n, 2, i]
                rc[n, 4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i]
                                   + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            t = t + h if not last else t_end
            # keep the velocity on the unit sphere bundle
            nrm = sqrt(yn[2] * yn[2] + yn[3] * yn[3])
            if fabs(nrm - 1.0) > 0.1 * rtol:
                scale = 1.0 / nrm
                yn[2] *= scale
                yn[3] *= scale
                _rhs(prof, par, yn, k7)
            for i in range(NS):
                y[i] = yn[i]
                k1[i] = k7[i]
                ys[n + 1, i] = y[i]
            n += 1
            ts[n] = t
            reject_run = 0
            if last:
                break
            fac = 0.9 * pow(fmax(err, 1e-10), -0.2)
            h = h * fmin(10.0, fmax(0.2, fac))
            h = fmin(h, h_max)
        else:
            last = False
            reject_run += 1
            fac = 0.9 * pow(err, -0.2)
            h = h * fmax(0.1, fac)
        if h < 1e-14 * fmax(1.0, fabs(t)):
            raise FloatingPointError("step size underflow at t=%g" % t)

    return ts_arr[:n + 1].copy(), ys_arr[:n + 1].copy(), rc_arr[:n].copy()


def short_flow(int prof, double[::1] params, double[:, ::1] states, double s,
               int nsub=4):
    """Fixed-step RK4 geodesic flow of many phase points for a short time.

    ``states`` has rows ``(x, y, w1, w2)``; returns a new array.
    """
    cdef Py_ssize_t m = states.shape[0], j
    cdef int i, q
    out_arr = np.empty((m, 4))
    cdef double[:, ::1] out = out_arr
    cdef const double *par = &params[0]
    cdef double h = s / nsub
    cdef double y[NS]
    cdef double tmp[NS]
    cdef double k1[NS]
    cdef double k2[NS]
    cdef double k3[NS]
    cdef double k4[NS]
    for i in range(NS):
        tmp[i] = 0.0
    with nogil:
        for j in range(m):
            for i in range(4):
                y[i] = states[j, i]
            for i in range(4, NS):
                y[i] = 0.0
            for q in range(nsub):
                _rhs(prof, par, y, k1)
                for i in range(4):
                    tmp[i] = y[i] + 0.5 * h * k1[i]
                _rhs(prof, par, tmp, k2)
                for i in range(4):
                    tmp[i] = y[i] + 0.5 * h * k2[i]
                _rhs(prof, par, tmp, k3)
                for i in range(4):
                    tmp[i] = y[i] + h * k3[i]
                _rhs(prof, par, tmp, k4)
                for i in range(4):
                    y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(4):
                out[j, i] = y[i]
    return out_arr
