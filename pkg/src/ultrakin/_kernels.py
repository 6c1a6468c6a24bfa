"""Compiled Dormand-Prince kernels for the scaled concurrent field.

Real state layout per trajectory is ``(X_A, P_A, X_A2, P_A2)`` with
``a = X_A + i P_A`` and ``b = X_A2 + i P_A2``.  The steppers call
:func:`concurrent_field` directly instead of taking the field as an
argument; first-class function arguments defeat numba's on-disk cache.
"""

import numba as nb
import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
BETA = 0.04
ALPHA = 0.17
HENON_SUBSTEPS = 4


@nb.njit(cache=True, nogil=True)
def concurrent_field(y, p, out):
    """``p = (c1, c2, drive)``."""
    c1 = p[0]
    c2 = p[1]
    drive = p[2]
    for k in range(0, y.size, 4):
        ar = y[k]
        ai = y[k + 1]
        br = y[k + 2]
        bi = y[k + 3]
        cr = ar * br + ai * bi
        ci = ar * bi - ai * br
        ur = ar + drive + 2.0 * c1 * cr
        ui = ai + 2.0 * c1 * ci
        vr = c2 * br + c1 * (ar * ar - ai * ai)
        vi = c2 * bi + 2.0 * c1 * ar * ai
        out[k] = ui
        out[k + 1] = -ur
        out[k + 2] = vi
        out[k + 3] = -vr


@nb.njit(cache=True, nogil=True)
def _attempt(p, y, K, tmp, yn, hh, rtol, atol):
    n = y.size
    for i in range(1, 7):
        for j in range(n):
            s = 0.0
            for l in range(i):
                s += _A[i, l] * K[l, j]
            tmp[j] = y[j] + hh * s
        concurrent_field(tmp, p, K[i])
    err = 0.0
    for j in range(n):
        s = 0.0
        e = 0.0
        for l in range(7):
            s += _B[l] * K[l, j]
            e += _E[l] * K[l, j]
        yn[j] = y[j] + hh * s
        sc = atol + rtol * max(abs(y[j]), abs(yn[j]))
        err = max(err, abs(hh * e / sc))
    return err


@nb.njit(cache=True, nogil=True)
def advance(p, y, t, t_end, h, rtol, atol, max_steps):
    """Integrate ``y`` in place from ``t`` to ``t_end``; returns ``(t, h, steps, ok)``."""
    n = y.size
    K = np.empty((7, n))
    tmp = np.empty(n)
    yn = np.empty(n)
    concurrent_field(y, p, K[0])
    steps = 0
    errold = 1e-4
    while t < t_end:
        if steps >= max_steps:
            return t, h, steps, False
        clipped = False
        hh = h
        if t + hh >= t_end:
            hh = t_end - t
            clipped = True
        if hh <= 1e-14 * max(1.0, abs(t)) and not clipped:
            return t, h, steps, False
        err = _attempt(p, y, K, tmp, yn, hh, rtol, atol)
        if not np.isfinite(err):
            h = hh * MIN_FACTOR
            continue
        if err <= 1.0:
            err = max(err, 1e-16)
            fac = SAFETY * err ** -ALPHA * errold ** BETA
            fac = min(MAX_FACTOR, max(MIN_FACTOR, fac))
            errold = max(err, 1e-4)
            t = t_end if clipped else t + hh
            y[:] = yn
            K[0, :] = K[6, :]
            h = max(h, hh * fac) if clipped else hh * fac
            steps += 1
        else:
            h = hh * max(MIN_FACTOR, SAFETY * err ** -ALPHA)
    return t, h, steps, True


@nb.njit(cache=True, nogil=True)
def _henon_rhs(p, z, out, axis, fy):
    # z = (y_0..y_3, tau); independent variable is y[axis]
    concurrent_field(z[:4], p, fy)
    v = fy[axis]
    for j in range(4):
        out[j] = fy[j] / v
    out[4] = 1.0 / v
    return v


@nb.njit(cache=True, nogil=True)
def _henon(p, y, t, axis, z_out):
    """Step ``y`` (at time ``t``) onto ``y[axis] == 0`` with ``y[axis]`` as clock."""
    z = np.empty(5)
    for j in range(4):
        z[j] = y[j]
    z[4] = t
    K = np.empty((7, 5))
    tmp = np.empty(5)
    fy = np.empty(4)
    dx = -y[axis] / HENON_SUBSTEPS
    vmin = abs(_henon_rhs(p, z, K[0], axis, fy))
    for _ in range(HENON_SUBSTEPS):
        _henon_rhs(p, z, K[0], axis, fy)
        for i in range(1, 7):
            for j in range(5):
                s = 0.0
                for l in range(i):
                    s += _A[i, l] * K[l, j]
                tmp[j] = z[j] + dx * s
            v = abs(_henon_rhs(p, tmp, K[i], axis, fy))
            vmin = min(vmin, v)
        for j in range(5):
            s = 0.0
            for l in range(7):
                s += _B[l] * K[l, j]
            z[j] += dx * s
    z[axis] = 0.0
    for j in range(5):
        z_out[j] = z[j]
    return vmin


@nb.njit(cache=True, nogil=True)
def section(p, y0, t_end, h, rtol, atol, axis, max_points, max_steps, degenerate_tol):
    """Positive crossings of ``y[axis] = 0`` along one trajectory.

    Returns ``(points, n_points, n_degenerate, ok)`` where each point row is
    ``(tau, y_0, y_1, y_2, y_3)``.
    """
    n = y0.size
    y = y0.copy()
    K = np.empty((7, n))
    tmp = np.empty(n)
    yn = np.empty(n)
    pts = np.empty((max_points, 5))
    zbuf = np.empty(5)
    concurrent_field(y, p, K[0])
    t = 0.0
    steps = 0
    npts = 0
    ndeg = 0
    errold = 1e-4
    while t < t_end and npts < max_points:
        if steps >= max_steps:
            return pts[:npts], npts, ndeg, False
        clipped = False
        hh = h
        if t + hh >= t_end:
            hh = t_end - t
            clipped = True
        err = _attempt(p, y, K, tmp, yn, hh, rtol, atol)
        if not np.isfinite(err):
            h = hh * MIN_FACTOR
            continue
        if err <= 1.0:
            if y[axis] < 0.0 and yn[axis] >= 0.0:
                vmin = _henon(p, y, t, axis, zbuf)
                if vmin < degenerate_tol:
                    ndeg += 1
                else:
                    pts[npts, 0] = zbuf[4]
                    for j in range(4):
                        pts[npts, 1 + j] = zbuf[j]
                    npts += 1
            err = max(err, 1e-16)
            fac = SAFETY * err ** -ALPHA * errold ** BETA
            fac = min(MAX_FACTOR, max(MIN_FACTOR, fac))
            errold = max(err, 1e-4)
            t = t_end if clipped else t + hh
            y[:] = yn
            K[0, :] = K[6, :]
            h = hh * fac
            steps += 1
        else:
            h = hh * max(MIN_FACTOR, SAFETY * err ** -ALPHA)
    return pts[:npts], npts, ndeg, True


@nb.njit(cache=True, nogil=True)
def stretches(p, y0, v0, n_intervals, interval, rtol, atol, max_steps):
    """Benettin log stretch factors of a tangent offset ``v0`` (norm ``d0``)."""
    m = y0.size
    Y = np.empty(2 * m)
    d0 = 0.0
    for j in range(m):
        Y[j] = y0[j]
        Y[m + j] = y0[j] + v0[j]
        d0 += v0[j] * v0[j]
    d0 = np.sqrt(d0)
    logs = np.empty(n_intervals)
    t = 0.0
    h = 1e-3
    for k in range(n_intervals):
        t, h, steps, ok = advance(p, Y, t, (k + 1) * interval, h, rtol, atol, max_steps)
        if not ok:
            return logs[:k], False
        d = 0.0
        for j in range(m):
            d += (Y[m + j] - Y[j]) ** 2
        d = np.sqrt(d)
        logs[k] = np.log(d / d0)
        for j in range(m):
            Y[m + j] = Y[j] + (Y[m + j] - Y[j]) * d0 / d
    return logs, True


@nb.njit(cache=True, nogil=True)
def advance_grid(p, y0, times, h, rtol, atol, max_steps):
    """Sample one integration at ``times`` (``times[0]`` is the start)."""
    out = np.empty((times.size, y0.size))
    y = y0.copy()
    out[0] = y
    t = times[0]
    total = 0
    for k in range(1, times.size):
        t, h, steps, ok = advance(p, y, t, times[k], h, rtol, atol, max_steps - total)
        total += steps
        if not ok:
            return out[:k], False
        out[k] = y
    return out, True
