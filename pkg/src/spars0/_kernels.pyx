# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels used inside the projected-gradient loops.

Every function here has a NumPy twin in ``_kernels_py`` with the same
signature and semantics; ``spars0.kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()

ctypedef cnp.float64_t f64


def project_box(const f64[::1] v, const f64[::1] lo, const f64[::1] hi):
    cdef Py_ssize_t i, n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef f64[::1] o = out
    cdef f64 t
    for i in range(n):
        t = v[i]
        if t < lo[i]:
            t = lo[i]
        elif t > hi[i]:
            t = hi[i]
        o[i] = t
    return out


def pg_residual(const f64[::1] x, const f64[::1] g,
                const f64[::1] lo, const f64[::1] hi):
    """Infinity norm of ``clip(x - g, lo, hi) - x``."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef f64 t, r = 0.0
    for i in range(n):
        t = x[i] - g[i]
        if t < lo[i]:
            t = lo[i]
        elif t > hi[i]:
            t = hi[i]
        t = fabs(t - x[i])
        if t > r:
            r = t
    return r


def spg_trial(const f64[::1] x, const f64[::1] g, double step,
              const f64[::1] lo, const f64[::1] hi):
    """Spectral step ``d = clip(x - step*g) - x`` and the slope ``g.d``."""
    cdef Py_ssize_t i, n = x.shape[0]
    d = np.empty(n, dtype=np.float64)
    cdef f64[::1] dv = d
    cdef f64 t, slope = 0.0
    for i in range(n):
        t = x[i] - step * g[i]
        if t < lo[i]:
            t = lo[i]
        elif t > hi[i]:
            t = hi[i]
        dv[i] = t - x[i]
        slope += g[i] * dv[i]
    return d, slope


def penalty_eval(int kind, const f64[::1] y, double rho, double eps):
    """Value and gradient of the separable sparsity penalty.

    kind: 0 ``rho*t*(t-2)``, 1 ``0.5*(t-sqrt(2 rho))**2``, 2 scaled Huber
    centred at ``sqrt(2 rho)`` with half-width ``eps``.
    """
    cdef Py_ssize_t i, n = y.shape[0]
    grad = np.empty(n, dtype=np.float64)
    cdef f64[::1] gr = grad
    cdef f64 val = 0.0, t, s, xi, dlt
    if kind == 0:
        for i in range(n):
            t = y[i]
            val += rho * t * (t - 2.0)
            gr[i] = rho * (2.0 * t - 2.0)
    elif kind == 1:
        s = sqrt(2.0 * rho)
        for i in range(n):
            t = y[i] - s
            val += 0.5 * t * t
            gr[i] = t
    else:
        s = sqrt(2.0 * rho)
        xi = rho / (eps * s - 0.5 * eps * eps)
        for i in range(n):
            dlt = y[i] - s
            if dlt > eps:
                val += xi * (eps * (dlt - eps) + 0.5 * eps * eps)
                gr[i] = xi * eps
            elif dlt < -eps:
                val += xi * (-eps * (dlt + eps) + 0.5 * eps * eps)
                gr[i] = -xi * eps
            else:
                val += xi * 0.5 * dlt * dlt
                gr[i] = xi * dlt
    return val, grad


def bound_multipliers(const f64[::1] x, const f64[::1] g,
                      const f64[::1] lo, const f64[::1] hi, double tau):
    cdef Py_ssize_t i, n = x.shape[0]
    nu_lo = np.zeros(n, dtype=np.float64)
    nu_hi = np.zeros(n, dtype=np.float64)
    cdef f64[::1] a = nu_lo
    cdef f64[::1] b = nu_hi
    for i in range(n):
        if x[i] <= lo[i] + tau and g[i] > 0.0:
            a[i] = g[i]
        elif x[i] >= hi[i] - tau and g[i] < 0.0:
            b[i] = -g[i]
    return nu_lo, nu_hi


def spg_accept(const f64[::1] x, const f64[::1] xn, const f64[::1] g, const f64[::1] gn,
               const f64[::1] lo, const f64[::1] hi):
    """Bookkeeping after an accepted step from ``x`` to ``xn``.

    Returns ``(s.y, s.s, pg, amax)`` with ``s = xn - x``, ``y = gn - g``,
    ``pg`` the projected-gradient residual at ``xn`` and ``amax = max|xn|``.
    """
    cdef Py_ssize_t i, n = x.shape[0]
    cdef f64 s, t, sy = 0.0, ss = 0.0, r = 0.0, amax = 0.0
    for i in range(n):
        s = xn[i] - x[i]
        sy += s * (gn[i] - g[i])
        ss += s * s
        t = xn[i] - gn[i]
        if t < lo[i]:
            t = lo[i]
        elif t > hi[i]:
            t = hi[i]
        t = fabs(t - xn[i])
        if t > r:
            r = t
        t = fabs(xn[i])
        if t > amax:
            amax = t
    return sy, ss, r, amax


def coupled_eval(int kind, const f64[::1] z, const f64[::1] gf, double alpha,
                 double rho, double eps):
    """Penalty plus coupling for ``z = (x, y)`` with every ``x`` coordinate penalized.

    Returns ``(p(y) + alpha*x.y, grad)`` where ``grad`` stacks ``gf + alpha*y``
    and ``p'(y) + alpha*x``.
    """
    cdef Py_ssize_t i, n = gf.shape[0]
    grad = np.empty(2 * n, dtype=np.float64)
    cdef f64[::1] gr = grad
    cdef f64 val = 0.0, t, s = sqrt(2.0 * rho), xi = 0.0, dlt, gp
    if kind == 2:
        xi = rho / (eps * s - 0.5 * eps * eps)
    for i in range(n):
        t = z[n + i]
        if kind == 0:
            val += rho * t * (t - 2.0)
            gp = rho * (2.0 * t - 2.0)
        elif kind == 1:
            dlt = t - s
            val += 0.5 * dlt * dlt
            gp = dlt
        else:
            dlt = t - s
            if dlt > eps:
                val += xi * (eps * (dlt - eps) + 0.5 * eps * eps)
                gp = xi * eps
            elif dlt < -eps:
                val += xi * (-eps * (dlt + eps) + 0.5 * eps * eps)
                gp = -xi * eps
            else:
                val += xi * 0.5 * dlt * dlt
                gp = xi * dlt
        val += alpha * z[i] * t
        gr[i] = gf[i] + alpha * t
        gr[n + i] = gp + alpha * z[i]
    return val, grad


def affine_al(const f64[:, ::1] A, const f64[::1] z, const f64[::1] b, Py_ssize_t m,
              double pen, const f64[::1] gf):
    """Shifted quadratic penalty of affine constraints and the full gradient.

    With ``c = A z[:k] - b`` and its first ``m`` entries clipped at 0, returns
    ``(0.5*pen*c.c, gf + pen*A'c)`` where ``A'c`` fills the first ``k`` slots.
    """
    cdef Py_ssize_t i, j, rows = A.shape[0], k = A.shape[1], n = gf.shape[0]
    grad = np.empty(n, dtype=np.float64)
    cdef f64[::1] gr = grad
    cdef f64 c, val = 0.0
    for j in range(n):
        gr[j] = gf[j]
    for i in range(rows):
        c = -b[i]
        for j in range(k):
            c += A[i, j] * z[j]
        if i < m and c < 0.0:
            c = 0.0
        if c != 0.0:
            val += c * c
            c *= pen
            for j in range(k):
                gr[j] += c * A[i, j]
    return 0.5 * pen * val, grad
