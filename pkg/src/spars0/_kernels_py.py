"""NumPy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def project_box(v, lo, hi):
    return np.minimum(np.maximum(v, lo), hi)


def pg_residual(x, g, lo, hi):
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.minimum(np.maximum(x - g, lo), hi) - x)))


def spg_trial(x, g, step, lo, hi):
    d = np.minimum(np.maximum(x - step * g, lo), hi) - x
    return d, float(g @ d)


def penalty_eval(kind, y, rho, eps):
    if kind == 0:
        return float(rho * np.sum(y * (y - 2.0))), rho * (2.0 * y - 2.0)
    s = np.sqrt(2.0 * rho)
    if kind == 1:
        t = y - s
        return float(0.5 * (t @ t)), t
    xi = rho / (eps * s - 0.5 * eps * eps)
    d = y - s
    right = d > eps
    left = d < -eps
    val = np.where(
        right,
        eps * (d - eps) + 0.5 * eps**2,
        np.where(left, -eps * (d + eps) + 0.5 * eps**2, 0.5 * d * d),
    )
    grad = np.where(right, eps, np.where(left, -eps, d))
    return float(xi * np.sum(val)), xi * grad


def bound_multipliers(x, g, lo, hi, tau):
    at_lo = (x <= lo + tau) & (g > 0.0)
    at_hi = ~at_lo & (x >= hi - tau) & (g < 0.0)
    return np.where(at_lo, g, 0.0), np.where(at_hi, -g, 0.0)


def spg_accept(x, xn, g, gn, lo, hi):
    s = xn - x
    return (float(s @ (gn - g)), float(s @ s), pg_residual(xn, gn, lo, hi),
            float(np.max(np.abs(xn), initial=0.0)))


def coupled_eval(kind, z, gf, alpha, rho, eps):
    n = gf.shape[0]
    x, y = z[:n], z[n:]
    pv, gp = penalty_eval(kind, y, rho, eps)
    return pv + alpha * float(x @ y), np.concatenate([gf + alpha * y, gp + alpha * x])


def affine_al(A, z, b, m, pen, gf):
    k = A.shape[1]
    c = A @ z[:k] - b
    c[:m] = np.maximum(c[:m], 0.0)
    grad = np.array(gf, dtype=float)
    grad[:k] += (pen * c) @ A
    return 0.5 * pen * float(c @ c), grad
