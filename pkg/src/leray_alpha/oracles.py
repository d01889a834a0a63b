"""Independent reference computations for small Galerkin systems.

Nothing here reuses the triad tables or the time stepper of the main code: the
advection tensor is assembled by grid quadrature of the analytic modes and the
ODE is integrated with classical RK4 at a tiny step.
"""

from __future__ import annotations

import numpy as np

__all__ = ["galerkin_tensor", "mode_fields", "rk4_galerkin", "scalar_penalized_control"]


def _direction(k):
    k1, k2 = int(k[0]), int(k[1])
    s = 1.0 if (k1 > 0 or (k1 == 0 and k2 > 0)) else -1.0
    return s * np.array([-k2, k1], dtype=float) / np.hypot(k1, k2)


def mode_fields(modes, n):
    """Analytic complex mode fields e^{i k.x} e_k and their gradients on an n x n grid.

    Returns (phi, dphi) with shapes (m, 2, n, n) and (m, 2, 2, n, n), the gradient
    indexed as d_j phi_i at [:, i, j].
    """
    x = 2 * np.pi * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    m = len(modes)
    phi = np.empty((m, 2, n, n), dtype=complex)
    dphi = np.empty((m, 2, 2, n, n), dtype=complex)
    for a, k in enumerate(modes):
        wave = np.exp(1j * (k[0] * X + k[1] * Y))
        e = _direction(k)
        for i in range(2):
            phi[a, i] = e[i] * wave
            for j in range(2):
                dphi[a, i, j] = 1j * k[j] * e[i] * wave
    return phi, dphi


def galerkin_tensor(modes, quad_size=None):
    """B[p, l, q] = mean_x conj(phi_p) . ((phi_l . grad) phi_q).

    The grid is fine enough that the quadrature is exact for the cubic products.
    """
    modes = np.asarray(modes, dtype=int)
    kmax = int(np.max(np.abs(modes)))
    n = quad_size or 4 * kmax + 4
    phi, dphi = mode_fields(modes, n)
    # (l . grad) q, summed over j
    adv = np.einsum("ljxy,qijxy->lqixy", phi, dphi)
    return np.einsum("pixy,lqixy->plq", np.conj(phi), adv) / (n * n)


def rk4_galerkin(modes, lam, y0, T, dt, alpha=0.0, drift=None, forcing=None):
    """Integrate y' = -lam y - B(h, y) + f with RK4.

    ``drift`` None means the Leray-alpha closure h = y / (1 + alpha^2 lam);
    otherwise a constant drift coefficient vector.  ``forcing`` is a constant
    coefficient vector or None.  Returns (times, states) sampled every step.
    """
    B = galerkin_tensor(modes)
    lam = np.asarray(lam, dtype=float)
    filt = 1.0 / (1.0 + alpha * alpha * lam)
    f = 0.0 if forcing is None else np.asarray(forcing, dtype=complex)

    def rhs(y):
        h = y * filt if drift is None else drift
        return -lam * y - np.einsum("plq,l,q->p", B, h, y) + f

    n = int(round(T / dt))
    y = np.asarray(y0, dtype=complex).copy()
    out = np.empty((n + 1, y.size), dtype=complex)
    out[0] = y
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return np.linspace(0.0, T, n + 1), out


def scalar_penalized_control(y0, lam, T, epsilon):
    """Continuous-time penalized control of y' = -lam y + v on one mode.

    Minimizing 1/2 int |v|^2 + 1/(2 eps) |y(T)|^2 gives v(t) = c e^{-lam (T - t)}
    with c = -e^{-lam T} y0 / (eps + g), g = (1 - e^{-2 lam T}) / (2 lam).
    Returns (c, y(T)).
    """
    g = (1.0 - np.exp(-2 * lam * T)) / (2 * lam)
    free = np.exp(-lam * T) * y0
    c = -free / (epsilon + g)
    return c, free + c * g
