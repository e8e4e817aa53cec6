"""Pure NumPy implementations of the hot loops.

These are the fallback for ``_ckernels`` and the reference the compiled
versions are tested against. Signatures and outputs must stay identical.
"""
import numpy as np

_THETA_CHUNK = 2048


def integrate_affine(c, kappa, drift_const, sig2, h, n, bound):
    """RK4 for the exponential-affine system on a uniform grid.

    Integrates, from A = (0, 0, 0)::

        A1' = c - 2 kappa A1 + sig2 A1^2
        A2' = -kappa A2 + drift_const A1 + sig2 A1 A2
        A3' = drift_const A2 + sig2/2 (A1 + A2^2)

    Returns ``(A, last)`` where ``A`` has shape (n + 1, 3) and ``last`` is
    the index of the last node before ``|A1|`` exceeded ``bound`` (``n``
    when no blow-up). Rows after ``last`` are NaN.
    """
    A = np.full((n + 1, 3), np.nan)
    a1 = a2 = a3 = 0.0
    A[0] = 0.0
    half = 0.5 * sig2

    def rhs(x1, x2):
        return (c - 2.0 * kappa * x1 + sig2 * x1 * x1,
                -kappa * x2 + drift_const * x1 + sig2 * x1 * x2,
                drift_const * x2 + half * (x1 + x2 * x2))

    for i in range(n):
        k11, k12, k13 = rhs(a1, a2)
        k21, k22, k23 = rhs(a1 + 0.5 * h * k11, a2 + 0.5 * h * k12)
        k31, k32, k33 = rhs(a1 + 0.5 * h * k21, a2 + 0.5 * h * k22)
        k41, k42, k43 = rhs(a1 + h * k31, a2 + h * k32)
        a1 = a1 + h / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        a2 = a2 + h / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
        a3 = a3 + h / 6.0 * (k13 + 2.0 * k23 + 2.0 * k33 + k43)
        if not (abs(a1) <= bound and np.isfinite(a2) and np.isfinite(a3)):
            return A, i
        A[i + 1, 0] = a1
        A[i + 1, 1] = a2
        A[i + 1, 2] = a3
    return A, n


def simulate_paths(xi, theta0, theta_bar, decay, ou_scale, sqrt_dt, dt, antithetic):
    """Exact OU transition for theta and log-Euler accumulation of Z.

    ``xi`` holds standard normals, one row per sampling unit. With
    ``antithetic`` each row produces two paths driven by ``+xi`` and ``-xi``.
    """
    units, steps = xi.shape
    if antithetic:
        shocks = np.empty((2 * units, steps))
        shocks[0::2] = xi
        shocks[1::2] = -xi
    else:
        shocks = xi
    n = shocks.shape[0]
    theta = np.empty((n, steps + 1))
    Z = np.empty((n, steps + 1))
    th = np.full(n, float(theta0))
    logz = np.zeros(n)
    theta[:, 0] = th
    Z[:, 0] = 1.0
    for k in range(steps):
        e = shocks[:, k]
        dw = sqrt_dt * e
        logz = logz - th * dw - 0.5 * th * th * dt
        th = theta_bar + (th - theta_bar) * decay - ou_scale * e
        theta[:, k + 1] = th
        Z[:, k + 1] = np.exp(logz)
    return theta, Z


def weighted_exp_moments(theta, a1, a2, b, w):
    """Weighted sums over quadrature nodes j of exp(a1_j th^2/2 + a2_j th + b_j).

    Returns ``(S0, S1, S2)`` with ``S0 = sum_j w_j e_j``,
    ``S1 = sum_j w_j e_j a1_j`` and ``S2 = sum_j w_j e_j a2_j``.
    """
    theta = np.asarray(theta, dtype=float)
    m = theta.shape[0]
    s0 = np.empty(m)
    s1 = np.empty(m)
    s2 = np.empty(m)
    for start in range(0, m, _THETA_CHUNK):
        th = theta[start:start + _THETA_CHUNK, None]
        we = w * np.exp(0.5 * a1 * th * th + a2 * th + b)
        s0[start:start + _THETA_CHUNK] = we.sum(axis=1)
        s1[start:start + _THETA_CHUNK] = we @ a1
        s2[start:start + _THETA_CHUNK] = we @ a2
    return s0, s1, s2
