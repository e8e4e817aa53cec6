# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``.

Same signatures and return values; see that module for the maths.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite

cnp.import_array()


cdef inline void _rhs(double c, double kappa, double m, double sig2,
                      double x1, double x2,
                      double* d1, double* d2, double* d3) noexcept nogil:
    d1[0] = c - 2.0 * kappa * x1 + sig2 * x1 * x1
    d2[0] = -kappa * x2 + m * x1 + sig2 * x1 * x2
    d3[0] = m * x2 + 0.5 * sig2 * (x1 + x2 * x2)


def integrate_affine(double c, double kappa, double drift_const, double sig2,
                     double h, Py_ssize_t n, double bound):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.full((n + 1, 3), np.nan)
    cdef double[:, ::1] Av = A
    cdef double a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef double k11, k12, k13, k21, k22, k23, k31, k32, k33, k41, k42, k43
    cdef Py_ssize_t i
    Av[0, 0] = 0.0
    Av[0, 1] = 0.0
    Av[0, 2] = 0.0
    with nogil:
        for i in range(n):
            _rhs(c, kappa, drift_const, sig2, a1, a2, &k11, &k12, &k13)
            _rhs(c, kappa, drift_const, sig2, a1 + 0.5 * h * k11, a2 + 0.5 * h * k12,
                 &k21, &k22, &k23)
            _rhs(c, kappa, drift_const, sig2, a1 + 0.5 * h * k21, a2 + 0.5 * h * k22,
                 &k31, &k32, &k33)
            _rhs(c, kappa, drift_const, sig2, a1 + h * k31, a2 + h * k32,
                 &k41, &k42, &k43)
            a1 = a1 + h / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
            a2 = a2 + h / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
            a3 = a3 + h / 6.0 * (k13 + 2.0 * k23 + 2.0 * k33 + k43)
            if not (fabs(a1) <= bound and isfinite(a2) and isfinite(a3)):
                with gil:
                    return A, i
            Av[i + 1, 0] = a1
            Av[i + 1, 1] = a2
            Av[i + 1, 2] = a3
    return A, n


def simulate_paths(const double[:, :] xi, double theta0, double theta_bar, double decay,
                   double ou_scale, double sqrt_dt, double dt, bint antithetic):
    cdef Py_ssize_t units = xi.shape[0], steps = xi.shape[1]
    cdef Py_ssize_t reps = 2 if antithetic else 1
    cdef Py_ssize_t n = units * reps
    cdef cnp.ndarray[cnp.float64_t, ndim=2] theta = np.empty((n, steps + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Z = np.empty((n, steps + 1))
    cdef double[:, ::1] tv = theta
    cdef double[:, ::1] zv = Z
    cdef Py_ssize_t u, s, k, p
    cdef double sign, th, logz, e, dw
    with nogil:
        for u in range(units):
            for s in range(reps):
                p = u * reps + s
                sign = -1.0 if s == 1 else 1.0
                th = theta0
                logz = 0.0
                tv[p, 0] = th
                zv[p, 0] = 1.0
                for k in range(steps):
                    e = sign * xi[u, k]
                    dw = sqrt_dt * e
                    logz = logz - th * dw - 0.5 * th * th * dt
                    th = theta_bar + (th - theta_bar) * decay - ou_scale * e
                    tv[p, k + 1] = th
                    zv[p, k + 1] = exp(logz)
    return theta, Z


def weighted_exp_moments(theta, const double[::1] a1, const double[::1] a2,
                         const double[::1] b, const double[::1] w):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t m = th.shape[0], k = a1.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s0 = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s1 = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s2 = np.empty(m)
    cdef double[::1] v0 = s0
    cdef double[::1] v1 = s1
    cdef double[::1] v2 = s2
    cdef Py_ssize_t i, j
    cdef double x, half_x2, we, t0, t1, t2
    with nogil:
        for i in range(m):
            x = th[i]
            half_x2 = 0.5 * x * x
            t0 = 0.0
            t1 = 0.0
            t2 = 0.0
            for j in range(k):
                we = w[j] * exp(a1[j] * half_x2 + a2[j] * x + b[j])
                t0 = t0 + we
                t1 = t1 + we * a1[j]
                t2 = t2 + we * a2[j]
            v0[i] = t0
            v1[i] = t1
            v2[i] = t2
    return s0, s1, s2
