# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels: batched fixed-point solves and edge-indexed inner products.

Mirrors ``_kernels_py`` exactly in signatures, status codes and stopping rule.
"""

import numpy as np

cdef extern from "complex.h" nogil:
    double cabs(double complex)

cdef extern from "math.h" nogil:
    bint isfinite(double)

cdef double TINY = 1e-300
cdef double BLOWUP_EPS = 1e-30


cdef inline double _max(double a, double b) nogil:
    return a if a > b else b


cdef int _solve_one(double complex z, double nu, double c, double damping,
                    double tol, long max_iter, double complex* d1_out,
                    double complex* d2_out, long* it_out, double* res_out) noexcept nogil:
    cdef double complex d1 = 0, d2 = 0, den, f1, f2, n1, n2
    cdef double r1, r2, residual = 1e308
    cdef long it
    for it in range(1, max_iter + 1):
        den = nu + z * (1.0 + d1) * (1.0 + d2)
        if cabs(den) < BLOWUP_EPS:
            d1_out[0] = d1; d2_out[0] = d2; it_out[0] = it; res_out[0] = residual
            return 2
        f1 = nu * (1.0 + d1) / den / c
        f2 = nu * (1.0 + d2) / den
        n1 = damping * f1 + (1.0 - damping) * d1
        n2 = damping * f2 + (1.0 - damping) * d2
        r1 = cabs(n1 - d1) / _max(cabs(n1), TINY)
        r2 = cabs(n2 - d2) / _max(cabs(n2), TINY)
        residual = r1 if r1 > r2 else r2
        d1 = n1
        d2 = n2
        if not isfinite(residual) or not isfinite(cabs(d1)) or not isfinite(cabs(d2)):
            d1_out[0] = d1; d2_out[0] = d2; it_out[0] = it; res_out[0] = residual
            return 3
        if residual < tol:
            d1_out[0] = d1; d2_out[0] = d2; it_out[0] = it; res_out[0] = residual
            return 0
    d1_out[0] = d1; d2_out[0] = d2; it_out[0] = max_iter; res_out[0] = residual
    return 1


def fixed_point_batch(z, double nu, double c, double damping, double tol, long max_iter):
    cdef const double complex[::1] zv = np.ascontiguousarray(z, dtype=np.complex128)
    cdef Py_ssize_t m = zv.shape[0], k
    delta1 = np.empty(m, dtype=np.complex128)
    delta2 = np.empty(m, dtype=np.complex128)
    iterations = np.empty(m, dtype=np.int64)
    residual = np.empty(m, dtype=np.float64)
    status = np.empty(m, dtype=np.int8)
    cdef double complex[::1] d1v = delta1, d2v = delta2
    cdef long long[::1] itv = iterations
    cdef double[::1] resv = residual
    cdef signed char[::1] stv = status
    cdef long it_tmp
    with nogil:
        for k in range(m):
            stv[k] = <signed char>_solve_one(zv[k], nu, c, damping, tol, max_iter,
                                             &d1v[k], &d2v[k], &it_tmp, &resv[k])
            itv[k] = it_tmp
    return delta1, delta2, iterations, residual, status


def gram_fixed_point(eigenvalues, double complex z, double scale, double damping,
                     double tol, long max_iter):
    cdef const double[::1] lam = np.ascontiguousarray(eigenvalues, dtype=np.float64)
    cdef Py_ssize_t n = lam.shape[0], i
    cdef double complex delta = 0, f, new, den, trace
    cdef double residual = 1e308
    cdef long it = 0
    cdef int status = 1
    with nogil:
        for it in range(1, max_iter + 1):
            f = 0
            for i in range(n):
                den = lam[i] / (1.0 + delta) + z
                if cabs(den) < BLOWUP_EPS:
                    status = 2
                    break
                f = f + lam[i] / den
            if status == 2:
                break
            f = scale * f
            new = damping * f + (1.0 - damping) * delta
            if new == 0:
                residual = 0.0
            else:
                residual = cabs(new - delta) / _max(cabs(new), TINY)
            delta = new
            if not isfinite(residual):
                status = 3
                break
            if residual < tol:
                status = 0
                break
        if status == 1:
            it = max_iter
        trace = 0
        if status < 2:
            for i in range(n):
                trace = trace + 1.0 / (lam[i] / (1.0 + delta) + z)
            trace = trace / n
    if status >= 2:
        return delta, complex("nan"), it, residual, status
    return delta, trace, it, residual, status


def edge_dot(features, rows, cols):
    cdef const double[:, ::1] X = np.ascontiguousarray(features, dtype=np.float64)
    cdef const long long[::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const long long[::1] cc = np.ascontiguousarray(cols, dtype=np.int64)
    cdef Py_ssize_t m = r.shape[0], p = X.shape[1], e, k
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double acc
    cdef const double* a
    cdef const double* b
    with nogil:
        for e in range(m):
            a = &X[r[e], 0]
            b = &X[cc[e], 0]
            acc = 0.0
            for k in range(p):
                acc = acc + a[k] * b[k]
            ov[e] = acc
    return out
