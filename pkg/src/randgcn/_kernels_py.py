"""Pure-Python reference kernels.

Same signatures and return conventions as the compiled ``_kernels`` module.
Status codes: 0 converged, 1 iteration cap reached, 2 denominator blow-up,
3 non-finite iterate.
"""

import numpy as np

CONVERGED, MAX_ITER, BLOWUP, NONFINITE = 0, 1, 2, 3
_TINY = 1e-300
_BLOWUP = 1e-30


def _solve_one(z, nu, c, damping, tol, max_iter):
    d1 = 0j
    d2 = 0j
    residual = float("inf")
    for it in range(1, max_iter + 1):
        den = nu + z * (1.0 + d1) * (1.0 + d2)
        if abs(den) < _BLOWUP:
            return d1, d2, it, residual, BLOWUP
        f1 = nu * (1.0 + d1) / den / c
        f2 = nu * (1.0 + d2) / den
        n1 = damping * f1 + (1.0 - damping) * d1
        n2 = damping * f2 + (1.0 - damping) * d2
        r1 = abs(n1 - d1) / max(abs(n1), _TINY)
        r2 = abs(n2 - d2) / max(abs(n2), _TINY)
        residual = r1 if r1 > r2 else r2
        d1, d2 = n1, n2
        if residual != residual or abs(d1) == float("inf") or abs(d2) == float("inf"):
            return d1, d2, it, residual, NONFINITE
        if residual < tol:
            return d1, d2, it, residual, CONVERGED
    return d1, d2, max_iter, residual, MAX_ITER


def fixed_point_batch(z, nu, c, damping, tol, max_iter):
    z = np.ascontiguousarray(z, dtype=np.complex128)
    m = z.shape[0]
    delta1 = np.empty(m, dtype=np.complex128)
    delta2 = np.empty(m, dtype=np.complex128)
    iterations = np.empty(m, dtype=np.int64)
    residual = np.empty(m, dtype=np.float64)
    status = np.empty(m, dtype=np.int8)
    for k in range(m):
        d1, d2, it, res, st = _solve_one(complex(z[k]), float(nu), float(c),
                                         float(damping), float(tol), int(max_iter))
        delta1[k], delta2[k], iterations[k], residual[k], status[k] = d1, d2, it, res, st
    return delta1, delta2, iterations, residual, status


def gram_fixed_point(eigenvalues, z, scale, damping, tol, max_iter):
    lam = np.ascontiguousarray(eigenvalues, dtype=np.float64)
    z = complex(z)
    delta = 0j
    residual = float("inf")
    for it in range(1, max_iter + 1):
        den = lam / (1.0 + delta) + z
        if np.min(np.abs(den)) < _BLOWUP:
            return delta, complex("nan"), it, residual, BLOWUP
        f = scale * np.sum(lam / den)
        new = damping * f + (1.0 - damping) * delta
        if new == 0:
            # all eigenvalues zero: delta = 0 is exact
            residual = 0.0
        else:
            residual = abs(new - delta) / max(abs(new), _TINY)
        delta = new
        if residual != residual:
            return delta, complex("nan"), it, residual, NONFINITE
        if residual < tol:
            trace = complex(np.mean(1.0 / (lam / (1.0 + delta) + z)))
            return delta, trace, it, residual, CONVERGED
    trace = complex(np.mean(1.0 / (lam / (1.0 + delta) + z)))
    return delta, trace, max_iter, residual, MAX_ITER


def edge_dot(features, rows, cols):
    X = np.ascontiguousarray(features, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = np.empty(rows.shape[0], dtype=np.float64)
    chunk = 1 << 16
    for start in range(0, rows.shape[0], chunk):
        r = rows[start:start + chunk]
        c = cols[start:start + chunk]
        out[start:start + chunk] = np.einsum("ij,ij->i", X[r], X[c])
    return out
