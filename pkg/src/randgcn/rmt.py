"""Deterministic equivalents for the propagated-feature Gram matrix.

Two conventions meet here. The fixed-point system and the rank-two equivalent
are written for the resolvent ``Q(z) = (M + z I)^{-1}``, which is what
:func:`solve_fixed_point` and friends take. Spectral quantities (Stieltjes
transform, density) take a spectral coordinate ``s`` and evaluate the resolvent
at ``z = -s``, so that ``m(s) = (1/n) Tr (M - s I)^{-1}`` has the usual
``Im m > 0`` for ``Im s > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from randgcn._backend import kernels

DAMPING = 0.5
TOL = 1e-12
MAX_ITER = 10_000


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration hit its cap or produced a non-finite iterate."""

    def __init__(self, message, residual=float("nan"), z=None):
        super().__init__(message)
        self.residual = residual
        self.z = z


class FixedPointBlowupError(ZeroDivisionError):
    """A fixed-point denominator fell below 1e-30 in magnitude."""

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


@dataclass(frozen=True)
class RmtParams:
    gamma_f: float
    gamma_g: float
    nu: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.nu <= 0.25:
            raise ValueError(f"nu must lie in (0, 1/4], got {self.nu!r}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c!r}")
        if not self.gamma_f >= 0:
            raise ValueError(f"gamma_f must be nonnegative, got {self.gamma_f!r}")

    @classmethod
    def from_model(cls, params) -> "RmtParams":
        return cls(params.gamma_f, params.gamma_g, params.nu, params.c)

    @classmethod
    def from_raw(cls, q: float, eta: float, mu_norm: float, c: float) -> "RmtParams":
        return cls(mu_norm ** 2, q * q * eta, q * q * (1.0 - q * q), c)


@dataclass(frozen=True)
class FixedPointSolution:
    z: complex
    delta1: complex
    delta2: complex
    zeta: complex
    iterations: int
    residual: float

    @property
    def trace(self) -> complex:
        """Leading (1/n)-trace of the deterministic equivalent."""
        return self.zeta * (1.0 + self.delta1)


def _zeta(z, d1, d2, nu):
    return (1.0 + d2) / (nu + z * (1.0 + d1) * (1.0 + d2))


def _raise_for_status(status, z, residual):
    if status == 2:
        raise FixedPointBlowupError(f"fixed-point denominator vanished at z={z!r}", z)
    if status == 1:
        raise NonConvergenceError(
            f"fixed point did not converge at z={z!r} (residual {residual:.3g})", residual, z)
    if status == 3:
        raise NonConvergenceError(f"fixed point diverged at z={z!r}", residual, z)


def solve_fixed_point(z: complex, params: RmtParams, *, damping=DAMPING, tol=TOL,
                      max_iter=MAX_ITER) -> FixedPointSolution:
    """Solve for (delta1, delta2) at resolvent argument ``z`` by damped Picard
    iteration from (0, 0)."""
    sol = solve_fixed_point_batch(np.array([z]), params, damping=damping, tol=tol,
                                  max_iter=max_iter)
    return sol[0]


def solve_fixed_point_batch(z, params: RmtParams, *, damping=DAMPING, tol=TOL,
                            max_iter=MAX_ITER) -> list:
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    d1, d2, its, res, status = kernels.fixed_point_batch(
        z, float(params.nu), float(params.c), float(damping), float(tol), int(max_iter))
    bad = np.flatnonzero(status != 0)
    if bad.size:
        k = bad[0]
        _raise_for_status(int(status[k]), complex(z[k]), float(res[k]))
    zeta = _zeta(z, d1, d2, params.nu)
    return [FixedPointSolution(complex(z[k]), complex(d1[k]), complex(d2[k]), complex(zeta[k]),
                               int(its[k]), float(res[k])) for k in range(z.size)]


def _trace_batch(z, params, **kw):
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    d1, d2, its, res, status = kernels.fixed_point_batch(
        z, float(params.nu), float(params.c), kw.get("damping", DAMPING),
        kw.get("tol", TOL), kw.get("max_iter", MAX_ITER))
    bad = np.flatnonzero(status != 0)
    if bad.size:
        k = bad[0]
        _raise_for_status(int(status[k]), complex(z[k]), float(res[k]))
    return _zeta(z, d1, d2, params.nu) * (1.0 + d1)


def stieltjes(s, params: RmtParams):
    """Limiting ``m(s) = lim (1/n) Tr (Xt Xt^T - s I)^{-1}``; scalar or array ``s``."""
    arr = np.asarray(s, dtype=np.complex128)
    out = _trace_batch(-arr.ravel(), params)
    return complex(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def default_epsilon(x_grid) -> float:
    x = np.asarray(x_grid, dtype=np.float64)
    span = float(x.max() - x.min())
    return 1e-3 * span if span > 0 else 1e-3


def theoretical_density(x_grid, epsilon: Optional[float] = None,
                        params: Optional[RmtParams] = None) -> np.ndarray:
    """``f(x) = Im m(x + i eps) / pi`` on ``x_grid``. ``eps`` defaults to 1e-3 of
    the grid span."""
    if params is None:
        raise ValueError("params are required")
    x = np.asarray(x_grid, dtype=np.float64)
    if x.ndim != 1 or np.any(np.diff(x) < 0):
        raise ValueError("x_grid must be a sorted 1-d array")
    eps = default_epsilon(x) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    return stieltjes(x + 1j * eps, params).imag / math.pi


# equivalents -----------------------------------------------------------------------

@dataclass(frozen=True)
class CorollaryCoefficients:
    bulk: complex
    spike: complex


def corollary_equivalent(z: complex, params: RmtParams) -> CorollaryCoefficients:
    """Coefficients of ``Q_bar = bulk * I - spike * phi phi^T`` when the graph carries
    no class signal (gamma_g = 0)."""
    if params.gamma_g != 0:
        raise ValueError("corollary equivalent needs gamma_g = 0; use RankTwoEquivalent")
    sol = solve_fixed_point(z, params)
    a = sol.trace
    gf = params.gamma_f
    spike = a * sol.zeta * gf / (params.c + sol.zeta * params.nu * gf)
    return CorollaryCoefficients(a, spike)


def coupling_matrix(params: RmtParams) -> np.ndarray:
    gg, r = params.gamma_g, params.gamma_f / params.c
    return np.array([[gg * gg * (r + 1.0), gg * (r + 1.0)],
                     [gg * (r + 1.0), r]])


@dataclass(frozen=True)
class RankTwoEquivalent:
    """``Q_bar(z) = zeta (1 + delta1) (I - zeta U [B^{-1} + zeta T]^{-1} U^T)``."""
    U: np.ndarray
    B: np.ndarray
    T: np.ndarray
    phi_source: str
    params: RmtParams

    @classmethod
    def build(cls, labels, phi, params: RmtParams, phi_source="empirical"):
        y = np.asarray(labels, dtype=np.float64)
        ybar = y / math.sqrt(y.size)
        U = np.column_stack([ybar, np.asarray(phi, dtype=np.float64)])
        return cls(U, coupling_matrix(params), np.diag([1.0, params.nu]), phi_source, params)

    @classmethod
    def from_operator(cls, adjacency_operator, labels, params: RmtParams):
        """Estimate ``phi`` as ``A_tilde ybar - gamma_g ybar``."""
        S = getattr(adjacency_operator, "matrix", adjacency_operator)
        y = np.asarray(labels, dtype=np.float64)
        ybar = y / math.sqrt(y.size)
        return cls.build(y, S @ ybar - params.gamma_g * ybar, params, "empirical")

    def core(self, zeta: complex) -> np.ndarray:
        """``[B^{-1} + zeta T]^{-1}``, evaluated as ``(I + zeta B T)^{-1} B`` so a
        singular B is fine."""
        return np.linalg.solve(np.eye(2) + zeta * self.B @ self.T, self.B.astype(complex))

    def matrix(self, z: complex) -> np.ndarray:
        sol = solve_fixed_point(z, self.params)
        n = self.U.shape[0]
        low = self.U @ self.core(sol.zeta) @ self.U.T
        return sol.trace * (np.eye(n) - sol.zeta * low)

    def quadratic_form(self, v, z: complex) -> complex:
        """``v^T Q_bar(z) v`` without forming the n x n matrix."""
        sol = solve_fixed_point(z, self.params)
        v = np.asarray(v, dtype=np.float64)
        u = self.U.T @ v
        return complex(sol.trace * (v @ v - sol.zeta * u @ self.core(sol.zeta) @ u))


def deterministic_equivalent(z: complex, labels, adjacency_operator,
                             params: RmtParams) -> np.ndarray:
    return RankTwoEquivalent.from_operator(adjacency_operator, labels, params).matrix(z)


# Gram resolvent --------------------------------------------------------------------

@dataclass(frozen=True)
class GramFixedPoint:
    delta: complex
    trace: complex
    iterations: int
    residual: float


def gram_resolvent_fixed_point(gram_eigenvalues, z: complex, n_features: Optional[int] = None,
                               *, damping=DAMPING, tol=TOL, max_iter=MAX_ITER) -> GramFixedPoint:
    """Solve ``delta = (1/d) sum_i lam_i / (lam_i/(1+delta) + z)`` and return delta
    with ``(1/n) sum_i 1/(lam_i/(1+delta) + z)``.

    ``n_features`` is the embedding width d; it defaults to n, the number of
    eigenvalues.
    """
    lam = np.asarray(gram_eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("need a nonempty 1-d array of eigenvalues")
    if np.any(lam < -1e-10 * max(1.0, float(np.abs(lam).max()))):
        raise ValueError("eigenvalues must be nonnegative")
    lam = np.clip(lam, 0.0, None)
    d = lam.size if n_features is None else int(n_features)
    if d <= 0:
        raise ValueError("n_features must be positive")
    delta, trace, it, res, status = kernels.gram_fixed_point(
        lam, complex(z), 1.0 / d, float(damping), float(tol), int(max_iter))
    if status != 0:
        _raise_for_status(int(status), complex(z), float(res))
    return GramFixedPoint(complex(delta), complex(trace), int(it), float(res))


# kernel expansion ------------------------------------------------------------------

@dataclass(frozen=True)
class Kappa:
    """Kernel function values: kappa(0), kappa'(0), kappa''(0), kappa(1)."""
    k0: float
    d1: float
    d2: float
    k1: float

    def __post_init__(self):
        for name in ("k0", "d1", "d2", "k1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"kappa {name} is not finite")

    @classmethod
    def from_function(cls, f: Callable[[float], float], h: float = 1e-4) -> "Kappa":
        """Central differences at 0."""
        f0 = float(f(0.0))
        fp, fm = float(f(h)), float(f(-h))
        return cls(f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h), float(f(1.0)))

    @classmethod
    def linear(cls) -> "Kappa":
        return cls(0.0, 1.0, 0.0, 1.0)

    @classmethod
    def exponential(cls) -> "Kappa":
        return cls(1.0, 1.0, 1.0, math.e)


@dataclass(frozen=True)
class KernelExpansion:
    """``K_tilde = a 11^T + b ((gamma_f/c) ybar ybar^T + Z Z^T) + e I``."""
    kappa: Kappa
    gamma_f: float
    c: float
    p: int

    @property
    def ones_coef(self) -> float:
        return self.kappa.k0 + self.kappa.d2 / (2.0 * self.p)

    @property
    def signal_coef(self) -> float:
        return self.kappa.d1 * self.gamma_f / self.c

    @property
    def noise_coef(self) -> float:
        return self.kappa.d1

    @property
    def identity_coef(self) -> float:
        k = self.kappa
        return k.k1 - k.k0 - (self.gamma_f / self.c) * k.d1

    def matrix(self, labels, Z) -> np.ndarray:
        y = np.asarray(labels, dtype=np.float64)
        ybar = y / math.sqrt(y.size)
        Z = np.asarray(Z, dtype=np.float64)
        ZZ = Z @ Z.T
        ZZ = np.triu(ZZ) + np.triu(ZZ, 1).T
        n = y.size
        return (self.ones_coef * np.ones((n, n))
                + self.signal_coef * np.outer(ybar, ybar)
                + self.noise_coef * ZZ
                + self.identity_coef * np.eye(n))


def kernel_expansion(gamma_f: float, c: float, p: int, kappa: Kappa) -> KernelExpansion:
    return KernelExpansion(kappa, float(gamma_f), float(c), int(p))


def noise_component(features, labels, mu) -> np.ndarray:
    """``Z = X - y mu^T / sqrt(p)``: features with the class means removed."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return X - np.outer(y, np.asarray(mu, dtype=np.float64)) / math.sqrt(X.shape[1])
