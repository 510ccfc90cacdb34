"""Eigen-analysis helpers: decompositions, label alignment, empirical spectra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

_SYM_TOL = 1e-8
_DEGENERACY_TOL = 1e-10


def _checked_symmetric(matrix) -> np.ndarray:
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    scale = np.abs(M).max() if M.size else 0.0
    if scale > 0 and np.abs(M - M.T).max() > _SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def symmetric_eigs(matrix):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    return scipy.linalg.eigh(_checked_symmetric(matrix))


def eigenvalues(matrix) -> np.ndarray:
    return scipy.linalg.eigvalsh(_checked_symmetric(matrix))


def alignment(vector, labels) -> float:
    """``(ybar^T v / ||v||)^2`` with ``ybar = y / sqrt(n)``."""
    v = np.asarray(vector, dtype=np.float64)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector has no direction")
    y = np.asarray(labels, dtype=np.float64)
    return float((y @ v) ** 2 / (y.size * nv * nv))


def subspace_alignment(basis, labels) -> float:
    """Squared norm of the projection of ``ybar`` onto span(basis columns),
    the basis being orthonormal."""
    V = np.atleast_2d(np.asarray(basis, dtype=np.float64))
    if V.shape[0] == 1 and V.shape[1] != 1:
        V = V.T
    y = np.asarray(labels, dtype=np.float64)
    proj = V.T @ y
    return float(proj @ proj / y.size)


def top_eigenspace(evals, evecs, tol: float = _DEGENERACY_TOL):
    """Columns of ``evecs`` whose eigenvalue ties the largest one (signed)."""
    top = evals[-1]
    tied = evals >= top - tol * max(1.0, abs(top))
    return evecs[:, tied]


def top_alignment(evals, evecs, labels) -> float:
    """Alignment of the leading eigenvector; a degenerate top eigenvalue uses the
    projection onto its eigenspace."""
    space = top_eigenspace(evals, evecs)
    if space.shape[1] == 1:
        return alignment(space[:, 0], labels)
    return subspace_alignment(space, labels)


def empirical_stieltjes(evals, s):
    """``(1/n) sum_i 1 / (lam_i - s)``; scalar or array ``s``."""
    lam = np.asarray(evals, dtype=np.float64)
    if lam.size == 0:
        raise ValueError("no eigenvalues")
    s_arr = np.asarray(s, dtype=np.complex128)
    diff = lam[None, :] - s_arr.reshape(-1)[:, None]
    if np.any(diff == 0):
        raise ValueError("s coincides with an eigenvalue")
    out = np.mean(1.0 / diff, axis=1)
    return complex(out[0]) if s_arr.ndim == 0 else out.reshape(s_arr.shape)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        """Probability per bin."""
        return self.density * self.widths


def spectral_histogram(evals, bins=40) -> Histogram:
    """Density-normalised histogram on equal-width bins over [min, max], or on
    caller-supplied edges."""
    lam = np.asarray(evals, dtype=np.float64)
    if lam.size == 0:
        raise ValueError("no eigenvalues")
    if np.ndim(bins) == 0:
        nb = int(bins)
        if nb < 1:
            raise ValueError("bins must be >= 1")
        lo, hi = float(lam.min()), float(lam.max())
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, nb + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(lam, edges)
    density = counts / (counts.sum() * np.diff(edges))
    return Histogram(edges, density)


def _left_tail_mass(density_fn, edge: float, scale: float, points: int = 400) -> float:
    # graded grid: dense next to the edge, reaching ``scale`` below it
    t = np.geomspace(1e-9 * scale, scale, points)
    xs = edge - t[::-1]
    f = np.asarray(density_fn(xs), dtype=np.float64)
    return float(np.trapezoid(f, xs))


def total_variation(hist: Histogram, density_fn, sub_points: int = 21,
                    open_ends: bool = False) -> float:
    """TV distance between a histogram and a unit-mass density, the density
    being integrated over each bin by the trapezoid rule on ``sub_points`` nodes.

    With ``open_ends`` the first and last bins stand for ``(-inf, e1]`` and
    ``[e_{k-1}, inf)``, which is what a histogram spanning [min, max] of a sample
    actually measures. The left tail is integrated over one histogram span; the
    right tail is whatever mass remains.
    """
    e = hist.edges
    xs = np.linspace(e[:-1], e[1:], sub_points, axis=1)
    f = np.asarray(density_fn(xs.ravel()), dtype=np.float64).reshape(xs.shape)
    theory = np.trapezoid(f, xs, axis=1)
    if open_ends:
        left = _left_tail_mass(density_fn, e[0], e[-1] - e[0])
        right = max(0.0, 1.0 - theory.sum() - left)
        theory = theory.copy()
        theory[0] += left
        theory[-1] += right
    return 0.5 * float(np.abs(hist.masses - theory).sum())


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    top_eigenvector: np.ndarray
    alignment: float
    histogram: Optional[Histogram]
    source_recipe: object
    symmetrized: bool = False


def spectral_report(matrix, labels, source_recipe=None, bins=40,
                    symmetrized=False) -> SpectralReport:
    evals, evecs = symmetric_eigs(matrix)
    al = top_alignment(evals, evecs, labels)
    hist = spectral_histogram(evals, bins) if bins else None
    return SpectralReport(evals, evecs[:, -1].copy(), al, hist, source_recipe, symmetrized)


def spectral_cluster_baseline(operator, labels) -> SpectralReport:
    """Top-eigenvector alignment of the centred adjacency itself. A non-symmetric
    (directed) operator is replaced by its symmetric part and flagged."""
    S = getattr(operator, "matrix", operator)
    S = np.asarray(S, dtype=np.float64)
    recipe = getattr(operator, "recipe", None)
    sym = np.array_equal(S, S.T)
    if not sym:
        S = 0.5 * (S + S.T)
    return spectral_report(S, labels, recipe, bins=0, symmetrized=not sym)


def top_eigvec_alignment_of_gram(Y, labels) -> float:
    """Alignment of the top eigenvector of ``Y Y^T`` via the thin SVD of Y."""
    Y = np.asarray(Y, dtype=np.float64)
    U, svals, _ = scipy.linalg.svd(Y, full_matrices=False)
    ev = svals ** 2
    order = np.argsort(ev)
    return top_alignment(ev[order], U[:, order], labels)
