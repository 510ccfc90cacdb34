"""Message-passing operators and node-feature kernels.

All builders return immutable-by-convention containers tagged with the recipe
that produced them. Symmetry is preserved bit-exactly: every elementwise
product or sum is arranged so that entry (i, j) and entry (j, i) are computed
by the same floating-point operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from randgcn._backend import kernels


# recipes -----------------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Adjacency:
    """Centred, sqrt(n)-scaled adjacency; ``q_source`` is "exact" or "estimated"."""
    q_source: str = "exact"


@dataclass(frozen=True)
class AdjacencyPlusIdentity:
    q_source: str = "exact"


@dataclass(frozen=True)
class AdjacencyPlusCenteredKernel:
    q_source: str = "exact"
    kernel: str = "linear"


@dataclass(frozen=True)
class GcnNormalized:
    pass


@dataclass(frozen=True)
class NoisePlusIdentity:
    ratio: float


@dataclass(frozen=True)
class NormalizedKernel:
    sparsified: bool


@dataclass(frozen=True)
class AlphaMix:
    alpha: float
    ratio: float


@dataclass(frozen=True)
class BetaMix:
    beta: float
    sparsified: bool


@dataclass(frozen=True)
class Mix:
    weight: float
    first: object
    second: object


Recipe = Union[Identity, Adjacency, AdjacencyPlusIdentity, AdjacencyPlusCenteredKernel,
               GcnNormalized, NoisePlusIdentity, NormalizedKernel, AlphaMix, BetaMix, Mix]


@dataclass(frozen=True)
class PropagationOperator:
    matrix: np.ndarray
    recipe: Recipe
    symmetric: bool

    @classmethod
    def build(cls, matrix, recipe) -> "PropagationOperator":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("operator must be a square matrix")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("operator has non-finite entries")
        return cls(matrix, recipe, bool(np.array_equal(matrix, matrix.T)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class KernelMatrix:
    """Node-feature kernel. ``matrix`` is dense, or CSR when built edge-wise."""
    matrix: Union[np.ndarray, sp.csr_matrix]
    kind: str = "linear"
    centered: bool = False
    normalized: bool = False
    sparsified: bool = False

    def dense(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return self.matrix


def _symmetric_outer(s):
    return np.outer(s, s)


# adjacency -----------------------------------------------------------------------

def estimate_q_vector(adjacency) -> np.ndarray:
    """Degree-based estimate ``d / sqrt(d^T 1)`` with ``d = A 1``."""
    A = np.asarray(adjacency, dtype=np.float64)
    deg = A.sum(axis=1)
    total = deg.sum()
    if total <= 0:
        raise ValueError("empty graph: total degree is zero, q cannot be estimated")
    return deg / math.sqrt(total)


def _q_vector(adjacency, q):
    n = adjacency.shape[0]
    if q is None:
        return estimate_q_vector(adjacency), "estimated"
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 0:
        return np.full(n, float(q)), "exact"
    if q.shape != (n,):
        raise ValueError(f"q vector has shape {q.shape}, expected ({n},)")
    return q, "exact"


def normalize_adjacency(adjacency, q_vector=None) -> PropagationOperator:
    """``(A - q q^T) / sqrt(n)``. ``q_vector`` may be a scalar q, a length-n
    vector, or None (degree estimate)."""
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    q, source = _q_vector(A, q_vector)
    M = (A - np.outer(q, q)) / math.sqrt(A.shape[0])
    return PropagationOperator.build(M, Adjacency(source))


def gcn_normalize(adjacency) -> PropagationOperator:
    """``D^{-1/2} A D^{-1/2}``; self-loops are taken as given."""
    A = np.asarray(adjacency, dtype=np.float64)
    deg = A.sum(axis=1)
    s = np.zeros_like(deg)
    pos = deg > 0
    s[pos] = 1.0 / np.sqrt(deg[pos])
    return PropagationOperator.build(A * _symmetric_outer(s), GcnNormalized())


def identity_operator(n: int) -> PropagationOperator:
    return PropagationOperator.build(np.eye(n), Identity())


# kernels -----------------------------------------------------------------------

def linear_kernel(features) -> KernelMatrix:
    X = np.asarray(features, dtype=np.float64)
    K = X @ X.T
    K = np.triu(K) + np.triu(K, 1).T
    return KernelMatrix(K, "linear")


def center_kernel(kernel: KernelMatrix) -> KernelMatrix:
    """``P K P`` with ``P = I - 11^T/n``, computed by double mean removal."""
    K = kernel.dense()
    m = K.mean(axis=1)
    m = 0.5 * (m + K.mean(axis=0))
    PKP = K - (m[:, None] + m[None, :]) + m.mean()
    return KernelMatrix(PKP, kernel.kind, True, kernel.normalized, kernel.sparsified)


def normalize_kernel(kernel: KernelMatrix) -> KernelMatrix:
    """``D_K^{-1/2} K D_K^{-1/2}`` with ``D_K = diag(K 1)``.

    Rows whose degree is <= 0 are zeroed (row and column).
    """
    K = kernel.matrix
    deg = np.asarray(K.sum(axis=1)).ravel()
    pos = deg > 0
    if not np.any(pos):
        raise ValueError("kernel not normalizable: all row sums are <= 0")
    s = np.zeros_like(deg)
    s[pos] = 1.0 / np.sqrt(deg[pos])
    if sp.issparse(K):
        C = K.tocoo()
        N = sp.csr_matrix((C.data * (s[C.row] * s[C.col]), (C.row, C.col)), shape=K.shape)
    else:
        N = K * _symmetric_outer(s)
    return KernelMatrix(N, kernel.kind, kernel.centered, True, kernel.sparsified)


def sparsify_kernel(kernel: KernelMatrix, adjacency) -> KernelMatrix:
    """Hadamard product ``K o A_hat`` on a dense kernel."""
    A = adjacency.toarray() if sp.issparse(adjacency) else np.asarray(adjacency)
    K = kernel.dense()
    if A.shape != K.shape:
        raise ValueError("kernel and adjacency shapes differ")
    return KernelMatrix(K * A, kernel.kind, kernel.centered, kernel.normalized, True)


def sparse_linear_kernel(features, adjacency) -> KernelMatrix:
    """``(X X^T) o A_hat`` computed only on the nonzero pattern of ``A_hat``:
    O(|E| p) work, CSR result. ``adjacency`` may be dense or scipy-sparse."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    n = X.shape[0]
    A = sp.coo_matrix(adjacency)
    if A.shape != (n, n):
        raise ValueError("adjacency shape does not match features")
    rows, cols = A.row.astype(np.int64), A.col.astype(np.int64)
    weights = np.asarray(A.data, dtype=np.float64)
    symmetric = (A != A.T).nnz == 0
    if symmetric:
        # one inner product per unordered pair, then mirror
        upper = rows <= cols
        r, c, w = rows[upper], cols[upper], weights[upper]
    else:
        r, c, w = rows, cols, weights
    vals = kernels.edge_dot(X, r, c) * w
    if symmetric:
        off = r != c
        r, c = np.concatenate([r, c[off]]), np.concatenate([c, r[off]])
        vals = np.concatenate([vals, vals[off]])
    K = sp.csr_matrix((vals, (r, c)), shape=(n, n))
    return KernelMatrix(K, "linear", sparsified=True)


# composite operators -------------------------------------------------------------

def mix_operators(op_a: PropagationOperator, op_b: PropagationOperator, weight: float,
                  recipe: Optional[Recipe] = None) -> PropagationOperator:
    """``weight * op_a + (1 - weight) * op_b``."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {weight!r}")
    if op_a.matrix.shape != op_b.matrix.shape:
        raise ValueError("operator shapes differ")
    if recipe is None:
        recipe = Mix(float(weight), op_a.recipe, op_b.recipe)
    if weight == 1.0:
        M = op_a.matrix.copy()
    elif weight == 0.0:
        M = op_b.matrix.copy()
    else:
        M = weight * op_a.matrix + (1.0 - weight) * op_b.matrix
    return PropagationOperator.build(M, recipe)


def kernel_operator(kernel: KernelMatrix) -> PropagationOperator:
    return PropagationOperator.build(kernel.dense(), NormalizedKernel(kernel.sparsified))


def adjacency_plus_identity(adjacency, q=None) -> PropagationOperator:
    base = normalize_adjacency(adjacency, q)
    n = base.n
    return PropagationOperator.build(base.matrix + np.eye(n),
                                     AdjacencyPlusIdentity(base.recipe.q_source))


def adjacency_plus_centered_kernel(adjacency, features, q=None) -> PropagationOperator:
    """``A_tilde + P K P`` with the linear kernel ``K = X X^T``."""
    base = normalize_adjacency(adjacency, q)
    PKP = center_kernel(linear_kernel(features)).matrix
    return PropagationOperator.build(base.matrix + PKP,
                                     AdjacencyPlusCenteredKernel(base.recipe.q_source))


def alpha_mix_operator(adjacency, noise, alpha: float, ratio: float) -> PropagationOperator:
    """``alpha * A_bar + (1 - alpha) * (R + I)`` with ``A_bar`` GCN-normalised and
    ``R`` used raw."""
    n = np.asarray(adjacency).shape[0]
    clean = gcn_normalize(adjacency)
    noisy = PropagationOperator.build(np.asarray(noise, dtype=np.float64) + np.eye(n),
                                      NoisePlusIdentity(float(ratio)))
    return mix_operators(clean, noisy, alpha, AlphaMix(float(alpha), float(ratio)))


def beta_mix_operator(adjacency_hat, features, beta: float,
                      sparsified: bool = True) -> PropagationOperator:
    """``beta * A_hat_bar + (1 - beta) * N(K)`` (or ``N(K o A_hat)`` when sparsified)
    with the linear kernel on ``features``."""
    graph_op = gcn_normalize(adjacency_hat)
    recipe = BetaMix(float(beta), bool(sparsified))
    if beta == 1.0:
        return PropagationOperator.build(graph_op.matrix.copy(), recipe)
    if sparsified:
        K = sparse_linear_kernel(features, adjacency_hat)
    else:
        K = linear_kernel(features)
    kern_op = kernel_operator(normalize_kernel(K))
    return mix_operators(graph_op, kern_op, beta, recipe)
