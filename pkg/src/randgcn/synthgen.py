"""Synthetic attributed graphs: labels, Gaussian-mixture features, SBM adjacency
and the perturbation schemes (Erdos-Renyi noise, edge deletion/insertion,
node-feature noise).

Every generator is a pure function of its parameters and a seed; randomness is
drawn from :func:`randgcn._rng.stream` keyed by ``(seed, tag, trial)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from randgcn._rng import round_half_away, stream

CONTRASTS = ("signed", "literal")


@dataclass(frozen=True)
class ModelParams:
    """Generative constants of the two-class SBM + GMM model.

    ``contrast`` selects how the community strength ``eta`` enters the block
    probabilities:

    * ``"signed"`` (default): ``q^2 (1 + y_i y_j eta / sqrt(n))``, i.e.
      within-class pairs are boosted and across-class pairs damped by the same
      amount. This is the model whose centred adjacency has mean
      ``q^2 eta ybar ybar^T``.
    * ``"literal"``: within class a, ``q^2 (1 + (-1)^a eta / sqrt(n))``;
      across classes ``q^2``.
    """

    n: int = 200
    p: int = 1000
    d: int = 1024
    q: float = 0.5
    eta: float = 4.0
    mu_norm: float = 2.0
    mu_direction: Optional[tuple] = None
    class_balance: float = 0.5
    directed: bool = False
    seed: int = 0
    contrast: str = "signed"

    def __post_init__(self):
        for name in ("n", "p", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in the open interval (0, 1), got {self.q!r}")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError(
                f"class_balance must lie in (0, 1), got {self.class_balance!r}")
        if self.mu_norm < 0 or not math.isfinite(self.mu_norm):
            raise ValueError(f"mu_norm must be finite and >= 0, got {self.mu_norm!r}")
        if self.contrast not in CONTRASTS:
            raise ValueError(f"contrast must be one of {CONTRASTS}, got {self.contrast!r}")
        if self.mu_direction is not None:
            if len(self.mu_direction) != self.p:
                raise ValueError("mu_direction must have length p")
        q2 = self.q ** 2
        if not q2 * (1.0 + abs(self.eta) / math.sqrt(self.n)) < 1.0:
            raise ValueError(
                "eta: q^2 (1 + |eta|/sqrt(n)) must be < 1 for valid edge probabilities")
        if not q2 * (1.0 - abs(self.eta) / math.sqrt(self.n)) > 0.0:
            raise ValueError(
                "eta: q^2 (1 - |eta|/sqrt(n)) must be > 0 for valid edge probabilities")

    @property
    def c(self) -> float:
        return self.p / self.n

    @property
    def r(self) -> float:
        return self.d / self.n

    @property
    def gamma_f(self) -> float:
        return self.mu_norm ** 2

    @property
    def gamma_g(self) -> float:
        return self.q ** 2 * self.eta

    @property
    def nu(self) -> float:
        return self.q ** 2 * (1.0 - self.q ** 2)

    def mu(self) -> np.ndarray:
        if self.mu_direction is None:
            direction = np.zeros(self.p)
            direction[0] = 1.0
        else:
            direction = np.asarray(self.mu_direction, dtype=np.float64)
        return self.mu_norm * direction

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


# provenance tags -------------------------------------------------------------

@dataclass(frozen=True)
class Clean:
    pass


@dataclass(frozen=True)
class TheoreticalNoise:
    alpha: float
    ratio: float


@dataclass(frozen=True)
class EdgeDeleted:
    ratio: float


@dataclass(frozen=True)
class EdgeInserted:
    ratio: float


@dataclass(frozen=True)
class FeatureNoise:
    gamma: float


Provenance = Union[Clean, TheoreticalNoise, EdgeDeleted, EdgeInserted, FeatureNoise]


@dataclass
class AttributedGraph:
    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    provenance: Provenance = field(default_factory=Clean)
    directed: bool = False

    def __post_init__(self):
        A = self.adjacency
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("adjacency must be square")
        if self.features.shape[0] != n or self.labels.shape != (n,):
            raise ValueError("features/labels row count must match adjacency")
        if not np.all(np.diag(A) == 1):
            raise ValueError("adjacency diagonal must be all ones")
        if not self.directed and not np.array_equal(A, A.T):
            raise ValueError("undirected adjacency must be symmetric")
        _check_labels(self.labels)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def normalized_labels(self) -> np.ndarray:
        return self.labels / math.sqrt(self.n)

    @property
    def edge_count(self) -> int:
        """Number of edges excluding self-loops (unordered pairs if undirected)."""
        off = int(np.count_nonzero(self.adjacency)) - self.n
        return off if self.directed else off // 2


def _check_labels(labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.all((labels == 1) | (labels == -1)):
        raise ValueError("labels must be a vector over {-1, +1}")


def gen_labels(params: ModelParams, trial: int = 0) -> np.ndarray:
    """Labels in {-1, +1}; exactly round(class_balance * n) entries are -1."""
    n = params.n
    if n < 1:
        raise ValueError("n must be >= 1")
    n_neg = round_half_away(params.class_balance * n)
    labels = np.ones(n, dtype=np.int64)
    labels[:n_neg] = -1
    return stream(params.seed, "labels", trial).permutation(labels)


def gen_gmm_features(labels, params: ModelParams, trial: int = 0) -> np.ndarray:
    """Rows ``y_i mu / sqrt(p) + z_i`` with ``z_i ~ N(0, I_p / p)``.

    Label -1 (class C1) carries mean ``-mu/sqrt(p)``, label +1 carries ``+mu/sqrt(p)``.
    """
    labels = np.asarray(labels)
    _check_labels(labels)
    if labels.shape[0] != params.n:
        raise ValueError("labels length must equal n")
    if params.mu_direction is not None:
        norm = float(np.linalg.norm(params.mu_direction))
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"mu_direction must be unit length (norm {norm:.6g})")
    p = params.p
    rng = stream(params.seed, "features", trial)
    noise = rng.standard_normal((params.n, p)) / math.sqrt(p)
    mean = params.mu() / math.sqrt(p)
    return labels[:, None].astype(np.float64) * mean[None, :] + noise


def block_probabilities(params: ModelParams) -> np.ndarray:
    """2x2 Bernoulli parameters indexed by class (0 = C1/label -1, 1 = C2/label +1)."""
    q2 = params.q ** 2
    s = params.eta / math.sqrt(params.n)
    if params.contrast == "signed":
        table = q2 * np.array([[1.0 + s, 1.0 - s], [1.0 - s, 1.0 + s]])
    else:
        table = q2 * np.array([[1.0 - s, 1.0], [1.0, 1.0 + s]])
    for a in range(2):
        for b in range(2):
            if not 0.0 < table[a, b] < 1.0:
                raise ValueError(
                    f"edge probability {table[a, b]:.6g} for class pair "
                    f"(C{a + 1}, C{b + 1}) lies outside (0, 1)")
    return table


def gen_sbm_adjacency(labels, params: ModelParams, trial: int = 0) -> np.ndarray:
    """Binary SBM adjacency with unit diagonal (float64 0/1 entries)."""
    labels = np.asarray(labels)
    _check_labels(labels)
    table = block_probabilities(params)
    cls = (labels > 0).astype(np.intp)
    probs = table[cls[:, None], cls[None, :]]
    rng = stream(params.seed, "adjacency", trial)
    draws = rng.random(probs.shape) < probs
    if params.directed:
        A = draws.astype(np.float64)
    else:
        upper = np.triu(draws, 1)
        A = (upper | upper.T).astype(np.float64)
    np.fill_diagonal(A, 1.0)
    return A


def gen_graph(params: ModelParams, trial: int = 0) -> AttributedGraph:
    """Labels, features and adjacency for one trial, each from its own stream."""
    labels = gen_labels(params, trial)
    X = gen_gmm_features(labels, params, trial)
    A = gen_sbm_adjacency(labels, params, trial)
    return AttributedGraph(A, X, labels, Clean(), params.directed)


def gen_er_noise(n: int, density: float, seed: int, trial: int = 0) -> np.ndarray:
    """Symmetric Erdos-Renyi matrix with zero diagonal."""
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density!r}")
    rng = stream(seed, "er-noise", trial)
    upper = np.triu(rng.random((n, n)) < density, 1)
    return (upper | upper.T).astype(np.float64)


def undirected_edge_count(adjacency) -> int:
    A = np.asarray(adjacency)
    n = A.shape[0]
    return int(np.count_nonzero(A[np.triu_indices(n, 1)]))


def er_density_for_ratio(adjacency, ratio: float) -> float:
    """ER density whose expected edge count is ``ratio * |E|`` of ``adjacency``."""
    if ratio < 0:
        raise ValueError("ratio must be >= 0")
    n = adjacency.shape[0]
    pairs = n * (n - 1) / 2
    density = ratio * undirected_edge_count(adjacency) / pairs if pairs else 0.0
    if density > 1.0:
        raise ValueError(
            f"perturbation ratio {ratio} needs ER density {density:.4g} > 1")
    return density


def perturb_edges(graph: AttributedGraph, target_ratio: float, seed: int,
                  trial: int = 0) -> AttributedGraph:
    """Delete (ratio < 1) or insert (ratio > 1) uniformly chosen edges so that
    ``|E_hat| = round(target_ratio * |E|)``. Self-loops are untouched."""
    if target_ratio < 0:
        raise ValueError("target_ratio must be >= 0")
    if graph.directed:
        raise ValueError("perturb_edges requires an undirected graph")
    A = graph.adjacency
    n = A.shape[0]
    iu, ju = np.triu_indices(n, 1)
    present = A[iu, ju] != 0
    n_edges = int(np.count_nonzero(present))
    target = round_half_away(target_ratio * n_edges)
    if target == n_edges:
        return graph
    rng = stream(seed, "perturb-edges", trial)
    keep = present.copy()
    if target < n_edges:
        edge_idx = np.flatnonzero(present)
        drop = rng.choice(edge_idx, n_edges - target, replace=False)
        keep[drop] = False
        provenance = EdgeDeleted(float(target_ratio))
    else:
        free = np.flatnonzero(~present)
        extra = target - n_edges
        if extra > free.size:
            raise ValueError(
                f"ratio {target_ratio} needs {extra} insertions but only "
                f"{free.size} non-edges exist")
        add = rng.choice(free, extra, replace=False)
        keep[add] = True
        provenance = EdgeInserted(float(target_ratio))
    B = np.zeros_like(A)
    B[iu[keep], ju[keep]] = 1.0
    B = B + B.T
    np.fill_diagonal(B, 1.0)
    return AttributedGraph(B, graph.features, graph.labels, provenance, False)


def perturb_features(graph: AttributedGraph, gamma: float, seed: int,
                     trial: int = 0) -> AttributedGraph:
    """Add ``N(0, gamma * var_i)`` noise to feature column i (unbiased variance)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    X = graph.features
    if gamma == 0:
        return dataclasses.replace(graph, provenance=FeatureNoise(0.0))
    var = X.var(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    rng = stream(seed, "feature-noise", trial)
    noise = rng.standard_normal(X.shape) * np.sqrt(gamma * var)[None, :]
    return dataclasses.replace(graph, features=X + noise,
                               provenance=FeatureNoise(float(gamma)))
