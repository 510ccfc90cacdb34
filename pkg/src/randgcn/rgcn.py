"""Random one-layer GCN: forward pass, Gram matrices and a ridge readout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

from randgcn._rng import stream
from randgcn.operators import PropagationOperator

_QUAD_POINTS = 200
_MC_SAMPLES = 1_000_000


def _relu(t):
    return np.maximum(t, 0.0)


def _relu_prime(t):
    return (np.asarray(t) > 0).astype(np.float64)


def _erf_prime(t):
    return 2.0 / math.sqrt(math.pi) * np.exp(-np.square(t))


def _identity(t):
    return np.asarray(t, dtype=np.float64)


def _one(t):
    return np.ones_like(np.asarray(t, dtype=np.float64))


# base name -> (function, derivative, Lipschitz constant of the base)
_BASES = {
    "erf": (erf, _erf_prime, 2.0 / math.sqrt(math.pi)),
    "shifted_relu": (_relu, _relu_prime, 1.0),
    "identity": (_identity, _one, 1.0),
}


@dataclass(frozen=True)
class ActivationSpec:
    """``sigma(t) = scale * base(t) + shift`` with zero mean and unit second moment
    under a standard Gaussian."""
    base: str
    scale: float
    shift: float
    b_sigma: float
    method: str = "quadrature"
    lipschitz: Optional[float] = None
    func: Callable = field(default=None, repr=False, compare=False)
    deriv: Callable = field(default=None, repr=False, compare=False)

    def __call__(self, t):
        return self.scale * self.func(t) + self.shift

    def derivative(self, t):
        return self.scale * self.deriv(t)

    @property
    def id(self) -> str:
        return f"{self.base}/{self.method}"


def _gauss_expectations(fns, method, seed=0):
    """E[f(xi)] for xi ~ N(0, 1) and each f in ``fns``."""
    if method == "quadrature":
        nodes, weights = np.polynomial.hermite_e.hermegauss(_QUAD_POINTS)
        weights = weights / math.sqrt(2.0 * math.pi)
        return [float(np.dot(weights, f(nodes))) for f in fns]
    if method == "montecarlo":
        xi = stream(seed, "activation-mc").standard_normal(_MC_SAMPLES)
        return [float(np.mean(f(xi))) for f in fns]
    raise ValueError(f"unknown normalization method {method!r}")


def normalize_activation(base="erf", method="quadrature", func=None, deriv=None,
                         lipschitz=None, seed=0) -> ActivationSpec:
    """Fit scale and shift so the activation is centred with unit second moment.

    ``base`` is "erf", "shifted_relu", "identity" or "custom"; a custom base needs
    ``func`` and ``deriv``.
    """
    if base == "custom":
        if func is None or deriv is None:
            raise ValueError("custom activation needs func and deriv")
    elif base in _BASES:
        func, deriv, base_lip = _BASES[base]
        lipschitz = base_lip if lipschitz is None else lipschitz
    else:
        raise ValueError(f"unknown activation base {base!r}")

    if base == "identity":
        # already standardised
        return ActivationSpec(base, 1.0, 0.0, 1.0, method, 1.0, func, deriv)

    m1, m2, dm = _gauss_expectations(
        [func, lambda t: np.square(func(t)), deriv], method, seed)
    var = m2 - m1 * m1
    if not var > 1e-14:
        raise ValueError(f"activation base {base!r} has zero variance under N(0,1)")
    scale = 1.0 / math.sqrt(var)
    shift = -scale * m1
    if abs(shift) < 1e-12:
        shift = 0.0  # odd bases: the mean vanishes by symmetry
    b_sigma = scale * dm
    if not math.isfinite(b_sigma):
        raise ValueError("b_sigma is not finite")
    lip = None if lipschitz is None else scale * lipschitz
    return ActivationSpec(base, scale, shift, b_sigma, method, lip, func, deriv)


@dataclass(frozen=True)
class EmbeddingMatrix:
    values: np.ndarray
    operator_recipe: object
    activation: str
    weight_seed: int

    @property
    def d(self) -> int:
        return self.values.shape[1]


def sample_weights(p: int, d: int, weight_seed: int, *indices: int) -> np.ndarray:
    """i.i.d. N(0, 1) weights of shape (p, d); ``indices`` default to trial 0."""
    return stream(weight_seed, "weights", *(indices or (0,))).standard_normal((p, d))


def propagate(operator, features) -> np.ndarray:
    """``S X``."""
    S = operator.matrix if isinstance(operator, PropagationOperator) else np.asarray(operator)
    X = np.asarray(features, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[1] != X.shape[0]:
        raise ValueError(f"operator shape {S.shape} does not match features shape {X.shape}")
    return S @ X


def forward(operator, features, activation: ActivationSpec, weight_seed: int = 0,
            d: int = 1024, trial: int = 0, weights=None) -> EmbeddingMatrix:
    """``Phi = sigma(S X W)`` with ``W`` i.i.d. standard Gaussian, p x d.

    ``weights`` injects a fixed W (test hook); ``d`` is then taken from it.
    """
    Xt = propagate(operator, features)
    if weights is None:
        W = sample_weights(Xt.shape[1], d, weight_seed, trial)
    else:
        W = np.asarray(weights, dtype=np.float64)
        if W.shape[0] != Xt.shape[1]:
            raise ValueError(f"weights have {W.shape[0]} rows, features have {Xt.shape[1]} columns")
    Phi = activation(Xt @ W)
    if not np.all(np.isfinite(Phi)):
        raise ValueError("embedding has non-finite entries")
    recipe = operator.recipe if isinstance(operator, PropagationOperator) else None
    return EmbeddingMatrix(Phi, recipe, activation.id, weight_seed)


def gram(embedding) -> np.ndarray:
    """``(1/d) Phi Phi^T``."""
    Phi = embedding.values if isinstance(embedding, EmbeddingMatrix) else np.asarray(embedding)
    G = Phi @ Phi.T / Phi.shape[1]
    return np.triu(G) + np.triu(G, 1).T


def gram_equivalent(x_tilde, b_sigma: float) -> np.ndarray:
    """Linearised Gram ``b^2 Xt Xt^T + (1 - b^2) I``."""
    Xt = np.asarray(x_tilde, dtype=np.float64)
    K = Xt @ Xt.T
    K = np.triu(K) + np.triu(K, 1).T
    b2 = b_sigma * b_sigma
    return b2 * K + (1.0 - b2) * np.eye(Xt.shape[0])


def expected_gram(x_tilde, activation: ActivationSpec) -> np.ndarray:
    """Exact ``E_W[G]`` for the normalised erf activation (arcsine kernel)."""
    if activation.base != "erf" or abs(activation.shift) > 1e-12:
        raise ValueError("closed-form expected Gram is only available for erf")
    Xt = np.asarray(x_tilde, dtype=np.float64)
    K = Xt @ Xt.T
    K = np.triu(K) + np.triu(K, 1).T
    s = 1.0 / np.sqrt(1.0 + 2.0 * np.diag(K))
    arg = np.clip(2.0 * K * np.outer(s, s), -1.0, 1.0)
    return activation.scale ** 2 * (2.0 / math.pi) * np.arcsin(arg)


# readout -------------------------------------------------------------------------

def sample_train_mask(labels, per_class: int = 20, seed: int = 0, trial: int = 0) -> np.ndarray:
    """Boolean mask with ``per_class`` randomly chosen nodes from each class."""
    labels = np.asarray(labels)
    rng = stream(seed, "train-mask", trial)
    mask = np.zeros(labels.shape[0], dtype=bool)
    for cls in (-1, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < per_class:
            raise ValueError(f"class {cls} has {idx.size} nodes, fewer than {per_class}")
        mask[rng.choice(idx, per_class, replace=False)] = True
    return mask


def ridge_weights(features, targets, lam: float):
    """Minimise ``||F w + b - y||^2 + lam ||w||^2`` (intercept unpenalised).

    Solved in the dual, so the cost is governed by the number of rows.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    fm, ym = F.mean(axis=0), y.mean()
    Fc = F - fm
    alpha = np.linalg.solve(Fc @ Fc.T + lam * np.eye(F.shape[0]), y - ym)
    w = Fc.T @ alpha
    return w, float(ym - fm @ w)


@dataclass(frozen=True)
class ReadoutResult:
    predictions: np.ndarray
    accuracy: float
    weights: np.ndarray
    intercept: float


def ridge_readout(embeddings, labels, train_mask, lam: float = 1e-2) -> ReadoutResult:
    """Fit on ``train_mask`` rows, predict the sign on every row, score held-out rows."""
    Phi = embeddings.values if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    y = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(train_mask, dtype=bool)
    if not mask.any():
        raise ValueError("training mask is empty")
    if np.unique(y[mask]).size < 2:
        raise ValueError("training mask covers a single class")
    w, b = ridge_weights(Phi[mask], y[mask], lam)
    pred = np.where(Phi @ w + b >= 0.0, 1.0, -1.0)
    test = ~mask
    acc = float(np.mean(pred[test] == y[test])) if test.any() else float("nan")
    return ReadoutResult(pred, acc, w, b)


def mlp_baseline(features, labels, activation: ActivationSpec, weight_seed: int,
                 train_mask, lam: float = 1e-2, d: int = 1024, trial: int = 0) -> float:
    """Random-feature readout on the raw features (no message passing)."""
    X = np.asarray(features, dtype=np.float64)
    W = sample_weights(X.shape[1], d, weight_seed, trial)
    Phi = activation(X @ W)
    return ridge_readout(Phi, labels, train_mask, lam).accuracy
