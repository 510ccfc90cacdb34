"""Seeded Monte Carlo studies built on the library modules.

Each study is a pure function of its :class:`ExperimentConfig`. Trials run on a
thread pool and are merged in trial order, so results do not depend on the
number of workers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from randgcn import operators as ops
from randgcn import rgcn, rmt, spectral
from randgcn.synthgen import (ModelParams, er_density_for_ratio, gen_er_noise, gen_graph,
                              perturb_edges, perturb_features)

STRATEGIES = ("A", "A+I", "A+PKP", "RandomMLP", "SpectralClustering")
SCHEMES = ("theoretical", "edge_ratio", "feature_noise")


# study descriptions ------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumStudy:
    bins: int = 40
    sub_points: int = 21
    density_points: int = 801


@dataclass(frozen=True)
class AlignmentSweep:
    eta_grid: tuple = tuple(0.5 * k for k in range(17))
    strategies: tuple = STRATEGIES
    activation: str = "erf"


@dataclass(frozen=True)
class GramConvergence:
    d_grid: tuple = (256, 1024, 4096)
    operator: str = "A+I"
    activation: str = "erf"


@dataclass(frozen=True)
class NoiseSweep:
    """``grid`` holds perturbation ratios; ``weights`` holds alpha (theoretical
    scheme) or beta values (the other two)."""
    scheme: str = "edge_ratio"
    grid: tuple = (0.0, 0.5, 1.0, 2.0, 5.0)
    weights: tuple = (0.5, 1.0)
    sparsified: bool = True
    gamma: float = 1.0
    lam: float = 1e-2
    per_class: int = 20
    activation: str = "erf"


Study = Union[SpectrumStudy, AlignmentSweep, GramConvergence, NoiseSweep]

STUDY_NAMES = {
    SpectrumStudy: "spectrum",
    AlignmentSweep: "alignment-sweep",
    GramConvergence: "gram-convergence",
    NoiseSweep: "noise-sweep",
}


def _check_grid(name, grid):
    if len(grid) == 0:
        raise ValueError(f"{name} must be nonempty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"{name} must be sorted ascending")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    study: Study = field(default_factory=SpectrumStudy)
    trials: int = 10
    master_seed: int = 0
    output: Optional[str] = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be an integer >= 1, got {self.trials!r}")
        s = self.study
        if isinstance(s, AlignmentSweep):
            _check_grid("eta_grid", s.eta_grid)
            unknown = [x for x in s.strategies if x not in STRATEGIES]
            if unknown:
                raise ValueError(f"strategies: unknown strategy {unknown[0]!r}")
            if not s.strategies:
                raise ValueError("strategies must be nonempty")
        elif isinstance(s, GramConvergence):
            _check_grid("d_grid", s.d_grid)
            if s.operator not in ("A", "A+I", "A+PKP"):
                raise ValueError(f"operator: unknown operator {s.operator!r}")
        elif isinstance(s, NoiseSweep):
            if s.scheme not in SCHEMES:
                raise ValueError(f"scheme must be one of {SCHEMES}, got {s.scheme!r}")
            _check_grid("grid", s.grid)
            _check_grid("weights", s.weights)
            if any(not 0.0 <= w <= 1.0 for w in s.weights):
                raise ValueError("weights must lie in [0, 1]")
        elif not isinstance(s, SpectrumStudy):
            raise ValueError(f"unknown study {s!r}")

    @property
    def study_name(self) -> str:
        return STUDY_NAMES[type(self.study)]

    def as_dict(self) -> dict:
        return {"study": self.study_name, "model": dataclasses.asdict(self.model),
                "study_params": dataclasses.asdict(self.study),
                "trials": self.trials, "master_seed": self.master_seed}

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SweepResult:
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def lookup(self, **where) -> tuple:
        """The unique row whose named columns equal the given values."""
        idx = [(self.columns.index(k), v) for k, v in where.items()]
        hits = [r for r in self.rows if all(_same(r[k], v) for k, v in idx)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {where}")
        return hits[0]

    def value(self, column, **where):
        return self.lookup(**where)[self.columns.index(column)]


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


# helpers -------------------------------------------------------------------------------

def cell_seed(master_seed: int, tag: str, *indices: int) -> int:
    """64-bit seed for one (tag, grid index...) cell of a sweep."""
    key = (zlib.crc32(tag.encode()),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(master_seed) & ((1 << 64) - 1), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _map_trials(fn, trials: int, threads: Optional[int]):
    workers = threads or os.cpu_count() or 1
    if workers <= 1 or trials == 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=min(workers, trials)) as pool:
        return list(pool.map(fn, range(trials)))


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std


def _metadata(config: ExperimentConfig) -> dict:
    from randgcn import __version__
    from randgcn._backend import BACKEND
    return {"config_hash": config.digest(), "master_seed": config.master_seed,
            "version": __version__, "backend": BACKEND, "study": config.study_name}


def _operator(name: str, graph, q):
    if name == "A":
        return ops.normalize_adjacency(graph.adjacency, q)
    if name == "A+I":
        return ops.adjacency_plus_identity(graph.adjacency, q)
    if name == "A+PKP":
        return ops.adjacency_plus_centered_kernel(graph.adjacency, graph.features, q)
    raise ValueError(f"unknown operator {name!r}")


# spectrum -----------------------------------------------------------------------------

@dataclass
class SpectrumOutcome:
    result: SweepResult
    report: spectral.SpectralReport
    density_x: np.ndarray
    density_f: np.ndarray
    histogram: spectral.Histogram
    tv: np.ndarray
    alignments: np.ndarray


def run_spectrum_study(config: ExperimentConfig, threads: Optional[int] = None) -> SpectrumOutcome:
    """Eigenvalues of ``Xt Xt^T`` with ``Xt = A_tilde X`` against the limiting density."""
    study = config.study
    if not isinstance(study, SpectrumStudy):
        raise ValueError("run_spectrum_study needs a SpectrumStudy")
    model = config.model.replace(seed=config.master_seed)
    params = rmt.RmtParams.from_model(model)

    def one(trial):
        g = gen_graph(model, trial)
        Xt = ops.normalize_adjacency(g.adjacency, model.q).matrix @ g.features
        rep = spectral.spectral_report(Xt @ Xt.T, g.labels, "A", bins=study.bins)
        return rep

    reports = _map_trials(one, config.trials, threads)
    tvs, aligns = [], []
    for rep in reports:
        eps = 1e-3 * (rep.histogram.edges[-1] - rep.histogram.edges[0])
        density = lambda x, e=eps: rmt.theoretical_density(x, e, params)  # noqa: E731
        tvs.append(spectral.total_variation(rep.histogram, density, study.sub_points,
                                            open_ends=True))
        aligns.append(rep.alignment)

    pooled = np.concatenate([r.eigenvalues for r in reports])
    hist = spectral.spectral_histogram(pooled, study.bins)
    x = np.linspace(hist.edges[0], hist.edges[-1], study.density_points)
    f = rmt.theoretical_density(x, None, params)

    tv_m, tv_s = _mean_std(tvs)
    al_m, al_s = _mean_std(aligns)
    result = SweepResult(("quantity", "mean", "std", "trials"),
                         [("total_variation", tv_m, tv_s, config.trials),
                          ("alignment", al_m, al_s, config.trials)],
                         _metadata(config))
    return SpectrumOutcome(result, reports[0], x, f, hist, np.array(tvs), np.array(aligns))


# alignment sweep ----------------------------------------------------------------------

def strategy_alignment(strategy: str, graph, model: ModelParams, activation=None,
                       weight_seed: int = 0, trial: int = 0) -> float:
    """Top-eigenvector alignment with the labels for one strategy on one draw."""
    y = graph.labels
    if strategy in ("A", "A+I", "A+PKP"):
        Xt = _operator(strategy, graph, model.q).matrix @ graph.features
        return spectral.top_eigvec_alignment_of_gram(Xt, y)
    if strategy == "SpectralClustering":
        S = ops.normalize_adjacency(graph.adjacency, model.q)
        return spectral.spectral_cluster_baseline(S, y).alignment
    if strategy == "RandomMLP":
        act = activation or rgcn.normalize_activation("erf")
        W = rgcn.sample_weights(graph.features.shape[1], model.d, weight_seed, trial)
        Phi = act(graph.features @ W)
        return spectral.top_eigvec_alignment_of_gram(Phi, y)
    raise ValueError(f"unknown strategy {strategy!r}")


def run_alignment_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    study = config.study
    if not isinstance(study, AlignmentSweep):
        raise ValueError("run_alignment_sweep needs an AlignmentSweep")
    act = rgcn.normalize_activation(study.activation)
    rows = []
    for gi, eta in enumerate(study.eta_grid):
        model = config.model.replace(eta=float(eta),
                                     seed=cell_seed(config.master_seed, "eta", gi))

        def one(trial):
            g = gen_graph(model, trial)
            return [strategy_alignment(s, g, model, act, model.seed, trial)
                    for s in study.strategies]

        per_trial = np.array(_map_trials(one, config.trials, threads))
        for k, s in enumerate(study.strategies):
            m, sd = _mean_std(per_trial[:, k])
            rows.append((float(eta), s, m, sd, config.trials))
    return SweepResult(("eta", "strategy", "mean_alignment", "std_alignment", "trials"),
                       rows, _metadata(config))


# Gram convergence ----------------------------------------------------------------------

def run_gram_convergence(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """``(1/n) ||G - G_tilde||_F^2`` across embedding widths."""
    study = config.study
    if not isinstance(study, GramConvergence):
        raise ValueError("run_gram_convergence needs a GramConvergence study")
    model = config.model.replace(seed=config.master_seed)
    act = rgcn.normalize_activation(study.activation)

    def one(trial):
        g = gen_graph(model, trial)
        S = _operator(study.operator, g, model.q)
        Xt = rgcn.propagate(S, g.features)
        if not np.any(Xt):
            raise ValueError("propagated features are zero; the Gram equivalent is degenerate")
        Gt = rgcn.gram_equivalent(Xt, act.b_sigma)
        out = []
        for di, d in enumerate(study.d_grid):
            W = rgcn.sample_weights(Xt.shape[1], int(d), model.seed, trial, di)
            G = rgcn.gram(act(Xt @ W))
            out.append(float(np.sum((G - Gt) ** 2) / model.n))
        return out

    errs = np.array(_map_trials(one, config.trials, threads))
    rows = []
    for di, d in enumerate(study.d_grid):
        m, sd = _mean_std(errs[:, di])
        rows.append((int(d), m, sd, config.trials))
    means = errs.mean(axis=0)
    meta = _metadata(config)
    meta["strictly_decreasing"] = bool(np.all(np.diff(means) < 0))
    meta["final_over_first"] = float(means[-1] / means[0])
    return SweepResult(("d", "mean_error", "std_error", "trials"), rows, meta)


# noise sweeps --------------------------------------------------------------------------

def run_noise_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """Accuracy of the random GCN with a ridge readout under graph or feature noise.

    Rows: one per (ratio, weight) for the GCN, plus one MLP row per ratio whose
    weight column is NaN. The base graph, weights and training mask depend on
    the trial only, so every ratio shares them.
    """
    study = config.study
    if not isinstance(study, NoiseSweep):
        raise ValueError("run_noise_sweep needs a NoiseSweep")
    model = config.model.replace(seed=config.master_seed)
    act = rgcn.normalize_activation(study.activation)
    seed = config.master_seed

    def readout(S, X, W, y, mask):
        Phi = act(rgcn.propagate(S, X) @ W)
        return rgcn.ridge_readout(Phi, y, mask, study.lam).accuracy

    def one(trial):
        g = gen_graph(model, trial)
        if study.scheme == "feature_noise":
            g = perturb_features(g, study.gamma, seed, trial)
        y, X = g.labels, g.features
        W = rgcn.sample_weights(X.shape[1], model.d, seed, trial)
        mask = rgcn.sample_train_mask(y, study.per_class, seed, trial)
        mlp = readout(np.eye(model.n), X, W, y, mask)
        cells = []
        for gi, ratio in enumerate(study.grid):
            cs = cell_seed(seed, "ratio", gi)
            accs = []
            if study.scheme == "theoretical":
                R = gen_er_noise(model.n, er_density_for_ratio(g.adjacency, ratio), cs, trial)
                for alpha in study.weights:
                    S = ops.alpha_mix_operator(g.adjacency, R, alpha, ratio)
                    accs.append(readout(S, X, W, y, mask))
            else:
                gp = perturb_edges(g, ratio, cs, trial)
                for beta in study.weights:
                    S = ops.beta_mix_operator(gp.adjacency, X, beta, study.sparsified)
                    accs.append(readout(S, X, W, y, mask))
            cells.append(accs)
        return mlp, cells

    results = _map_trials(one, config.trials, threads)
    rows = []
    for gi, ratio in enumerate(study.grid):
        for wi, w in enumerate(study.weights):
            m, sd = _mean_std([r[1][gi][wi] for r in results])
            rows.append((float(ratio), float(w), "GCN", m, sd, config.trials))
        m, sd = _mean_std([r[0] for r in results])
        rows.append((float(ratio), float("nan"), "MLP", m, sd, config.trials))
    return SweepResult(("grid_value", "beta_or_alpha", "model", "mean_accuracy",
                        "std_accuracy", "trials"), rows, _metadata(config))


def run(config: ExperimentConfig, threads: Optional[int] = None):
    s = config.study
    if isinstance(s, SpectrumStudy):
        return run_spectrum_study(config, threads)
    if isinstance(s, AlignmentSweep):
        return run_alignment_sweep(config, threads)
    if isinstance(s, GramConvergence):
        return run_gram_convergence(config, threads)
    return run_noise_sweep(config, threads)
