import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from randgcn import operators as ops
from randgcn import spectral
from randgcn.synthgen import ModelParams, gen_graph


def test_eigs_sorted_and_orthonormal(rng):
    M = rng.standard_normal((30, 30))
    M = M + M.T
    w, V = spectral.symmetric_eigs(M)
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(V.T @ V, np.eye(30), atol=1e-12)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, M, atol=1e-11)
    np.testing.assert_allclose(spectral.eigenvalues(M), w, atol=1e-12)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[0.0, 1.0], [0.0, 0.0]]),
                                 np.array([[np.nan, 0.0], [0.0, 1.0]])])
def test_eigs_reject_bad_input(bad):
    with pytest.raises(ValueError):
        spectral.eigenvalues(bad)


def test_alignment_basics():
    y = np.array([1, -1, 1, -1])
    assert spectral.alignment(y, y) == pytest.approx(1.0)
    assert spectral.alignment(-3 * y, y) == pytest.approx(1.0)
    assert spectral.alignment(np.ones(4), y) == 0.0
    with pytest.raises(ValueError):
        spectral.alignment(np.zeros(4), y)


@given(v=arrays(np.float64, 12, elements=st.floats(-10, 10)).filter(lambda v: np.linalg.norm(v) > 1e-3),
       signs=arrays(np.int8, 12, elements=st.sampled_from([-1, 1])))
def test_alignment_in_unit_interval(v, signs):
    a = spectral.alignment(v, signs)
    assert -1e-12 <= a <= 1 + 1e-12


def test_degenerate_top_uses_eigenspace():
    y = np.array([1, 1, -1, -1])
    # top eigenvalue 2 is double with eigenspace spanned by e0 and e2
    M = np.diag([2.0, 1.0, 2.0, 0.0])
    w, V = spectral.symmetric_eigs(M)
    assert spectral.top_eigenspace(w, V).shape[1] == 2
    assert spectral.top_alignment(w, V, y) == pytest.approx(0.5)


def test_empirical_stieltjes():
    lam = np.array([1.0, 2.0, 4.0])
    s = -1 + 0.5j
    assert spectral.empirical_stieltjes(lam, s) == pytest.approx(np.mean(1 / (lam - s)))
    out = spectral.empirical_stieltjes(lam, np.array([0.5, 3.0]))
    assert out.shape == (2,)
    with pytest.raises(ValueError):
        spectral.empirical_stieltjes(lam, 2.0)


def test_histogram_masses_sum_to_one(rng):
    h = spectral.spectral_histogram(rng.standard_normal(500), 25)
    assert len(h.edges) == 26
    assert h.masses.sum() == pytest.approx(1.0)
    flat = spectral.spectral_histogram(np.full(5, 3.0), 4)
    assert flat.masses.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        spectral.spectral_histogram(np.array([]), 4)


def test_total_variation_of_matching_uniform():
    rng = np.random.default_rng(7)
    h = spectral.spectral_histogram(rng.uniform(0, 1, 200_000), np.linspace(0, 1, 11))
    tv = spectral.total_variation(h, lambda x: np.ones_like(x))
    assert tv < 0.01
    far = spectral.total_variation(h, lambda x: 2.0 * (x < 0.5))
    assert far == pytest.approx(0.5, abs=0.01)


def test_spectral_report_fields():
    m = ModelParams(n=60, p=120, eta=4.0)
    g = gen_graph(m)
    S = ops.normalize_adjacency(g.adjacency, m.q)
    Xt = S.matrix @ g.features
    rep = spectral.spectral_report(Xt @ Xt.T, g.labels, S.recipe, bins=10)
    assert rep.eigenvalues.shape == (60,) and rep.histogram is not None
    assert rep.source_recipe == S.recipe and not rep.symmetrized
    assert 0 <= rep.alignment <= 1


def test_spectral_cluster_symmetrizes_directed():
    m = ModelParams(n=80, p=10, eta=0.0, directed=True)
    g = gen_graph(m)
    S = ops.normalize_adjacency(g.adjacency, m.q)
    rep = spectral.spectral_cluster_baseline(S, g.labels)
    assert rep.symmetrized == (not S.symmetric)
    und = gen_graph(m.replace(directed=False))
    assert not spectral.spectral_cluster_baseline(
        ops.normalize_adjacency(und.adjacency, m.q), und.labels).symmetrized


def test_svd_alignment_matches_gram_eigs(rng):
    y = np.repeat([1, -1], 20)
    Y = rng.standard_normal((40, 15)) + 0.8 * np.outer(y, np.ones(15)) / 4
    w, V = spectral.symmetric_eigs(Y @ Y.T)
    assert spectral.top_eigvec_alignment_of_gram(Y, y) == pytest.approx(
        spectral.top_alignment(w, V, y), abs=1e-10)


def test_open_ends_account_for_tail_mass():
    from scipy.stats import norm
    rng = np.random.default_rng(3)
    h = spectral.spectral_histogram(rng.standard_normal(100_000), np.linspace(-1, 1, 21))
    # samples outside the edges are dropped by np.histogram: renormalised on [-1, 1]
    inside = norm.cdf(1) - norm.cdf(-1)
    closed = spectral.total_variation(h, norm.pdf)
    assert closed == pytest.approx(0.5 * (1 - inside), abs=0.01)
    folded = spectral.Histogram(h.edges, h.density * inside)
    folded.density[0] += (1 - inside) / 2 / 0.1
    folded.density[-1] += (1 - inside) / 2 / 0.1
    assert spectral.total_variation(folded, norm.pdf, open_ends=True) < 0.01
