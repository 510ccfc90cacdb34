import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from randgcn import operators as ops
from randgcn import rgcn, rmt
from randgcn.spectral import eigenvalues, empirical_stieltjes, symmetric_eigs, top_alignment
from randgcn.synthgen import ModelParams, gen_graph, gen_gmm_features, gen_labels

NU = 0.1875  # q = 0.5

# roots found by scipy.optimize.root (hybrid Powell) on the real 4-d system
ORACLE_ROOTS = [
    (1 + 1j, 5.0, 0.017720336173424427 - 0.013321823965282635j,
     0.0909501936384797 - 0.07690687222279184j),
    (-1 + 0.001j, 5.0, -0.07260326277947829 - 0.00018459315880322422j,
     -0.2813182359298983 - 0.0005542784197660465j),
    (0.3 + 0j, 2.0, 0.16231615659055634, 0.38753560276372506),
]


def params(c=5.0, gamma_f=4.0, gamma_g=1.0):
    return rmt.RmtParams(gamma_f, gamma_g, NU, c)


@pytest.mark.parametrize("z,c,d1,d2", ORACLE_ROOTS)
def test_fixed_point_matches_independent_root(z, c, d1, d2):
    sol = rmt.solve_fixed_point(z, params(c))
    assert abs(sol.delta1 - d1) < 1e-10 * max(1, abs(d1))
    assert abs(sol.delta2 - d2) < 1e-10 * max(1, abs(d2))
    assert sol.residual < 1e-12 and sol.iterations <= 10_000


def test_large_z_asymptotics():
    z, P = 1e6, params()
    sol = rmt.solve_fixed_point(z, P)
    assert sol.delta1 == pytest.approx(NU / (P.c * z), rel=1e-2)
    assert sol.delta2 == pytest.approx(NU / z, rel=1e-2)
    assert sol.zeta == pytest.approx(1 / z, rel=1e-2)


def test_large_c_decouples():
    z = 0.7
    sol = rmt.solve_fixed_point(z, params(c=1e12))
    assert abs(sol.delta1) < 1e-10
    # z d^2 + z d - nu = 0, positive root
    d2 = (-z + math.sqrt(z * z + 4 * z * NU)) / (2 * z)
    assert sol.delta2.real == pytest.approx(d2, rel=1e-10)


def test_density_mass_on_wide_grid():
    x = np.linspace(-1.0, 5.0, 6001)
    f = rmt.theoretical_density(x, 1e-3, params(gamma_g=0.0))
    assert abs(np.trapezoid(f, x) - 1) < 0.02
    assert f.min() >= -1e-6


def test_density_mass_leaks_below_zero_on_narrow_grid():
    # the hard edge at 0 carries an x^(-1/2) singularity: Cauchy smoothing puts
    # a few percent of the mass at x < 0, which a [0, 4] grid cannot see
    P = params(gamma_g=0.0)
    x = np.linspace(0.0, 4.0, 4001)
    inside = np.trapezoid(rmt.theoretical_density(x, 1e-3, P), x)
    xl = np.linspace(-1.0, 0.0, 4001)
    outside = np.trapezoid(rmt.theoretical_density(xl, 1e-3, P), xl)
    assert 0.95 < inside < 0.98
    assert abs(inside + outside - 1) < 0.01


def test_density_stable_under_epsilon_halving():
    P = params()
    x = np.linspace(0.2, 0.75, 23)  # bulk interior; the edge sits near 0.85
    f1 = rmt.theoretical_density(x, 4e-3, P)
    f2 = rmt.theoretical_density(x, 2e-3, P)
    assert np.max(np.abs(f1 - f2) / f1) < 0.01


def _propagated(n, p, seed, q=0.5, eta=4.0, mu=2.0):
    m = ModelParams(n=n, p=p, q=q, eta=eta, mu_norm=mu, seed=seed)
    g = gen_graph(m)
    return m, g, ops.normalize_adjacency(g.adjacency, q).matrix @ g.features


def test_stieltjes_matches_empirical_at_one_plus_i():
    m, g, Xt = _propagated(1000, 2000, 0)
    lam = eigenvalues(Xt @ Xt.T)
    z = 1 + 1j  # resolvent argument; spectral coordinate is -z
    emp = np.mean(1 / (lam + z))
    th = rmt.stieltjes(-z, rmt.RmtParams.from_model(m))
    assert abs(th - emp) / abs(emp) < 0.03


def test_stieltjes_real_positive_without_signal():
    m = rmt.stieltjes(-0.8, params(gamma_f=0.0, gamma_g=0.0))
    assert isinstance(m, complex) and m.imag == 0 and m.real > 0


def test_stieltjes_imaginary_part_positive():
    x = np.linspace(0, 4, 201)
    assert np.all(rmt.stieltjes(x + 4e-3j, params()).imag >= 0)


def test_density_vanishes_beyond_spectrum():
    m, g, Xt = _propagated(200, 1000, 0)
    top = eigenvalues(Xt @ Xt.T)[-1]
    x = np.linspace(top + 1.0, top + 3.0, 50)
    assert np.all(rmt.theoretical_density(x, 1e-3, rmt.RmtParams.from_model(m)) < 1e-3)


def test_corollary_coefficients():
    P = params(gamma_f=0.0, gamma_g=0.0)
    assert rmt.corollary_equivalent(0.5, P).spike == 0
    with pytest.raises(ValueError, match="gamma_g"):
        rmt.corollary_equivalent(0.5, params(gamma_g=1.0))


def test_rank_two_reduces_to_corollary():
    m = ModelParams(n=50, p=100, eta=0.0, mu_norm=3.0)
    g = gen_graph(m)
    P = rmt.RmtParams.from_model(m)
    eq = rmt.RankTwoEquivalent.from_operator(ops.normalize_adjacency(g.adjacency, m.q), g.labels, P)
    phi = eq.U[:, 1]
    for z in (0.3, 1 + 0.5j):
        co = rmt.corollary_equivalent(z, P)
        want = co.bulk * np.eye(50) - co.spike * np.outer(phi, phi)
        assert np.linalg.norm(eq.matrix(z) - want, 2) < 1e-8


def test_rank_two_structure():
    P = rmt.RmtParams(4.0, 0.25 * 4, NU, 5.0)
    B = rmt.coupling_matrix(P)
    assert np.array_equal(B, B.T)
    r = 4.0 / 5.0
    np.testing.assert_allclose(B, [[1.0 * (r + 1), r + 1], [r + 1, r]])
    eq = rmt.RankTwoEquivalent.build(np.array([1, -1, 1, -1]), np.zeros(4), P)
    np.testing.assert_array_equal(eq.T, np.diag([1.0, NU]))


@pytest.mark.parametrize("eta", [0.0, 4.0])
def test_rank_two_label_quadratic_form(eta):
    rel = []
    for z in (1.0, 0.3):
        emp, th = [], []
        for seed in range(3):
            m, g, Xt = _propagated(1000, 2000, seed, eta=eta)
            S = ops.normalize_adjacency(g.adjacency, 0.5)
            eq = rmt.RankTwoEquivalent.from_operator(S, g.labels, rmt.RmtParams.from_model(m))
            yb = g.normalized_labels
            emp.append(yb @ np.linalg.solve(Xt @ Xt.T + z * np.eye(1000), yb))
            th.append(eq.quadratic_form(yb, z).real)
        rel.append(abs(np.mean(th) - np.mean(emp)) / np.mean(emp))
    assert max(rel) < 0.08


def test_nonconvergence_and_blowup():
    with pytest.raises(rmt.NonConvergenceError) as err:
        rmt.solve_fixed_point(-0.3 + 1e-9j, params(), max_iter=3)
    assert err.value.residual > 1e-12
    with pytest.raises(rmt.FixedPointBlowupError):
        rmt.solve_fixed_point(0.0, rmt.RmtParams(1.0, 0.0, 1e-40, 1.0))


@pytest.mark.parametrize("kw", [dict(nu=0.3), dict(nu=0.0), dict(c=0.0), dict(gamma_f=-1.0)])
def test_rmt_params_validation(kw):
    base = dict(gamma_f=1.0, gamma_g=0.0, nu=NU, c=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        rmt.RmtParams(**base)


zs = st.complex_numbers(min_magnitude=0.05, max_magnitude=20, allow_nan=False,
                        allow_infinity=False).filter(lambda z: abs(z.imag) > 1e-2)


@given(z=zs, c=st.floats(0.5, 10))
def test_solution_invariants(z, c):
    P = params(c)
    sol = rmt.solve_fixed_point(z, P)
    again = rmt.solve_fixed_point(z, P)
    assert sol == again
    conj = rmt.solve_fixed_point(z.conjugate(), P)
    assert abs(conj.delta1 - sol.delta1.conjugate()) <= 1e-9 * max(1, abs(sol.delta1))
    assert abs(conj.delta2 - sol.delta2.conjugate()) <= 1e-9 * max(1, abs(sol.delta2))
    d1, d2 = sol.delta1, sol.delta2
    den = NU + z * (1 + d1) * (1 + d2)
    assert abs(NU * (1 + d1) / den / c - d1) <= 1e-11 * max(1, abs(d1))
    assert abs(NU * (1 + d2) / den - d2) <= 1e-11 * max(1, abs(d2))
    zeta = (1 + d2) / (NU + z * (1 + d1) * (1 + d2))
    assert abs(sol.zeta - zeta) <= 1e-12 * abs(zeta)
    assert abs(d1 - d2 * (1 + d1) / (c * (1 + d2))) <= 1e-10 * max(1, abs(d1))


def test_gram_fixed_point_zero_spectrum():
    out = rmt.gram_resolvent_fixed_point(np.zeros(10), 2.0)
    assert out.delta == 0 and out.trace == pytest.approx(0.5)


@pytest.mark.parametrize("lam,z,d", [(1.5, 0.7, 40), (0.2, 2.0, 10), (3.0, 1.0, 200)])
def test_gram_fixed_point_constant_spectrum(lam, z, d):
    n = 20
    k = n / d
    b = lam + z - k * lam
    delta = (-b + math.sqrt(b * b + 4 * z * k * lam)) / (2 * z)
    out = rmt.gram_resolvent_fixed_point(np.full(n, lam), z, n_features=d)
    assert abs(out.delta - delta) < 1e-10
    assert out.trace == pytest.approx(1 / (lam / (1 + delta) + z), rel=1e-10)


def test_gram_fixed_point_matches_monte_carlo_trace():
    act = rgcn.normalize_activation("erf")
    m = ModelParams(n=1000, p=2000, q=0.5, eta=4.0, mu_norm=2.0)
    g = gen_graph(m)
    Xt = rgcn.propagate(ops.adjacency_plus_identity(g.adjacency, 0.5), g.features)
    d, z = 5000, 1.0
    G = rgcn.gram(act(Xt @ rgcn.sample_weights(m.p, d, 0)))
    emp = np.mean(1 / (eigenvalues(G) + z))
    th = rmt.gram_resolvent_fixed_point(eigenvalues(rgcn.expected_gram(Xt, act)), z, n_features=d)
    assert abs(th.trace.real - emp) / emp < 0.03


def test_kernel_expansion_linear_substitution(rng):
    n, p, c = 6, 12, 2.0
    y = np.array([1, -1, 1, 1, -1, -1])
    Z = rng.standard_normal((n, p))
    K = rmt.kernel_expansion(3.0, c, p, rmt.Kappa.linear()).matrix(y, Z)
    yb = y / math.sqrt(n)
    want = 1.5 * np.outer(yb, yb) + Z @ Z.T + (1 - 1.5) * np.eye(n)
    np.testing.assert_allclose(K, want, atol=1e-13)


def test_kappa_numerical_derivatives():
    k = rmt.Kappa.from_function(math.exp)
    ref = rmt.Kappa.exponential()
    assert k.k0 == ref.k0 and k.k1 == pytest.approx(ref.k1)
    assert k.d1 == pytest.approx(1, rel=1e-7) and k.d2 == pytest.approx(1, rel=1e-4)
    with pytest.raises(ValueError):
        rmt.Kappa(float("nan"), 0, 0, 0)


def _exp_kernel_case():
    m = ModelParams(n=1000, p=2000, mu_norm=2.0, eta=0.0)
    y = gen_labels(m)
    X = gen_gmm_features(y, m)
    exp = rmt.kernel_expansion(m.gamma_f, m.c, m.p, rmt.Kappa.exponential())
    return m, y, X, exp, exp.matrix(y, rmt.noise_component(X, y, m.mu()))


def test_kernel_expansion_exponential():
    m, y, X, exp, Kt = _exp_kernel_case()
    K = np.exp(X @ X.T)
    assert np.linalg.norm(K - Kt, 2) / np.linalg.norm(Kt, 2) < 0.1


def test_kernel_expansion_centering_removes_constant_terms():
    m, y, X, exp, Kt = _exp_kernel_case()
    n = m.n
    P = np.eye(n) - 1 / n
    Z = rmt.noise_component(X, y, m.mu())
    yb = y / math.sqrt(n)
    rest = exp.noise_coef * P @ (exp.signal_coef / exp.noise_coef * np.outer(yb, yb) + Z @ Z.T) @ P
    diff = P @ Kt @ P - rest - exp.identity_coef * P
    assert np.linalg.norm(diff, 2) < 1e-9 * np.linalg.norm(Kt, 2)


def test_signal_alignment_exceeds_pure_noise():
    wins = []
    for seed in range(10):
        out = []
        for eta in (4.0, 0.0):
            m, g, Xt = _propagated(200, 1000, seed, eta=eta)
            ev, V = symmetric_eigs(Xt @ Xt.T)
            out.append(top_alignment(ev, V, g.labels))
        assert out[0] > 0
        wins.append(out[0] > out[1])
    assert all(wins)
