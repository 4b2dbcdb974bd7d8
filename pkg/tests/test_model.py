import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ckdyn.errors import ConfigError, OrderTooLargeError
from ckdyn.model import (ConfinementSpec, DisorderTensor, ModelSpec, NuPolynomial, covariance_kernel,
                         covariance_matrix, disorder_norm_estimate, f_prime, field_from_couplings, grad_field,
                         hamiltonian_eval, multiplicity_factor, nu_eval, sample_disorder)


def test_nu_pure_p3():
    nu = ModelSpec.pure(3).nu
    assert nu_eval(nu, 1.0, 0) == pytest.approx(1 / 6)
    assert nu.psi(1.0) == pytest.approx(1.5)
    assert nu_eval(nu, 1.0, 1) == pytest.approx(0.5)
    assert nu_eval(nu, 1.0, 2) == pytest.approx(1.0)
    assert nu_eval(nu, 2.0, 3) == pytest.approx(1.0)


def test_nu_beta_squared_scaling():
    spec = ModelSpec(a=(0.0, 1.0, 1.0), beta=2.0)
    assert nu_eval(spec.nu, 1.0, 2) == pytest.approx(8.0)


def test_nu_rejects_order_4():
    with pytest.raises(ValueError):
        nu_eval(ModelSpec.pure(3).nu, 1.0, 4)


@given(st.lists(st.floats(0, 3), min_size=1, max_size=4), st.floats(0, 5))
def test_nu_monotone_nonnegative(coeffs, r):
    nu = NuPolynomial.from_coefficients([0.0] + coeffs)
    for order in (0, 1, 2):
        v = nu_eval(nu, r, order)
        assert v >= 0
        assert nu_eval(nu, r + 0.1, order) >= v - 1e-12


def test_f_prime():
    conf = ConfinementSpec(kappa=5, r=2)
    assert f_prime(conf, 1.0) == 0
    assert f_prime(conf, 1.2) == pytest.approx(2.0)
    assert f_prime(ConfinementSpec.constant(1.5), 7.3) == 1.5
    assert f_prime(ConfinementSpec(kappa=1, r=4), 2.0) == pytest.approx(4.0)


@pytest.mark.parametrize("kwargs", [
    dict(a=(0.0, 0.0)),
    dict(a=(1.0,), N=0),
    dict(a=(1.0,), beta=-1.0),
    dict(a=(0.0, 0.0, 0.0, 1.0), confinement=ConfinementSpec(r=2)),  # r must exceed m/2
    dict(a=(1.0,), disorder_mode="bogus"),
])
def test_model_spec_invariants(kwargs):
    with pytest.raises(ConfigError):
        ModelSpec(**kwargs)


def test_confinement_rejects_odd_exponent():
    with pytest.raises(ConfigError):
        ConfinementSpec(r=3)


@pytest.mark.parametrize("idx,c", [((0, 1, 2), 1), ((0, 0, 1), 2), ((0, 0, 0), 6), ((3, 1, 3, 3), 6)])
def test_multiplicity_factor(idx, c):
    assert multiplicity_factor(idx) == c


def test_disorder_symmetric_and_deterministic():
    spec = ModelSpec(a=(0.3, 0.5, 1.0), N=6)
    J1 = sample_disorder(spec, 11)
    J2 = sample_disorder(spec, 11)
    for p, T in J1.couplings.items():
        np.testing.assert_array_equal(T, J2.couplings[p])
        for perm in itertools.permutations(range(p)):
            np.testing.assert_array_equal(T, np.transpose(T, perm))
    assert not np.array_equal(J1.couplings[3], sample_disorder(spec, 12).couplings[3])


def test_disorder_multiset_view():
    spec = ModelSpec.pure(3, N=4)
    J = sample_disorder(spec, 0)
    entries = list(J.multisets(3))
    assert len(entries) == math.comb(4 + 2, 3)
    idx, v = entries[5]
    assert J.coupling(idx[::-1]) == v


@pytest.mark.parametrize("p,N", [(1, 3), (2, 3), (3, 3)])
def test_disorder_variance_classes(p, N):
    """Sample variance of every multiset matches c N^(1-p) within 4 standard errors."""
    n = 10_000
    spec = ModelSpec.pure(p, N=N)
    samples = np.stack([sample_disorder(spec, seed).couplings[p] for seed in range(n)])
    for idx in itertools.combinations_with_replacement(range(N), p):
        target = multiplicity_factor(idx) * float(N) ** (1 - p)
        vhat = np.mean(samples[(slice(None),) + idx] ** 2)
        se = target * math.sqrt(2.0 / n)
        assert abs(vhat - target) <= 4 * se, (idx, vhat, target)
    # distinct multisets are uncorrelated
    if p == 3:
        a = samples[:, 0, 1, 2]
        b = samples[:, 0, 0, 1]
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(n)


def test_exact_mode_rejects_order_4():
    spec = ModelSpec(a=(0, 0, 0, 1.0), N=3, confinement=ConfinementSpec(r=4))
    with pytest.raises(OrderTooLargeError):
        sample_disorder(spec, 0)
    J = sample_disorder(ModelSpec(a=(0, 0, 0, 1.0), N=3, confinement=ConfinementSpec(r=4),
                                  disorder_mode="decoupled"), 0)
    assert J.mode == "decoupled" and J.couplings[4].shape == (3,) * 4


def test_grad_field_single_term():
    spec = ModelSpec.pure(2, N=1)
    J = DisorderTensor.from_multisets(1, {2: {(0, 0): 0.7}})
    np.testing.assert_allclose(grad_field(spec, J, [2.0]), [1.4])
    assert hamiltonian_eval(spec, J, [3.0]) == pytest.approx(-0.7 * 9)


def test_grad_field_p1_is_state_independent():
    spec = ModelSpec.pure(1, N=5)
    J = sample_disorder(spec, 3)
    g1 = grad_field(spec, J, np.zeros(5))
    g2 = grad_field(spec, J, np.arange(5.0))
    np.testing.assert_array_equal(g1, g2)
    np.testing.assert_array_equal(g1, J.couplings[1])


def test_grad_field_includes_beta():
    spec = ModelSpec(a=(0.0, 0.0, 1.0), N=4)
    hot = ModelSpec(a=(0.0, 0.0, 1.0), N=4, beta=0.5)
    J = sample_disorder(spec, 0)
    x = np.linspace(-1, 1, 4)
    np.testing.assert_allclose(grad_field(hot, J, x), 0.5 * grad_field(spec, J, x))


def test_grad_field_rejects_nonfinite():
    spec = ModelSpec.pure(2, N=2)
    J = sample_disorder(spec, 0)
    with pytest.raises(ValueError):
        grad_field(spec, J, [np.nan, 1.0])


def test_grad_field_independent_of_enumeration_order():
    N = 4
    spec = ModelSpec(a=(0.2, 0.7, 1.0), N=N)
    J = sample_disorder(spec, 5)
    rng = np.random.default_rng(0)
    tables = {}
    for p in (1, 2, 3):
        items = list(J.multisets(p))
        rng.shuffle(items)
        tables[p] = dict(items)
    J2 = DisorderTensor.from_multisets(N, tables)
    x = rng.standard_normal(N)
    np.testing.assert_allclose(grad_field(spec, J2, x), grad_field(spec, J, x), rtol=1e-12, atol=1e-14)


def _grad_by_loops(spec, J, x):
    """Ordered-tuple sum straight from the definition."""
    N = len(x)
    G = np.zeros(N)
    for p, T in J.couplings.items():
        for i in range(N):
            for tup in itertools.product(range(N), repeat=p - 1):
                G[i] += spec.a[p - 1] / math.factorial(p - 1) * T[(i,) + tup] * np.prod(x[list(tup)])
    return spec.beta * G


def test_grad_field_matches_explicit_sum():
    spec = ModelSpec(a=(0.4, -0.6, 1.1), N=4, beta=0.8)
    J = sample_disorder(spec, 9)
    x = np.random.default_rng(1).standard_normal(4)
    np.testing.assert_allclose(grad_field(spec, J, x), _grad_by_loops(spec, J, x), rtol=1e-12)


def test_packed_p3_field_matches_dense():
    spec = ModelSpec(a=(0.3, 0.0, 1.2), N=7, beta=0.9)
    J = sample_disorder(spec, 8)
    x = np.random.default_rng(2).standard_normal(7)
    dense = field_from_couplings(spec.a, spec.beta, J.couplings, x)
    np.testing.assert_allclose(grad_field(spec, J, x), dense, rtol=1e-12, atol=1e-14)


def test_field_with_only_zero_coefficients():
    J = DisorderTensor.from_multisets(3, {2: {(0, 1): 1.0}})
    np.testing.assert_array_equal(field_from_couplings((1.0, 0.0), 1.0, J.couplings, np.ones(3)), 0.0)


def test_hamiltonian_zero_state():
    spec = ModelSpec(a=(0.0, 1.0, 1.0), N=3)
    assert hamiltonian_eval(spec, sample_disorder(spec, 0), np.zeros(3)) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_gradient_identity(seed):
    """G = -1/2 grad H, checked by centred differences with O(h^2) error."""
    spec = ModelSpec(a=(0.5, 1.0, 0.8), N=5, beta=1.3)
    J = sample_disorder(spec, seed)
    x = np.random.default_rng(100 + seed).standard_normal(5)
    G = grad_field(spec, J, x)
    errs = []
    for h in (1e-2, 5e-3):
        fd = np.empty(5)
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            fd[i] = -0.5 * (hamiltonian_eval(spec, J, x + e) - hamiltonian_eval(spec, J, x - e)) / (2 * h)
        errs.append(np.max(np.abs(fd - G)))
    # H is a cubic polynomial: the centred difference error is exactly quadratic in h
    assert errs[0] < 1e-3
    assert errs[1] == pytest.approx(errs[0] / 4, rel=1e-3, abs=1e-12)


def test_covariance_kernel_entries():
    spec = ModelSpec(a=(0.3, 1.0, 0.7), N=4)
    x = np.array([1.0, -0.5, 0.2, 2.0])
    y = np.array([0.3, 0.1, -1.0, 0.5])
    nu = spec.nu
    q = x @ y / 4
    assert covariance_kernel(spec, x, y, 2, 2) == pytest.approx(nu(q, 1) + x[2] * y[2] / 4 * nu(q, 2))
    assert covariance_kernel(spec, x, y, 0, 3) == pytest.approx(x[3] * y[0] / 4 * nu(q, 2))
    K = x @ x / 4
    assert covariance_kernel(spec, x, x, 1, 1) == pytest.approx(nu(K, 1) + x[1] ** 2 / 4 * nu(K, 2))
    M = covariance_matrix(spec, x, y)
    for i in range(4):
        for j in range(4):
            assert M[i, j] == pytest.approx(covariance_kernel(spec, x, y, i, j))
    with pytest.raises(IndexError):
        covariance_kernel(spec, x, y, 4, 0)


def test_covariance_kernel_p1_identity():
    spec = ModelSpec.pure(1, N=3)
    np.testing.assert_allclose(covariance_matrix(spec, np.ones(3), np.arange(3.0)), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5), st.integers(1, 4))
def test_kernel_positive_semidefinite(seed, N, npts):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(a=tuple(rng.uniform(-1, 1, 3)), N=N, beta=float(rng.uniform(0.1, 2)))
    pts = rng.standard_normal((npts, N)) * rng.uniform(0.2, 2)
    big = np.block([[covariance_matrix(spec, pts[a], pts[b]).T for b in range(npts)] for a in range(npts)])
    # big[(a,i),(b,j)] = E[G^i(x_a) G^j(x_b)]
    np.testing.assert_allclose(big, big.T, atol=1e-12)
    assert np.linalg.eigvalsh(big).min() >= -1e-8 * np.trace(big)


def test_norm_estimate_p1_exact():
    spec = ModelSpec.pure(1, N=7)
    J = sample_disorder(spec, 2)
    assert disorder_norm_estimate(spec, J, 1) == pytest.approx(np.linalg.norm(J.couplings[1]) / math.sqrt(7))


@pytest.mark.parametrize("N", [10, 50])
def test_norm_estimate_p2_singular_value(N):
    spec = ModelSpec.pure(2, N=N)
    J = sample_disorder(spec, 4)
    top = np.linalg.svd(J.couplings[2], compute_uv=False)[0]
    assert disorder_norm_estimate(spec, J, 500) == pytest.approx(top, rel=1e-6)


def test_norm_estimate_monotone():
    spec = ModelSpec(a=(0.0, 1.0, 1.0), N=8)
    J = sample_disorder(spec, 1)
    vals = [disorder_norm_estimate(spec, J, k, seed=3) for k in range(1, 12)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
