import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blesskit.bless import BlessParams, bless
from blesskit.errors import InvalidArgumentError, NumericError, ResourceLimitError
from blesskit.falkon import (
    FalkonModel,
    FalkonSystem,
    KernelExpansion,
    build_preconditioner,
    condition_number,
    conjugate_gradient,
    falkon_train,
    krr_direct,
    materialize_W,
    nystrom_krr_direct,
    predict,
    preconditioner_weights,
)
from blesskit.kernels import Dataset, KernelSpec
from blesskit.leverage import Dictionary

from oracles import gaussian_gram, krr_dense, nystrom_normal_residual


def random_psd(rng, m, rank=None):
    G = rng.standard_normal((m, rank or m))
    return G @ G.T + (1e-3 * np.eye(m) if rank is None else 0.0)


def test_identity_kernel_factors():
    f = build_preconditioner(np.eye(5), np.ones(5), 0.3, n=10)
    assert f.path == "cholesky" and f.Q is None
    np.testing.assert_allclose(f.T, np.eye(5), atol=1e-15)
    np.testing.assert_allclose(f.R, np.sqrt(1 / 5 + 0.3) * np.eye(5), atol=1e-15)


def test_rank_one_factors():
    f = build_preconditioner(np.ones((4, 4)), np.ones(4), 0.2, n=4)
    assert f.path == "eigen" and f.rank == 1
    np.testing.assert_allclose(f.T, [[2.0]], atol=1e-12)
    np.testing.assert_allclose(f.R, [[np.sqrt(1.2)]], atol=1e-12)


def _identity_residual(K, w, lam, n):
    f = build_preconditioner(K, w, lam, n)
    M = K.shape[0]
    B = f.dense()
    H = K @ np.diag(1 / w) @ K / M + lam * K
    return f, n * B.T @ H @ B


def test_generalized_identity_full_rank(rng):
    K = random_psd(rng, 8)
    w = rng.uniform(0.5, 2.0, 8)
    f, G = _identity_residual(K, w, 0.05, 30)
    assert f.path == "cholesky"
    assert np.linalg.norm(G - np.eye(8), 2) <= 1e-8


def test_generalized_identity_rank_deficient(rng):
    K = random_psd(rng, 10, rank=4)
    w = rng.uniform(0.5, 2.0, 10)
    f, G = _identity_residual(K, w, 0.05, 30)
    assert f.path == "eigen" and f.rank == 4
    assert np.linalg.norm(G - np.eye(4), 2) <= 1e-8


def test_factor_invariants(rng):
    K = random_psd(rng, 9, rank=5)
    w = rng.uniform(0.5, 2.0, 9)
    lam = 0.01
    f = build_preconditioner(K, w, lam, 40)
    Q = f.q_matrix()
    Ks = K / np.sqrt(np.outer(w, w))
    assert np.linalg.norm(Q.T @ Q - np.eye(f.rank)) <= 1e-8
    assert np.linalg.norm(Q @ f.T.T @ f.T @ Q.T - Ks) <= 1e-8 * np.linalg.norm(K)
    assert np.linalg.norm(f.R.T @ f.R - (f.T @ f.T.T / 9 + lam * np.eye(f.rank))) <= 1e-10
    v = rng.standard_normal(f.rank)
    u = rng.standard_normal(9)
    assert abs(u @ f.apply(v) - v @ f.apply_t(u)) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(f.dense()) * np.linalg.norm(v) + 1e-12


def test_preconditioner_input_errors():
    with pytest.raises(InvalidArgumentError):
        build_preconditioner(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2), 0.1, 4)
    with pytest.raises(InvalidArgumentError):
        build_preconditioner(np.eye(2), np.array([1.0, -1.0]), 0.1, 4)
    with pytest.raises(NumericError):
        build_preconditioner(np.zeros((3, 3)), np.ones(3), 0.1, 4)


def test_scalar_system_closed_form():
    data = Dataset(np.array([[0.3]]), np.array([2.5]))
    model = falkon_train(data, KernelSpec.gaussian(1.0), Dictionary.full(1, 0.1), 0.1, 1)
    assert model.alpha[0] == pytest.approx(2.5 / 1.1, rel=1e-12)


def test_zero_labels_give_zero_coefficients(small_gaussian):
    data, spec = small_gaussian
    data = Dataset(data.points, np.zeros(data.n))
    d = Dictionary.full(data.n, 0.1)
    model = falkon_train(data, spec, d, 0.01, 5, keep_snapshots=True)
    for snap in model.snapshots:
        np.testing.assert_array_equal(snap, 0.0)
    np.testing.assert_array_equal(nystrom_krr_direct(data, spec, d, 0.01), 0.0)
    np.testing.assert_array_equal(krr_direct(data, spec, 0.01), 0.0)


def test_training_errors(small_gaussian):
    data, spec = small_gaussian
    d = Dictionary.full(data.n, 0.1)
    with pytest.raises(InvalidArgumentError):
        falkon_train(Dataset(data.points), spec, d, 0.1, 3)
    with pytest.raises(InvalidArgumentError):
        falkon_train(data, spec, d, 0.1, 0)
    with pytest.raises(InvalidArgumentError):
        falkon_train(data, spec, Dictionary.empty(0.1), 0.1, 3)


def test_nonfinite_cg_raises():
    with pytest.raises(NumericError):
        conjugate_gradient(lambda v: np.full_like(v, np.nan), np.ones(3), 2)


def test_cg_tolerance_stops_updates():
    A = np.diag([1.0, 2.0, 3.0])
    state = conjugate_gradient(lambda v: A @ v, np.ones(3), 10, tol=1e-12)
    assert state.iteration == 10
    np.testing.assert_allclose(state.beta, [1, 0.5, 1 / 3], rtol=1e-12)


def test_full_set_matches_krr(rng):
    X = rng.standard_normal((60, 2))
    data = Dataset(X, np.sin(2 * X[:, 0]))
    spec = KernelSpec.gaussian(1.0)
    lam = 1e-3
    model = falkon_train(data, spec, Dictionary.full(60, lam), lam, 60)
    c = krr_direct(data, spec, lam)
    np.testing.assert_allclose(c, krr_dense(gaussian_gram(X), data.labels, lam), rtol=1e-8, atol=1e-10)
    ref = gaussian_gram(X) @ c
    assert np.sqrt(np.mean((predict(model, X) - ref) ** 2)) <= 1e-6


def test_nystrom_full_set_equals_krr(rng):
    X = rng.standard_normal((30, 2))
    data = Dataset(X, rng.standard_normal(30))
    spec = KernelSpec.gaussian(1.5)
    a = nystrom_krr_direct(data, spec, Dictionary.full(30, 0.01), 0.01)
    c = krr_direct(data, spec, 0.01)
    K = gaussian_gram(X, sigma=1.5)
    np.testing.assert_allclose(K @ a, K @ c, atol=1e-8)


def test_nystrom_normal_equations(rng):
    X = rng.standard_normal((50, 3))
    data = Dataset(X, rng.standard_normal(50))
    J = rng.choice(50, 10, replace=False)
    a = nystrom_krr_direct(data, KernelSpec.gaussian(1.0), Dictionary(0.1, J, np.ones(10)), 0.05)
    K = gaussian_gram(X)
    assert nystrom_normal_residual(K[:, J], K[np.ix_(J, J)], a, data.labels, 0.05) <= 1e-8


def test_krr_multiply_back(rng):
    X = rng.standard_normal((30, 2))
    data = Dataset(X, rng.standard_normal(30))
    c = krr_direct(data, KernelSpec.gaussian(1.0), 0.02)
    assert np.linalg.norm((gaussian_gram(X) + 0.6 * np.eye(30)) @ c - data.labels) <= 1e-10


def test_krr_identity_gram():
    data = Dataset(np.eye(5), np.arange(5.0))
    c = krr_direct(data, KernelSpec.linear(data), 0.3)
    np.testing.assert_allclose(c, np.arange(5.0) / 2.5, rtol=1e-12)


def test_oracle_caps(small_gaussian):
    data, spec = small_gaussian
    d = Dictionary.full(data.n, 0.1)
    with pytest.raises(ResourceLimitError):
        krr_direct(data, spec, 0.1, oracle_cap=10)
    with pytest.raises(ResourceLimitError):
        nystrom_krr_direct(data, spec, d, 0.1, oracle_cap=10)
    with pytest.raises(ResourceLimitError):
        materialize_W(data, spec, d, 0.1, oracle_cap=10)


def test_predict_basics(rng):
    spec = KernelSpec.gaussian(1.0)
    centers = rng.standard_normal((4, 2))
    np.testing.assert_array_equal(predict(KernelExpansion(spec, centers, np.zeros(4)), rng.standard_normal((3, 2))), 0.0)
    one = KernelExpansion(spec, centers[:1], np.ones(1))
    assert predict(one, centers[:1])[0] == 1.0
    with pytest.raises(InvalidArgumentError):
        predict(one, np.ones((2, 3)))


def test_batch_prediction_equals_loop(rng):
    X = rng.standard_normal((50, 2))
    data = Dataset(X, X[:, 0])
    model = falkon_train(data, KernelSpec.gaussian(1.0), Dictionary(0.1, np.arange(0, 50, 5), np.ones(10)), 1e-3, 8)
    pts = rng.standard_normal((7, 2))
    loop = [predict(model, p[None, :])[0] for p in pts]
    np.testing.assert_allclose(predict(model, pts), loop, rtol=1e-12, atol=1e-13)


def _parity_instances(rng):
    X = rng.standard_normal((120, 2))
    data = Dataset(X, X[:, 1])
    spec = KernelSpec.gaussian(1.0)
    J = rng.choice(120, 20, replace=False)
    yield data, spec, bless(data, spec, 5e-2).final  # duplicates: eigen path
    yield data, spec, Dictionary(5e-2, J, np.full(20, 20 / 120))  # distinct: Cholesky path


def test_matrix_free_parity_and_symmetry(rng):
    paths = set()
    for data, spec, d in _parity_instances(rng):
        W = materialize_W(data, spec, d, 5e-2)
        np.testing.assert_array_equal(W, W.T)
        assert np.linalg.eigvalsh(W).min() > 0
        system = FalkonSystem(data, spec, d, 5e-2)
        paths.add(system.factors.path)
        for _ in range(3):
            beta = rng.standard_normal(W.shape[0])
            ref = W @ beta
            assert np.linalg.norm(system.matvec(beta) - ref) <= 1e-10 * np.linalg.norm(ref)
    assert paths == {"eigen", "cholesky"}


def test_explicit_W_matches_literal_formula(rng):
    # Literal B^T (K_nM^T K_nM + lam n K_MM) B from oracle Gram matrices.  On the
    # eigen path the K_MM product loses about cond(T)^2 digits, hence the looser bound.
    for (data, spec, d), tol in zip(_parity_instances(rng), (1e-6, 1e-11)):
        lam, n = 5e-2, data.n
        K = gaussian_gram(data.points)
        J = d.indices
        B = build_preconditioner(K[np.ix_(J, J)], preconditioner_weights(d, n), lam, n).dense()
        literal = B.T @ (K[:, J].T @ K[:, J] + lam * n * K[np.ix_(J, J)]) @ B
        W = materialize_W(data, spec, d, lam)
        assert np.linalg.norm(W - literal) <= tol * np.linalg.norm(literal)


def test_unit_weights_identity_kernel_world():
    # K_MM = I: W = ((1/n) K_nM^T K_nM + lam I) / (1/M + lam), symmetric PSD.
    n, M, lam = 6, 3, 0.1
    data = Dataset(np.eye(n), np.ones(n))
    J = np.arange(M)
    d = Dictionary(lam, J, np.full(M, M / n))
    W = materialize_W(data, KernelSpec.linear(data), d, lam)
    Knm = np.eye(n)[:, :M]
    expected = (Knm.T @ Knm / n + lam * np.eye(M)) / (1 / M + lam)
    np.testing.assert_allclose(W, expected, atol=1e-12)


def test_model_round_trip(small_gaussian):
    data, spec = small_gaussian
    model = falkon_train(data, spec, Dictionary(0.1, [0, 3, 3, 9], np.ones(4)), 1e-2, 4)
    again = FalkonModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(predict(again, data.points), predict(model, data.points))
    with pytest.raises(InvalidArgumentError):
        model.at_iteration(1)


def test_blocked_operator_matches_cached(rng, monkeypatch):
    import importlib

    falkon_mod = importlib.import_module("blesskit.falkon")
    X = rng.standard_normal((300, 2))
    data = Dataset(X, np.sin(X[:, 0]))
    spec = KernelSpec.gaussian(1.0)
    d = Dictionary(0.1, np.arange(0, 300, 10), np.ones(30))
    cached = falkon_train(data, spec, d, 1e-3, 10)
    monkeypatch.setattr(falkon_mod, "_CACHE_ENTRIES", 0)
    monkeypatch.setattr(falkon_mod, "_ROW_BLOCK", 64)
    blocked = falkon_train(data, spec, d, 1e-3, 10)
    # alpha itself may move ~1e-9 along near-null directions of K_MM that B amplifies
    ref = predict(cached, X)
    assert np.linalg.norm(predict(blocked, X) - ref) <= 1e-10 * np.linalg.norm(ref)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cg_energy_error_non_increasing(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 2))
    data = Dataset(X, rng.standard_normal(60))
    spec = KernelSpec.gaussian(1.0)
    J = rng.choice(60, 15, replace=False)
    d = Dictionary(0.1, J, rng.uniform(0.5, 2.0, 15))
    system = FalkonSystem(data, spec, d, 1e-2)
    W = np.column_stack([system.matvec(e) for e in np.eye(system.factors.rank)])
    b = system.rhs(data.labels)
    beta_star = np.linalg.solve(0.5 * (W + W.T), b)
    energies = []

    def record(state):
        e = state.beta - beta_star
        energies.append(e @ W @ e)

    conjugate_gradient(system.matvec, b, 10, callback=record)
    assert all(b2 <= a + 1e-9 * max(energies[0], 1.0) for a, b2 in zip(energies, energies[1:]))
