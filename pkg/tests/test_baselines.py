import numpy as np
import pytest

from blesskit.baselines import (
    exact_rls_dict,
    exact_rls_probabilities,
    two_pass,
    two_pass_probabilities,
    uniform_dict,
)
from blesskit.errors import InvalidArgumentError
from blesskit.falkon import falkon_train
from blesskit.kernels import Dataset, KernelSpec
from blesskit.leverage import dictionary_scores, exact_scores, prepare_generator

from helpers import identity_dataset, repeated_point_dataset
from oracles import gaussian_gram, leverage_dense


def test_uniform_full_multiset():
    data = Dataset(np.zeros((10, 1)))
    d = uniform_dict(data, 10, 0.1, seed=1)
    assert d.size == 10 and d.indices.min() >= 0 and d.indices.max() < 10
    np.testing.assert_allclose(d.weights, 1.0)
    np.testing.assert_allclose(d.probs, 0.1)


def test_uniform_without_replacement_full_set_is_identity():
    data = Dataset(np.zeros((7, 1)))
    d = uniform_dict(data, 7, 0.1, replace=False)
    np.testing.assert_array_equal(np.sort(d.indices), np.arange(7))


def test_uniform_determinism_and_range():
    data = Dataset(np.zeros((50, 1)))
    np.testing.assert_array_equal(uniform_dict(data, 20, 0.1, 3).indices, uniform_dict(data, 20, 0.1, 3).indices)
    for M in (0, 51):
        with pytest.raises(InvalidArgumentError):
            uniform_dict(data, M, 0.1)


def test_uniform_inclusion_frequency():
    n, M, seeds = 1000, 100, 50
    data = Dataset(np.zeros((n, 1)))
    counts = np.zeros(n)
    for s in range(seeds):
        counts += np.bincount(uniform_dict(data, M, 0.1, s).indices, minlength=n)
    p = M / n
    mean = seeds * p  # expected draws per index (with replacement, M draws of prob 1/n)
    sd = np.sqrt(seeds * M * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - mean) <= 5 * sd)


def test_two_pass_full_first_stage_equals_exact(rng):
    data = Dataset(rng.standard_normal((40, 2)))
    spec = KernelSpec.gaussian(1.0)
    p2 = two_pass_probabilities(data, spec, 0.05, M1=40)
    pe = exact_rls_probabilities(data, spec, 0.05)
    np.testing.assert_allclose(p2, pe, rtol=0, atol=1e-10)


def test_two_pass_rank_one_is_uniform():
    data = repeated_point_dataset(5)
    p = two_pass_probabilities(data, KernelSpec.gaussian(1.0), 0.1, M1=2)
    np.testing.assert_allclose(p, 0.2, rtol=1e-12)


def test_two_pass_accuracy():
    n, lam = 500, 1e-2
    data = Dataset(np.random.default_rng(20).standard_normal((n, 2)))
    spec = KernelSpec.gaussian(1.0)
    exact = exact_scores(data, spec, lam).values
    ok = 0
    for s in range(20):
        d = two_pass(data, spec, lam, None, 300, seed=s)
        r = dictionary_scores(data, spec, d).values / exact
        ok += bool(np.all((r >= 0.5) & (r <= 2.0)))
    assert ok >= 18


def test_two_pass_weights_follow_draw_probabilities(rng):
    data = Dataset(rng.standard_normal((60, 2)))
    spec = KernelSpec.gaussian(1.0)
    p = two_pass_probabilities(data, spec, 0.05, M1=20, seed=4)
    d = two_pass(data, spec, 0.05, 20, 15, seed=4)
    np.testing.assert_allclose(d.probs, p[d.indices])
    np.testing.assert_allclose(d.weights, 15 * p[d.indices])
    with pytest.raises(InvalidArgumentError):
        two_pass(data, spec, 0.05, 0, 15)


@pytest.mark.parametrize("make, spec_of", [
    (lambda: identity_dataset(6), KernelSpec.linear),
    (lambda: repeated_point_dataset(6), lambda d: KernelSpec.gaussian(1.0)),
])
def test_exact_rls_symmetric_cases_uniform(make, spec_of):
    data = make()
    np.testing.assert_allclose(exact_rls_probabilities(data, spec_of(data), 0.3), 1 / 6, rtol=1e-12)


def test_exact_rls_probabilities_match_oracle(rng):
    X = rng.standard_normal((6, 2))
    ref = leverage_dense(gaussian_gram(X), 0.1)
    got = exact_rls_probabilities(Dataset(X), KernelSpec.gaussian(1.0), 0.1)
    np.testing.assert_allclose(got, ref / ref.sum(), rtol=0, atol=1e-10)
    d = exact_rls_dict(Dataset(X), KernelSpec.gaussian(1.0), 0.1, 4, seed=2)
    np.testing.assert_allclose(d.weights, 4 * got[d.indices])


def test_baselines_feed_generators_and_falkon(rng):
    X = rng.standard_normal((80, 2))
    data = Dataset(X, np.cos(X[:, 1]))
    spec = KernelSpec.gaussian(1.0)
    for d in (
        uniform_dict(data, 20, 0.05, 1),
        two_pass(data, spec, 0.05, 30, 20, 1),
        exact_rls_dict(data, spec, 0.05, 20, 1),
    ):
        assert prepare_generator(data, spec, d).probe_residual() <= 1e-10
        model = falkon_train(data, spec, d, 1e-3, 5)
        assert np.all(np.isfinite(model.alpha))
