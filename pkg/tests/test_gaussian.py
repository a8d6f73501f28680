import numpy as np
import pytest

from eptrack.gaussian import (
    GaussianBelief,
    GaussianMixture,
    InvalidCavityError,
    NaturalParams,
    NotPositiveDefiniteError,
    mixture_moments,
    natural_add,
    natural_sub,
    sample_gaussian,
    to_moment,
    to_natural,
)

from conftest import random_belief, random_pd_matrix


def test_to_natural_identity_cov():
    n = to_natural(GaussianBelief([0.0, 0.0], np.eye(2)))
    assert np.allclose(n.info, [0.0, 0.0])
    assert np.allclose(n.prec, np.eye(2))


def test_to_natural_scalar():
    n = to_natural(GaussianBelief([2.0], [[4.0]]))
    assert np.allclose(n.info, [0.5])
    assert np.allclose(n.prec, [[0.25]])


def test_to_moment_identity():
    b = to_moment(NaturalParams(np.zeros(4), np.eye(4)))
    assert np.allclose(b.mean, 0.0)
    assert np.allclose(b.cov, np.eye(4))


def test_to_moment_scalar():
    b = to_moment(NaturalParams([1.0], [[2.0]]))
    assert np.allclose(b.mean, [0.5])
    assert np.allclose(b.cov, [[0.5]])


def test_to_moment_indefinite_raises():
    with pytest.raises(InvalidCavityError):
        to_moment(NaturalParams([0.0, 0.0], np.diag([1.0, -0.5])))


def test_to_natural_singular_raises():
    with pytest.raises(NotPositiveDefiniteError):
        to_natural(GaussianBelief([0.0, 0.0], np.zeros((2, 2))))


def test_round_trips_random_pd(rng):
    for dim in range(1, 9):
        for _ in range(25):
            b = random_belief(rng, dim)
            back = to_moment(to_natural(b))
            assert np.allclose(back.mean, b.mean, rtol=1e-8, atol=1e-10)
            assert np.allclose(back.cov, b.cov, rtol=1e-8, atol=1e-10)
            n = to_natural(b)
            n_back = to_natural(to_moment(n))
            assert np.allclose(n_back.info, n.info, rtol=1e-8, atol=1e-10)
            assert np.allclose(n_back.prec, n.prec, rtol=1e-8, atol=1e-10)
            # symmetry after every operation
            assert np.abs(n.prec - n.prec.T).max() < 1e-9
            assert np.abs(back.cov - back.cov.T).max() < 1e-9


def test_natural_add_componentwise():
    a = NaturalParams([1.0], [[2.0]])
    b = NaturalParams([1.0], [[1.0]])
    s = natural_add(a, b)
    assert np.allclose(s.info, [2.0])
    assert np.allclose(s.prec, [[3.0]])


def test_natural_add_identity_and_inverse(rng):
    a = to_natural(random_belief(rng, 3))
    zero = NaturalParams(np.zeros(3), np.zeros((3, 3)))
    s = natural_add(a, zero)
    assert np.array_equal(s.info, a.info)
    assert np.array_equal(s.prec, a.prec)
    b = to_natural(random_belief(rng, 3))
    back = natural_sub(natural_add(a, b), b)
    assert np.allclose(back.info, a.info, atol=1e-12)
    assert np.allclose(back.prec, a.prec, atol=1e-12)


def test_natural_add_dimension_mismatch():
    with pytest.raises(ValueError):
        natural_add(NaturalParams([1.0], [[1.0]]), NaturalParams([1.0, 2.0], np.eye(2)))


def test_mixture_single_component(rng):
    b = random_belief(rng, 4)
    out = mixture_moments(GaussianMixture([b]))
    assert np.allclose(out.mean, b.mean)
    assert np.allclose(out.cov, b.cov)


def test_mixture_two_components_law_of_total_variance():
    m = GaussianMixture([GaussianBelief([0.0], [[1.0]]), GaussianBelief([2.0], [[1.0]])])
    out = mixture_moments(m)
    assert np.allclose(out.mean, [1.0])
    assert np.allclose(out.cov, [[2.0]])


def test_mixture_moments_monte_carlo_oracle(rng):
    components = [random_belief(rng, 2) for _ in range(4)]
    mix = GaussianMixture(components)
    out = mixture_moments(mix)
    n = 10**6
    idx = rng.integers(0, len(components), size=n)
    samples = np.empty((n, 2))
    for i, comp in enumerate(components):
        mask = idx == i
        chol = np.linalg.cholesky(comp.cov)
        samples[mask] = comp.mean + rng.standard_normal((mask.sum(), 2)) @ chol.T
    se = np.sqrt(np.diag(out.cov) / n)
    assert np.all(np.abs(samples.mean(axis=0) - out.mean) < 3 * se)


def test_mixture_cov_psd_and_dominates_average(rng):
    components = [random_belief(rng, 3) for _ in range(5)]
    out = mixture_moments(GaussianMixture(components))
    avg = np.mean([c.cov for c in components], axis=0)
    evals = np.linalg.eigvalsh(out.cov - avg)
    assert evals.min() > -1e-10  # spread term is PSD
    assert np.abs(out.cov - out.cov.T).max() < 1e-9


def test_mixture_empty_rejected():
    with pytest.raises(ValueError):
        GaussianMixture([])


def test_mixture_dim_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        GaussianMixture([random_belief(rng, 2), random_belief(rng, 3)])


def test_sample_gaussian_degenerate_limit(rng):
    b = GaussianBelief([3.0, -1.0], 1e-12 * np.eye(2))
    s = sample_gaussian(b, rng)
    assert np.abs(s - b.mean).max() < 1e-5


def test_sample_gaussian_statistics(rng):
    b = random_belief(rng, 3)
    n = 10**5
    chol = np.linalg.cholesky(b.cov)
    samples = b.mean + rng.standard_normal((n, 3)) @ chol.T
    # sample_gaussian draws one at a time; validate the same construction
    one = sample_gaussian(b, np.random.default_rng(7))
    again = sample_gaussian(b, np.random.default_rng(7))
    assert np.array_equal(one, again)
    emp = np.cov(samples.T)
    rel = np.linalg.norm(emp - b.cov) / np.linalg.norm(b.cov)
    assert rel < 0.05


def test_sample_gaussian_non_pd_raises(rng):
    b = GaussianBelief.__new__(GaussianBelief)
    b.mean = np.zeros(2)
    b.cov = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefiniteError):
        sample_gaussian(b, rng)
