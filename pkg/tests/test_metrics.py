import numpy as np
import pytest

from eptrack.metrics import GospaConfig, aggregate, assignment_solve, gospa

from conftest import brute_force_gospa


def test_gospa_config_validation():
    with pytest.raises(ValueError):
        GospaConfig(order=0.5)
    with pytest.raises(ValueError):
        GospaConfig(cutoff=0.0)
    with pytest.raises(ValueError):
        GospaConfig(alpha=2.5)
    cfg = GospaConfig()
    assert (cfg.order, cfg.cutoff, cfg.alpha) == (1.0, 50.0, 2.0)


def test_gospa_identical_sets():
    pts = np.array([[0.0, 0.0], [10.0, 5.0], [3.0, -2.0]])
    res = gospa(pts, pts)
    assert res.value == 0.0
    assert res.localisation == res.missed == res.false == 0.0


def test_gospa_single_missed_target():
    res = gospa(np.empty((0, 2)), np.array([[5.0, 5.0]]))
    assert res.value == pytest.approx(25.0)  # (c^p / alpha)^(1/p) at defaults
    assert res.missed == pytest.approx(25.0)
    assert res.false == 0.0


def test_gospa_two_target_example():
    truths = np.array([[0.0, 0.0], [10.0, 0.0]])
    estimates = np.array([[0.0, 1.0], [10.0, 1.0]])
    res = gospa(estimates, truths)
    assert res.value == pytest.approx(2.0)
    assert res.localisation == pytest.approx(2.0)


def test_gospa_decomposition_sums_to_value_power(rng):
    cfg = GospaConfig(order=2.0, cutoff=20.0, alpha=1.5)
    for _ in range(50):
        est = rng.uniform(0, 100, size=(rng.integers(0, 5), 2))
        tru = rng.uniform(0, 100, size=(rng.integers(0, 5), 2))
        res = gospa(est, tru, cfg)
        assert res.value**cfg.order == pytest.approx(
            res.localisation + res.missed + res.false, abs=1e-9
        )


def test_gospa_symmetry(rng):
    for _ in range(30):
        est = rng.uniform(0, 200, size=(rng.integers(0, 4), 2))
        tru = rng.uniform(0, 200, size=(rng.integers(0, 4), 2))
        a = gospa(est, tru)
        b = gospa(tru, est)
        assert a.value == pytest.approx(b.value, abs=1e-12)
        assert a.missed == pytest.approx(b.false, abs=1e-12)
        assert a.false == pytest.approx(b.missed, abs=1e-12)


def test_gospa_far_false_estimate_adds_exact_penalty(rng):
    cfg = GospaConfig()
    tru = rng.uniform(0, 100, size=(3, 2))
    est = tru + rng.normal(0, 1, size=(3, 2))
    base = gospa(est, tru, cfg)
    est_extra = np.vstack([est, [[5000.0, 5000.0]]])
    more = gospa(est_extra, tru, cfg)
    assert more.value**cfg.order - base.value**cfg.order == pytest.approx(
        cfg.cutoff**cfg.order / cfg.alpha
    )


def test_gospa_matches_brute_force(rng):
    cfg = GospaConfig()
    for _ in range(100):
        n, m = rng.integers(0, 5, size=2)
        tru = rng.uniform(0, 150, size=(n, 2))
        est = rng.uniform(0, 150, size=(m, 2))
        res = gospa(est, tru, cfg)
        oracle = brute_force_gospa(est, tru, cfg.order, cfg.cutoff, cfg.alpha)
        assert res.value == pytest.approx(oracle, abs=1e-9)


def test_assignment_single_cheap_pair():
    pairs, total = assignment_solve(np.array([[3.0]]), unassign_cost=25.0)
    assert pairs == [(0, 0)]
    assert total == pytest.approx(3.0)


def test_assignment_expensive_pair_unassigned():
    pairs, total = assignment_solve(np.array([[60.0]]), unassign_cost=25.0)
    assert pairs == []
    assert total == pytest.approx(50.0)


def test_assignment_rectangular_instances_match_exhaustive(rng):
    import itertools

    def brute(costs, unassign):
        n, m = costs.shape
        best = np.inf
        for size in range(min(n, m) + 1):
            for rows in itertools.combinations(range(n), size):
                for cols in itertools.permutations(range(m), size):
                    c = sum(costs[i, j] for i, j in zip(rows, cols))
                    c += unassign * (n + m - 2 * size)
                    best = min(best, c)
        return best

    for _ in range(100):
        n, m = rng.integers(1, 5, size=2)
        costs = rng.uniform(0, 30, size=(n, m))
        unassign = rng.uniform(1, 20)
        _, total = assignment_solve(costs, unassign)
        assert total == pytest.approx(brute(costs, unassign), abs=1e-9)


def test_aggregate_single_run_zero_std():
    stats = aggregate([[4.0, 4.0, 4.0]])
    assert stats.mean_gospa == pytest.approx(4.0)
    assert stats.std_gospa == 0.0
    assert stats.mean_ci is None


def test_aggregate_two_runs_hand_arithmetic():
    stats = aggregate([[10.0, 10.0], [14.0, 14.0]], ci_per_run=[[5.0], [5.0]])
    assert stats.mean_gospa == pytest.approx(12.0)
    assert stats.std_gospa == pytest.approx(2.0 * np.sqrt(2.0))
    assert stats.mean_ci == pytest.approx(5.0)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([[1.0], []])
