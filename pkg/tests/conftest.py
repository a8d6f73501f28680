import itertools

import numpy as np
import pytest

from eptrack.gaussian import GaussianBelief
from eptrack.model import Rect, SensorModel, default_observation_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)


def random_pd_matrix(rng, dim):
    """Random symmetric positive definite matrix with decent conditioning."""
    a = rng.standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


def random_belief(rng, dim):
    return GaussianBelief(rng.standard_normal(dim) * 5.0, random_pd_matrix(rng, dim))


def make_sensor(n_targets, clutter_rate=0.0, target_rate=2.0, noise_var=100.0,
                region=Rect(0.0, 1000.0, 0.0, 1000.0), R=None, target_rates=None):
    if target_rates is None:
        target_rates = np.full(n_targets, float(target_rate))
    if R is None:
        R = noise_var * np.eye(2)
    return SensorModel(
        H=default_observation_matrix(),
        R=R,
        clutter_rate=float(clutter_rate),
        target_rates=np.asarray(target_rates, dtype=float),
        region=region,
    )


def spread_beliefs(n_targets, spacing=200.0, pos_var=100.0, vel_var=25.0):
    """Well separated target beliefs on a diagonal line."""
    cov = np.diag([pos_var, vel_var, pos_var, vel_var])
    return [
        GaussianBelief(np.array([300.0 + spacing * k, 1.0, 300.0 + spacing * k, -1.0]),
                       cov.copy())
        for k in range(n_targets)
    ]


# ---------------------------------------------------------------------------
# Brute-force oracles shared by unit and acceptance tests


def brute_force_gospa(estimates, truths, p, c, alpha):
    """Exhaustive minimisation over all partial matchings (small sets only)."""
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    n, m = tru.shape[0], est.shape[0]
    miss = c**p / alpha
    best = np.inf
    for size in range(min(n, m) + 1):
        for rows in itertools.combinations(range(n), size):
            for cols in itertools.permutations(range(m), size):
                cost = sum(
                    np.linalg.norm(tru[i] - est[j]) ** p for i, j in zip(rows, cols)
                )
                cost += miss * (n + m - 2 * size)
                best = min(best, cost)
    return best ** (1.0 / p)


def graph_distances(adj):
    """All-pairs hop distances by BFS; inf when unreachable."""
    n = adj.shape[0]
    dist = np.full((n, n), np.inf)
    for start in range(n):
        dist[start, start] = 0
        frontier = [start]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in np.flatnonzero(adj[u]):
                    if dist[start, v] == np.inf:
                        dist[start, v] = d
                        nxt.append(int(v))
            frontier = nxt
    return dist


def all_connected_graphs(n):
    """Every connected undirected graph on n labelled nodes."""
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product([0, 1], repeat=len(pairs)):
        adj = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(pairs, bits):
            if b:
                adj[i, j] = adj[j, i] = True
        dist = graph_distances(adj)
        if np.isfinite(dist).all():
            yield adj, dist
