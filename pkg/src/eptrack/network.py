"""Simulated sensor-network communication.

Nodes exchange site parameters through one of three schemes: full exchange
(fully connected assumption), flooding to consensus (relay rounds until
every node holds every current site), or a single store-and-forward
flooding round per iteration.  Rounds are synchronous: all sends are
computed from pre-round tables, then all merges applied.

Each node keeps a table mapping sensor id -> (iteration stamp, payload);
a missing entry means "never received" (stamp -1) and contributes nothing
to that node's combined approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Topology",
    "TableEntry",
    "DisconnectedTopologyError",
    "generate_topology",
    "fresh_tables",
    "table_stamp",
    "exchange_full",
    "flood_once",
    "flood_until_consensus",
    "ci_count",
    "FullExchange",
    "FloodOnce",
    "FloodToConsensus",
]


class DisconnectedTopologyError(RuntimeError):
    """Flooding cannot reach consensus on a disconnected graph."""


@dataclass
class Topology:
    """Per-time-step undirected adjacency over n_nodes sensors."""

    n_nodes: int
    adjacency: np.ndarray  # (steps, n, n) bool, symmetric, zero diagonal

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool)

    @property
    def steps(self) -> int:
        return self.adjacency.shape[0]

    def at(self, step: int) -> np.ndarray:
        return self.adjacency[step]

    def neighbors(self, step: int, node: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[step, node])

    def edge_lists(self) -> list:
        out = []
        for step in range(self.steps):
            rows, cols = np.nonzero(np.triu(self.adjacency[step], k=1))
            out.append([[int(i), int(j)] for i, j in zip(rows, cols)])
        return out

    @classmethod
    def from_edge_lists(cls, n_nodes: int, edges: list) -> "Topology":
        adj = np.zeros((len(edges), n_nodes, n_nodes), dtype=bool)
        for step, step_edges in enumerate(edges):
            for i, j in step_edges:
                adj[step, i, j] = adj[step, j, i] = True
        return cls(n_nodes=n_nodes, adjacency=adj)


def is_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n <= 1:
        return True
    n_comp, _ = connected_components(csr_matrix(adj), directed=False)
    return n_comp == 1


def _geometric_graph(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    pos = rng.random((n, 2))
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    adj = d2 < radius**2
    np.fill_diagonal(adj, False)
    return adj


def _connected_geometric_graph(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 1), dtype=bool)
    # radius for expected degree ~= 3 on the unit square, grown on failure
    radius = min(np.sqrt(3.0 / (np.pi * (n - 1))), np.sqrt(2.0))
    failures = 0
    while True:
        adj = _geometric_graph(n, radius, rng)
        if is_connected(adj):
            return adj
        failures += 1
        if failures % 100 == 0:
            radius *= 1.1


def generate_topology(kind: str, n_nodes: int, steps: int, rng: np.random.Generator) -> Topology:
    """Random geometric connectivity; `fixed` reuses one graph for all steps."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if kind == "fixed":
        adj = _connected_geometric_graph(n_nodes, rng)
        stack = np.repeat(adj[None], steps, axis=0)
    elif kind == "dynamic":
        stack = np.stack([_connected_geometric_graph(n_nodes, rng) for _ in range(steps)])
    else:
        raise ValueError(f"unknown topology kind: {kind!r}")
    return Topology(n_nodes=n_nodes, adjacency=stack)


# ---------------------------------------------------------------------------
# Site tables and communication rounds


@dataclass(frozen=True)
class TableEntry:
    """One known site: iteration stamp plus opaque parameter payload."""

    stamp: int
    payload: Any


def fresh_tables(own_payloads: list) -> list:
    """Start-of-time-step tables: each node knows only its own site (stamp 0)."""
    return [{i: TableEntry(0, p)} for i, p in enumerate(own_payloads)]


def table_stamp(table: dict, sensor_id: int) -> int:
    entry = table.get(sensor_id)
    return entry.stamp if entry is not None else -1


def _payload_size(payload) -> int:
    return int(getattr(payload, "packed_size", 1))


def _log_round(comm_log, step, iteration, round_no, sender, receiver, size):
    if comm_log is not None:
        comm_log.append(
            {
                "step": step,
                "iteration": iteration,
                "round": round_no,
                "sender": sender,
                "receiver": receiver,
                "size": size,
            }
        )


def exchange_full(tables: list, comm_log=None, step: int = 0, iteration: int = 0) -> list:
    """Broadcast every node's own current site to all others (one round).

    Assumes the network is fully connected; the caller declares that by
    choosing this scheme.
    """
    n = len(tables)
    latest = [tables[i][i] for i in range(n)]
    for j in range(n):
        for i in range(n):
            if i != j:
                _log_round(comm_log, step, iteration, 1, i, j, _payload_size(latest[i].payload))
        tables[j] = {i: latest[i] for i in range(n)}
    return tables


def flood_once(adjacency: np.ndarray, tables: list, comm_log=None, step: int = 0,
               iteration: int = 0, round_no: int = 1) -> list:
    """One synchronous store-and-forward round.

    Every node sends its whole pre-round table (its own current site plus
    everything previously received) to each neighbour; receivers keep the
    highest stamp per sensor id.
    """
    n = len(tables)
    merged = [dict(t) for t in tables]
    for sender in range(n):
        size = sum(_payload_size(e.payload) for e in tables[sender].values())
        for receiver in np.flatnonzero(adjacency[sender]):
            receiver = int(receiver)
            _log_round(comm_log, step, iteration, round_no, sender, receiver, size)
            target = merged[receiver]
            for sid, entry in tables[sender].items():
                known = target.get(sid)
                if known is None or entry.stamp > known.stamp:
                    target[sid] = entry
    return merged


def _tables_complete(tables: list, target_stamp: int) -> bool:
    n = len(tables)
    return all(
        table_stamp(t, sid) >= target_stamp for t in tables for sid in range(n)
    )


def flood_until_consensus(adjacency: np.ndarray, tables: list, target_stamp: int = 0,
                          comm_log=None, step: int = 0, iteration: int = 0):
    """Relay until every node holds every site at the target stamp.

    Returns (tables, rounds used).  On a connected graph this needs at most
    diameter-many rounds; a disconnected graph raises.
    """
    n = len(tables)
    rounds = 0
    while not _tables_complete(tables, target_stamp):
        if rounds >= n:
            raise DisconnectedTopologyError(
                "flooding made no further progress; topology step is disconnected"
            )
        tables = flood_once(adjacency, tables, comm_log, step, iteration, round_no=rounds + 1)
        rounds += 1
    return tables, rounds


def ci_count(comm_log) -> dict:
    """Communication iterations per time step: distinct rounds with any message."""
    per_step: dict = {}
    for row in comm_log:
        per_step.setdefault(row["step"], set()).add((row["iteration"], row["round"]))
    return {step: len(rounds) for step, rounds in per_step.items()}


# ---------------------------------------------------------------------------
# Scheme objects used by the EP driver


class FullExchange:
    """Direct exchange of natural parameters between all sensors."""

    name = "full"

    def exchange(self, adjacency, tables, step, iteration, comm_log=None):
        return exchange_full(tables, comm_log, step, iteration), 1


class FloodOnce:
    """One flooding round per EP iteration (store-and-forward variant)."""

    name = "flood-once"

    def exchange(self, adjacency, tables, step, iteration, comm_log=None):
        return flood_once(adjacency, tables, comm_log, step, iteration), 1


class FloodToConsensus:
    """Flood until all tables hold the current iteration's sites."""

    name = "flood-consensus"

    def exchange(self, adjacency, tables, step, iteration, comm_log=None):
        return flood_until_consensus(
            adjacency, tables, target_stamp=iteration, comm_log=comm_log,
            step=step, iteration=iteration,
        )
