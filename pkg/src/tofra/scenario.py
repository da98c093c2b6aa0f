"""Immutable scenario description: node placement, flows with their paths, PHY."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .phy import PhyParams

ROLES = ("source", "relay", "sink", "idle")
DEFAULT_RELAY_PROB = 0.5


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    role: str = "idle"
    tx_prob: float | None = None  # only meaningful for relays

    def __post_init__(self):
        if self.role not in ROLES:
            raise ScenarioError(f"node {self.id}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Flow:
    id: int
    src: int
    dst: int
    path: tuple[int, ...] = ()

    @property
    def links(self) -> list[tuple[int, int]]:
        return list(zip(self.path[:-1], self.path[1:]))

    @property
    def hops(self) -> int:
        return max(len(self.path) - 1, 0)

    @property
    def relays(self) -> tuple[int, ...]:
        return self.path[1:-1]


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[Node, ...]
    flows: tuple[Flow, ...]
    phy: PhyParams
    area: tuple[float, float] = (500.0, 500.0)
    # flows that could not be routed, kept for reporting
    dropped_flows: tuple[Flow, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "flows", tuple(self.flows))
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise ScenarioError("node ids must be dense 0..N-1 in order")
        pos = self.positions
        if not np.all(np.isfinite(pos)):
            raise ScenarioError("node positions must be finite")

    # -- structure -------------------------------------------------------
    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(n.x, n.y) for n in self.nodes], dtype=float).reshape(-1, 2)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def routed(self) -> bool:
        return bool(self.flows) and all(len(f.path) >= 2 for f in self.flows)

    @cached_property
    def transmitters(self) -> tuple[int, ...]:
        """Nodes that may transmit data: flow sources and relays."""
        tx = set()
        for f in self.flows:
            tx.update(f.path[:-1] if f.path else (f.src,))
        return tuple(sorted(tx))

    @cached_property
    def sinks(self) -> frozenset[int]:
        return frozenset(f.dst for f in self.flows)

    @cached_property
    def links(self) -> tuple[tuple[int, int], ...]:
        return tuple(link for f in self.flows for link in f.links)

    def flow_of_link(self, link) -> Flow:
        for f in self.flows:
            if tuple(link) in f.links:
                return f
        raise ScenarioError(f"link {tuple(link)} is not on any path")

    def relay_prob(self, node: int) -> float:
        p = self.nodes[node].tx_prob
        return DEFAULT_RELAY_PROB if p is None else p

    def with_gamma(self, gamma: float) -> "Scenario":
        return replace(self, phy=self.phy.with_gamma(gamma))

    def validate(self) -> None:
        """Check the routed-scenario invariants; raises ScenarioError."""
        seen: dict[int, int] = {}
        for f in self.flows:
            if len(f.path) < 2:
                raise ScenarioError(f"flow {f.id} has no path")
            if f.path[0] != f.src or f.path[-1] != f.dst:
                raise ScenarioError(f"flow {f.id}: path must run from src to dst")
            if len(set(f.path)) != len(f.path):
                raise ScenarioError(f"flow {f.id}: path repeats a node")
            for n in f.path:
                if not 0 <= n < self.n_nodes:
                    raise ScenarioError(f"flow {f.id}: unknown node {n}")
                # flows may converge on a common sink
                if n in seen and not (n == f.dst and n in self.sinks
                                      and self.nodes[n].role == "sink"):
                    raise ScenarioError(
                        f"flows {seen[n]} and {f.id} share node {n}; paths must be node-disjoint")
                seen[n] = f.id
            want = ["source"] + ["relay"] * (len(f.path) - 2) + ["sink"]
            for n, role in zip(f.path, want):
                if self.nodes[n].role != role:
                    raise ScenarioError(
                        f"node {n} on flow {f.id} has role {self.nodes[n].role!r}, expected {role!r}")
            for n in f.relays:
                p = self.relay_prob(n)
                if not 0 < p <= 1:
                    raise ScenarioError(f"relay {n}: tx_prob must lie in (0, 1], got {p}")


def assign_roles(nodes, flows) -> tuple[Node, ...]:
    """Re-derive node roles from the flow paths; unrouted nodes become idle."""
    roles = {}
    for f in flows:
        roles[f.src] = "source"
        roles[f.dst] = "sink"
        for n in f.relays:
            roles[n] = "relay"
    out = []
    for n in nodes:
        role = roles.get(n.id, "idle")
        prob = n.tx_prob if role == "relay" else None
        if role == "relay" and prob is None:
            prob = DEFAULT_RELAY_PROB
        out.append(Node(n.id, n.x, n.y, role, prob))
    return tuple(out)


def fig3_scenario(gamma: float = 1.0, d: float = 400.0, relay_prob: float = 0.5) -> Scenario:
    """Two flows into node 0: 1 -> 2 -> 0 and 3 -> 0.

    Nodes 1, 2, 0 are collinear with spacing ``d``; node 3 sits at distance
    ``d`` from 1, sqrt(2) d from 2 and sqrt(5) d from 0. Path loss 3, default
    power and noise (``phy.TABLE_III``).
    """
    nodes = (
        Node(0, 0.0, 0.0, "sink"),
        Node(1, 2 * d, 0.0, "source"),
        Node(2, d, 0.0, "relay", relay_prob),
        Node(3, 2 * d, d, "source"),
    )
    flows = (Flow(0, 1, 0, (1, 2, 0)), Flow(1, 3, 0, (3, 0)))
    phy = PhyParams(gamma=gamma, eta=7e-11, p_tx=0.1, alpha=3.0)
    return Scenario(nodes, flows, phy, area=(2 * d, d))
