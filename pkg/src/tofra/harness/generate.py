"""Random scenario generation and iterative node-disjoint path selection."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import networkx as nx
import numpy as np

from .. import phy as _phy
from ..phy import PhyParams
from ..scenario import Flow, Node, Scenario, assign_roles


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    nodes: int = 50
    width: float = 500.0
    height: float = 500.0
    max_flows: int = 10
    min_flows: int = 1
    p_min: float = 0.9
    seed: int = 0
    retries: int = 50

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least 2 nodes")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("area must be positive")
        if not 0 < self.p_min < 1:
            raise ValueError("p_min must lie in (0, 1)")
        if not 1 <= self.min_flows <= self.max_flows:
            raise ValueError("need 1 <= min_flows <= max_flows")


def default_phy(gamma: float = 0.5) -> PhyParams:
    return PhyParams(gamma=gamma, **_phy.TABLE_III)


def connectivity_graph(scenario: Scenario, p_min: float, cost: str = "success") -> nx.DiGraph:
    """Directed links whose interference-free success probability is at least ``p_min``.

    Edge weight is -ln(p) (``cost="success"``), or for ``cost="hops"`` one per
    hop plus -ln(p)/N, which ranks paths by hop count and breaks ties by
    end-to-end success probability.
    """
    if cost not in ("success", "hops"):
        raise ValueError(f"unknown path cost {cost!r}")
    pos, phy = scenario.positions, scenario.phy
    g = _phy.gain_matrix(pos, phy)
    n = scenario.n_nodes
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            p = math.exp(-phy.gamma * phy.eta / (phy.fade_mean(i, j) * g[i, j]))
            if p >= p_min:
                w = -math.log(p)
                G.add_edge(i, j, weight=w if cost == "success" else 1.0 + w / n, p=p)
    return G


def generate_scenario(gen: GenParams, phy: PhyParams | None = None) -> Scenario:
    """Uniform node placement and random (source, destination) pairs, without paths.

    Every pair must be connected in the connectivity graph; otherwise the draw
    is repeated, up to ``gen.retries`` times.
    """
    phy = phy or default_phy()
    rng = np.random.default_rng(gen.seed)
    hi = min(gen.max_flows, gen.nodes // 2)
    if hi < gen.min_flows:
        raise GenerationError(f"{gen.nodes} nodes cannot host {gen.min_flows} disjoint flows")
    for _ in range(gen.retries):
        xy = rng.uniform((0, 0), (gen.width, gen.height), size=(gen.nodes, 2))
        m = int(rng.integers(gen.min_flows, hi + 1))
        ends = rng.choice(gen.nodes, size=2 * m, replace=False)
        nodes = tuple(Node(i, float(x), float(y)) for i, (x, y) in enumerate(xy))
        flows = tuple(Flow(k, int(ends[2 * k]), int(ends[2 * k + 1])) for k in range(m))
        sc = Scenario(nodes, flows, phy, (gen.width, gen.height))
        try:
            G = connectivity_graph(sc, gen.p_min)
        except _phy.GeometryError:
            continue
        if all(nx.has_path(G, f.src, f.dst) for f in flows):
            return sc
    raise GenerationError(f"no connected placement found in {gen.retries} attempts")


def select_disjoint_paths(scenario: Scenario, p_min: float = 0.9, cost: str = "success") -> Scenario:
    """Least-cost path per flow, in declared order, removing each path's nodes afterwards.

    Endpoints of flows not yet routed are kept out of the way as well. Flows
    left without a path are dropped with a warning and listed in
    ``dropped_flows``.
    """
    G = connectivity_graph(scenario, p_min, cost)
    removed: set[int] = set()
    routed, dropped = [], []
    endpoints = {n for f in scenario.flows for n in (f.src, f.dst)}
    for f in scenario.flows:
        blocked = removed | (endpoints - {f.src, f.dst})
        H = G.subgraph(n for n in G if n not in blocked)
        try:
            path = nx.dijkstra_path(H, f.src, f.dst, weight="weight")
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            warnings.warn(f"flow {f.id} ({f.src}->{f.dst}) has no disjoint path; dropped")
            dropped.append(f)
            continue
        routed.append(Flow(f.id, f.src, f.dst, tuple(int(n) for n in path)))
        removed.update(path)
    flows = tuple(routed)
    return replace(scenario, nodes=assign_roles(scenario.nodes, flows), flows=flows,
                   dropped_flows=tuple(dropped))


def path_cost(flow: Flow, G: nx.DiGraph) -> float:
    return sum(G[a][b]["weight"] for a, b in flow.links)
