"""Analytic average throughput of links, paths and the whole flow set.

A link's throughput sums, over every on/off pattern of its interferers, the
probability of that pattern times the capture probability under it. Because
the capture probability factorises over interferers, the same sum collapses
to a product over interferers; ``ThroughputModel`` uses that form for fast
batched evaluation, ``link_throughput`` keeps the explicit enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import phy as _phy
from .scenario import Flow, Scenario, ScenarioError

ENUMERATION_CAP = 20


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class InterfererSet:
    link: tuple[int, int]
    members: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def as_rates(scenario: Scenario, rates) -> np.ndarray:
    q = np.asarray(rates, dtype=float).reshape(-1)
    if q.shape != (len(scenario.flows),):
        raise ValueError(f"expected {len(scenario.flows)} rates, got {q.shape[0]}")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("rates must lie in [0, 1]")
    return q


def node_probs(scenario: Scenario, rates, silent_idle_paths: bool = False) -> np.ndarray:
    """Per-node transmission probability: source rates, fixed relay values, 0 elsewhere.

    With ``silent_idle_paths`` the relays of a flow whose source rate is 0 carry
    no traffic and are silent too; otherwise relays always transmit at their
    fixed probability.
    """
    rates = as_rates(scenario, rates)
    q = np.zeros(scenario.n_nodes)
    for f, r in zip(scenario.flows, rates):
        q[f.src] = r
        if r > 0 or not silent_idle_paths:
            for n in f.relays:
                q[n] = scenario.relay_prob(n)
    return q


def interferer_set(link, scenario: Scenario) -> InterfererSet:
    i, j = link
    scenario.flow_of_link(link)
    members = tuple(k for k in scenario.transmitters if k != i and k != j)
    return InterfererSet((i, j), members)


def dominant_interferers(link, scenario: Scenario, K: int | None) -> InterfererSet:
    """The ``K`` interferers with the largest mean received power at the receiver.

    Ties go to the lower node id. ``K=None`` keeps every interferer.
    """
    full = interferer_set(link, scenario)
    if K is None or K >= full.size:
        return full
    if K < 0:
        raise ValueError("K must be >= 0")
    j = link[1]
    pos, phy = scenario.positions, scenario.phy
    ranked = sorted(full.members,
                    key=lambda k: (-phy.fade_mean(k, j) * _phy.received_power_factor(k, j, pos, phy), k))
    keep = set(ranked[:K])
    return InterfererSet(full.link, tuple(k for k in full.members if k in keep))


def effective_tx_factor(link, q, scenario: Scenario) -> float:
    """q_i if j is the flow's destination, else q_i * (1 - q_j)."""
    i, j = link
    f = scenario.flow_of_link(link)
    if j == f.dst:
        return float(q[i])
    return float(q[i] * (1.0 - q[j]))


def subset_bits(L: int) -> np.ndarray:
    """Row l holds b(l, n) for n = 1..L, i.e. bit n-1 of l."""
    l = np.arange(2 ** L)[:, None]
    return ((l >> np.arange(L)[None, :]) & 1).astype(bool)


def link_throughput(link, scenario: Scenario, rates, included: InterfererSet | None = None,
                    silent_idle_paths: bool = False) -> float:
    """Average packets/slot over ``link`` by explicit enumeration of interferer subsets."""
    i, j = link
    if included is None:
        included = interferer_set(link, scenario)
    L = included.size
    if L > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"link {tuple(link)} has {L} interferers (cap {ENUMERATION_CAP}); "
            "pass a K-dominant truncation via dominant_interferers()")
    q = node_probs(scenario, rates, silent_idle_paths)
    qij = effective_tx_factor(link, q, scenario)
    if qij == 0:
        return 0.0
    pos, phy = scenario.positions, scenario.phy
    members = np.array(included.members, dtype=int)
    base = _phy.noise_factor(i, j, pos, phy)
    c = np.array([_phy.interference_factor(i, j, k, pos, phy) for k in members])
    bits = subset_bits(L)
    qm = q[members]
    weights = np.prod(np.where(bits, qm, 1.0 - qm), axis=1)
    p_success = base * np.prod(np.where(bits, c, 1.0), axis=1)
    return float(qij * np.sum(weights * p_success))


def _truncated(link, scenario, truncation):
    if truncation is None:
        return interferer_set(link, scenario)
    return dominant_interferers(link, scenario, truncation)


class ThroughputModel:
    """Precomputed per-link factors for fast, batched throughput evaluation.

    ``truncation`` is ``None`` for every interferer or an int K for the K
    dominant ones. ``silent_idle_paths`` as in ``node_probs``.
    """

    def __init__(self, scenario: Scenario, truncation: int | None = None,
                 silent_idle_paths: bool = False):
        if not scenario.routed:
            raise ScenarioError("scenario has unrouted flows")
        self.scenario = scenario
        self.truncation = truncation
        self.silent_idle_paths = silent_idle_paths
        self.links = list(scenario.links)
        self.flow_index = np.array([k for k, f in enumerate(scenario.flows) for _ in f.links])
        self.hop_index = np.array([h for f in scenario.flows for h in range(f.hops)])
        n = scenario.n_nodes
        pos, phy = scenario.positions, scenario.phy
        g = _phy.gain_matrix(pos, phy)
        v = np.full((n, n), phy.v)
        for (a, b), val in phy.v_links.items():
            v[a, b] = val
        vg = v * g
        nl = len(self.links)
        self.tx = np.array([l[0] for l in self.links], dtype=int)
        self.rx = np.array([l[1] for l in self.links], dtype=int)
        self.rx_is_dst = np.array(
            [l[1] == scenario.flows[k].dst for l, k in zip(self.links, self.flow_index)])
        sig = vg[self.tx, self.rx]
        self.noise = np.exp(-phy.gamma * phy.eta / sig)
        # column c of `cols` is node cols[c]; factor 1 where a node is not included
        self.cols = np.array(scenario.transmitters, dtype=int)
        self.factor = np.ones((nl, len(self.cols)))
        self.included = []
        for r, link in enumerate(self.links):
            inc = _truncated(link, scenario, truncation)
            self.included.append(inc)
            for k in inc.members:
                c = np.searchsorted(self.cols, k)
                self.factor[r, c] = 1.0 / (1.0 + phy.gamma * vg[k, self.rx[r]] / sig[r])
        self.one_minus_factor = 1.0 - self.factor
        self.rx_busy = (~self.rx_is_dst).astype(float)
        self.source_nodes = np.array([f.src for f in scenario.flows], dtype=int)
        m = len(scenario.flows)
        # rates (m,) @ place (m, n) scatters each rate onto its source node;
        # relay_place[k] holds the relay probabilities of flow k's path
        self.place = np.zeros((m, n))
        self.place[np.arange(m), self.source_nodes] = 1.0
        self.relay_place = np.zeros((m, n))
        for k, f in enumerate(scenario.flows):
            for r in f.relays:
                self.relay_place[k, r] = scenario.relay_prob(r)
        self.base_q = self.relay_place.sum(axis=0)

    def _throughputs(self, R: np.ndarray) -> np.ndarray:
        if self.silent_idle_paths:
            Q = (R > 0) @ self.relay_place + R @ self.place
        else:
            Q = self.base_q + R @ self.place
        qij = Q[:, self.tx] * (1.0 - Q[:, self.rx] * self.rx_busy)
        # prod over included interferers of (1 - q_k + q_k c_k)
        survive = np.prod(1.0 - Q[:, None, self.cols] * self.one_minus_factor, axis=2)
        return qij * self.noise * survive

    def link_throughputs(self, rates) -> np.ndarray:
        """(batch, n_links) link throughputs; 1-D input gives a 1-D result."""
        T = self._throughputs(np.atleast_2d(np.asarray(rates, dtype=float)))
        return T[0] if np.ndim(rates) == 1 else T

    def path_throughputs(self, rates) -> np.ndarray:
        T = np.atleast_2d(self.link_throughputs(rates))
        m = len(self.scenario.flows)
        out = np.full((T.shape[0], m), np.inf)
        for k in range(m):
            out[:, k] = T[:, self.flow_index == k].min(axis=1)
        return out[0] if np.ndim(rates) == 1 else out

    def aggregate(self, rates):
        P = self.path_throughputs(rates)
        return P.sum(axis=-1)


def path_throughput(flow: Flow, scenario: Scenario, rates, truncation: int | None = None,
                    silent_idle_paths: bool = False) -> float:
    """Minimum link throughput along the flow's path."""
    return min(link_throughput(link, scenario, rates, _truncated(link, scenario, truncation),
                               silent_idle_paths)
               for link in flow.links)


def aggregate_throughput(scenario: Scenario, rates, truncation: int | None = None,
                         silent_idle_paths: bool = False) -> float:
    """Average aggregate throughput (AAT): sum of path throughputs.

    Evaluated through ``ThroughputModel``, so it has no enumeration cap.
    """
    model = ThroughputModel(scenario, truncation, silent_idle_paths)
    return float(model.aggregate(as_rates(scenario, rates)))
