"""Packet-level slotted-ALOHA simulator with SINR capture and Rayleigh fading.

Every slot: sources (always backlogged) and relays with something to send
decide independently whether to transmit (in saturated mode relays always
have something to send); a node that transmits cannot
receive; each transmission is captured iff its instantaneous SINR at the
intended next hop clears the threshold, with every other concurrent
transmitter counted as interference. A receiver can capture several packets
in the same slot. ACKs are instantaneous and error-free.
"""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import phy as _phy
from .allocator import RoundRobin
from .scenario import Scenario

STABLE_SLOPE = 1e-3  # packets/slot


@dataclass(frozen=True)
class SimConfig:
    total_slots: int = 20_000
    max_retransmits: int | None = 3  # None: retry forever
    saturated_relays: bool = False
    silent_idle_paths: bool = False  # saturated mode: no dummies on zero-rate paths
    relay_policy: str = "bernoulli"  # or "backoff"
    contention_window: int = 5
    warmup_slots: int | None = None  # default: 10% of total_slots
    seed: int = 0
    trace_active_sets: bool = False

    def __post_init__(self):
        if self.total_slots <= self.warmup:
            raise ValueError("total_slots must exceed warmup_slots")
        if self.warmup < 0:
            raise ValueError("warmup_slots must be >= 0")
        if self.max_retransmits is not None and self.max_retransmits < 1:
            raise ValueError("max_retransmits must be >= 1 or None")
        if self.relay_policy not in ("bernoulli", "backoff"):
            raise ValueError(f"unknown relay policy {self.relay_policy!r}")
        if self.contention_window < 0:
            raise ValueError("contention window must be >= 0")

    @property
    def warmup(self) -> int:
        if self.warmup_slots is None:
            return self.total_slots // 10
        return self.warmup_slots


def backoff_equivalent_prob(cw: int) -> float:
    """Approximate per-slot access probability of a uniform [0, cw] backoff."""
    return 2.0 / (cw + 2.0)


class Packet:
    __slots__ = ("flow", "seq", "created", "hop", "retx", "dummy")

    def __init__(self, flow, seq, created, hop=0, dummy=False):
        self.flow = flow
        self.seq = seq
        self.created = created
        self.hop = hop
        self.retx = 0
        self.dummy = dummy


@dataclass
class SimMetrics:
    slots: int  # measured (post-warmup) slots
    total_slots: int
    delivered: np.ndarray
    throughput: np.ndarray
    aat: float
    delay_mean: np.ndarray
    delay_p95: np.ndarray
    injected: np.ndarray  # whole run
    delivered_total: np.ndarray
    dropped: np.ndarray  # retransmit-limit drops, whole run
    in_flight: np.ndarray  # real packets still queued at the end
    relays: tuple[int, ...]
    queue_mean: np.ndarray
    queue_trace: np.ndarray  # (total_slots, n_relays) queue length at slot end
    link_attempts: dict
    link_successes: dict
    active_sets: dict | None = None
    config: SimConfig | None = field(default=None, repr=False)

    @property
    def queue_slope(self) -> np.ndarray:
        return np.array([queue_slope(self.queue_trace[:, r]) for r in range(len(self.relays))])


def queue_slope(trace) -> float:
    """Least-squares slope of the queue length over the second half of the run."""
    trace = np.asarray(trace, dtype=float)
    half = trace[len(trace) // 2:]
    if len(half) < 2:
        return 0.0
    t = np.arange(len(half), dtype=float)
    return float(np.polyfit(t, half, 1)[0])


def run(scenario: Scenario, policy, config: SimConfig = SimConfig()) -> SimMetrics:
    """Simulate ``config.total_slots`` slots under a rate vector or a RoundRobin schedule."""
    flows = scenario.flows
    m = len(flows)
    rr = policy if isinstance(policy, RoundRobin) else None
    if rr is not None:
        if rr.m != m:
            raise ValueError(f"round-robin schedule is for {rr.m} flows, scenario has {m}")
        rates = [1.0] * m
    else:
        rates = [float(x) for x in np.asarray(policy, dtype=float).reshape(-1)]
        if len(rates) != m:
            raise ValueError(f"expected {m} rates, got {len(rates)}")
        if any(not 0 <= r <= 1 for r in rates):
            raise ValueError("rates must lie in [0, 1]")

    phy = scenario.phy
    G = _phy.gain_matrix(scenario.positions, phy).tolist()
    V = [[phy.fade_mean(a, b) for b in range(scenario.n_nodes)] for a in range(scenario.n_nodes)]
    gamma, eta = phy.gamma, phy.eta
    limit = math.inf if config.max_retransmits is None else config.max_retransmits
    sat = config.saturated_relays
    backoff = config.relay_policy == "backoff"
    cw = config.contention_window
    warm = config.warmup
    n_slots = config.total_slots

    # static routing tables
    next_hop = {}  # (flow, node) -> next node
    for k, f in enumerate(flows):
        for a, b in f.links:
            next_hop[(k, a)] = b
    dst = [f.dst for f in flows]
    relays = tuple(n for f in flows for n in f.relays)
    relay_flow = {n: k for k, f in enumerate(flows) for n in f.relays}
    relay_q = [scenario.relay_prob(n) for n in relays]
    relay_sat = [sat and (rates[relay_flow[n]] > 0 or not config.silent_idle_paths)
                 for n in relays]
    relay_idx = {n: r for r, n in enumerate(relays)}
    queues = [deque() for _ in relays]
    link_list = [l for f in flows for l in f.links]
    attempts = dict.fromkeys(link_list, 0)
    successes = dict.fromkeys(link_list, 0)
    active_sets = {l: Counter() for l in link_list} if config.trace_active_sets else None

    rng = np.random.default_rng(config.seed)
    CHUNK = 4096
    n_dec = m + len(relays)
    counters = [int(c) for c in rng.integers(0, cw + 1, len(relays))] if backoff else None
    fade_pool: list = []
    fade_pos = 0

    hol = [None] * m
    seq = [0] * m
    injected = [0] * m
    delivered_all = [0] * m
    delivered = [0] * m
    dropped = [0] * m
    delays = [[] for _ in range(m)]
    qtrace = np.zeros((n_slots, len(relays)), dtype=np.int32)
    qsum = [0] * len(relays)

    for slot in range(n_slots):
        c = slot % CHUNK
        if c == 0:
            U = rng.random((min(CHUNK, n_slots - slot), n_dec)).tolist()
        u = U[c]
        measuring = slot >= warm

        tx = {}  # node -> (flow, packet, receiver)
        for k in range(m):
            go = (slot % m == k) if rr is not None else (u[k] < rates[k])
            if go:
                p = hol[k]
                if p is None:
                    p = hol[k] = Packet(k, seq[k], slot)
                    seq[k] += 1
                    injected[k] += 1
                s = flows[k].src
                tx[s] = (k, p, next_hop[(k, s)])
        for r, node in enumerate(relays):
            has = bool(queues[r]) or relay_sat[r]
            if not has:
                continue
            if backoff:
                if counters[r] > 0:
                    counters[r] -= 1
                    continue
                counters[r] = int(u[m + r] * (cw + 1))
            elif u[m + r] >= relay_q[r]:
                continue
            k = relay_flow[node]
            p = queues[r][0] if queues[r] else Packet(k, -1, slot, dummy=True)
            tx[node] = (k, p, next_hop[(k, node)])

        if tx:
            active = list(tx)
            n_act = len(active)
            fades_at = {}
            outcomes = []
            for i in active:
                k, p, j = tx[i]
                link = (i, j)
                if j in tx:
                    ok = False  # half-duplex: the receiver is transmitting
                else:
                    fd = fades_at.get(j)
                    if fd is None:
                        if fade_pos + n_act > len(fade_pool):
                            fade_pool = rng.exponential(1.0, 65536).tolist()
                            fade_pos = 0
                        fd = dict(zip(active, fade_pool[fade_pos:fade_pos + n_act]))
                        fade_pos += n_act
                        fades_at[j] = fd
                    signal = fd[i] * V[i][j] * G[i][j]
                    interf = eta
                    for a in active:
                        if a != i:
                            interf += fd[a] * V[a][j] * G[a][j]
                    ok = signal >= gamma * interf
                if measuring:
                    attempts[link] += 1
                    if ok:
                        successes[link] += 1
                    if active_sets is not None:
                        others = frozenset(a for a in active if a != i and a != j)
                        active_sets[link][(others, j in tx, ok)] += 1
                outcomes.append((i, k, p, j, ok))

            for i, k, p, j, ok in outcomes:
                is_source = i == flows[k].src
                if ok:
                    if is_source:
                        hol[k] = None
                    elif not p.dummy:
                        queues[relay_idx[i]].popleft()
                    if p.dummy:
                        continue
                    if j == dst[k]:
                        delivered_all[k] += 1
                        if measuring:
                            delivered[k] += 1
                            delays[k].append(slot - p.created + 1)
                    else:
                        p.hop += 1
                        p.retx = 0
                        queues[relay_idx[j]].append(p)
                elif not p.dummy:
                    p.retx += 1
                    if p.retx >= limit:
                        dropped[k] += 1
                        if is_source:
                            hol[k] = None
                        else:
                            queues[relay_idx[i]].popleft()

        for r in range(len(relays)):
            ql = len(queues[r])
            qtrace[slot, r] = ql
            if measuring:
                qsum[r] += ql

    measured = n_slots - warm
    in_flight = [0] * m
    for k in range(m):
        in_flight[k] += hol[k] is not None
    for r, node in enumerate(relays):
        in_flight[relay_flow[node]] += len(queues[r])
    thr = np.array(delivered, dtype=float) / measured
    dmean = np.array([np.mean(d) if d else np.nan for d in delays])
    d95 = np.array([np.percentile(d, 95) if d else np.nan for d in delays])
    return SimMetrics(
        slots=measured, total_slots=n_slots,
        delivered=np.array(delivered), throughput=thr, aat=float(thr.sum()),
        delay_mean=dmean, delay_p95=d95,
        injected=np.array(injected), delivered_total=np.array(delivered_all),
        dropped=np.array(dropped), in_flight=np.array(in_flight),
        relays=relays, queue_mean=np.array(qsum, dtype=float) / measured,
        queue_trace=qtrace, link_attempts=attempts, link_successes=successes,
        active_sets=active_sets, config=config,
    )


@dataclass(frozen=True)
class LinkCensus:
    attempts: int
    successes: int
    ratio: float
    low: float
    high: float


def link_success_census(metrics: SimMetrics, confidence: float = 0.95) -> dict:
    """Per-link success ratio with a Wilson interval; links never attempted are omitted."""
    out = {}
    for link, n in metrics.link_attempts.items():
        if n == 0:
            continue
        s = metrics.link_successes[link]
        ci = binomtest(s, n).proportion_ci(confidence_level=confidence, method="wilson")
        out[link] = LinkCensus(n, s, s / n, float(ci.low), float(ci.high))
    return out


@dataclass(frozen=True)
class QueueVerdict:
    relay: int
    slope: float
    stable: bool


def queue_stability_report(metrics: SimMetrics, threshold: float = STABLE_SLOPE) -> dict:
    """relay -> QueueVerdict; stable iff the second-half queue slope is <= threshold."""
    slopes = metrics.queue_slope
    return {n: QueueVerdict(n, float(s), bool(s <= threshold))
            for n, s in zip(metrics.relays, slopes)}
