"""Flow-rate allocation: problem construction, simulated annealing, grid oracle, baselines.

A problem point is laid out as ``[q_1 .. q_m, q'_1 .. q'_a]``: one source rate per
flow followed by one auxiliary variable per multi-hop flow (the throughput the
flow is credited with). The objective is the sum of single-hop link throughputs
plus the auxiliaries; the auxiliaries are capped by every link throughput of
their path, and a multi-hop flow's first-link throughput may not exceed any
downstream link throughput (the bounded-delay constraint).
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import phy as _phy
from .scenario import Flow, Scenario
from .throughput import ThroughputModel, as_rates


@dataclass(frozen=True)
class SaParams:
    t_initial: float = 1.0
    cooling: float = 0.95
    iters_per_temp: int = 200
    t_final: float = 1e-2
    step: float = 0.05
    restarts: int = 8
    tol: float = 1e-6
    penalty: float = 0.0  # > 0 switches to a penalised walk instead of rejection
    polish: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.cooling < 1:
            raise ValueError("cooling factor must lie in (0, 1)")
        if not self.step > 0:
            raise ValueError("step scale must be > 0")
        if self.penalty < 0:
            raise ValueError("penalty weight must be >= 0")
        if self.restarts < 1 or self.iters_per_temp < 1:
            raise ValueError("restarts and iters_per_temp must be >= 1")
        if not 0 < self.t_final <= self.t_initial:
            raise ValueError("need 0 < t_final <= t_initial")


@dataclass
class AllocationResult:
    rates: np.ndarray
    aux: np.ndarray  # one per multi-hop flow, in flow order
    predicted_aat: float
    feasible: bool
    violation: float = 0.0
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Constraint:
    kind: str  # "S2" or "S4"
    flow: int
    lhs: int  # link index (S2) or aux index (S4)
    rhs: int  # link index


class AllocationProblem:
    """Objective and constraints over a routed scenario.

    ``active`` optionally restricts which source rates are free; the others are
    pinned at zero. ``delay_margin`` tightens the bounded-delay constraint to
    ``T_first <= (1 - margin) * T_downstream``. ``silent_idle_paths`` is passed
    to the throughput model.
    """

    def __init__(self, scenario: Scenario, truncation: int | None = None,
                 active=None, delay_margin: float = 0.0, silent_idle_paths: bool = False):
        self.scenario = scenario
        self.truncation = truncation
        self.delay_margin = delay_margin
        self.model = ThroughputModel(scenario, truncation, silent_idle_paths)
        m = len(scenario.flows)
        self.m = m
        self.free = np.array(sorted(range(m) if active is None else active), dtype=int)
        self.multi = [k for k, f in enumerate(scenario.flows) if f.hops > 1]
        self.single = [k for k, f in enumerate(scenario.flows) if f.hops == 1]
        self.aux_of = {k: a for a, k in enumerate(self.multi)}
        first = {}
        links_of = {k: [] for k in range(m)}
        for r, (k, h) in enumerate(zip(self.model.flow_index, self.model.hop_index)):
            links_of[int(k)].append(r)
            if h == 0:
                first[int(k)] = r
        self.first_link = np.array([first[k] for k in range(m)], dtype=int)
        self.links_of = links_of
        cons = []
        for k in self.multi:
            for r in links_of[k][1:]:
                cons.append(Constraint("S2", k, first[k], r))
        for k in self.multi:
            for r in links_of[k]:
                cons.append(Constraint("S4", k, self.aux_of[k], r))
        self.constraints = cons
        s2 = [c for c in cons if c.kind == "S2"]
        self._s2_lhs = np.array([c.lhs for c in s2], dtype=int)
        self._s2_rhs = np.array([c.rhs for c in s2], dtype=int)
        self._s4_aux = np.array([c.lhs for c in cons if c.kind == "S4"], dtype=int)
        self._s4_link = np.array([c.rhs for c in cons if c.kind == "S4"], dtype=int)
        # multi-hop links laid out flow by flow for a segmented minimum
        self._multi_links = np.array([r for k in self.multi for r in links_of[k]], dtype=int)
        self._multi_starts = np.cumsum([0] + [len(links_of[k]) for k in self.multi[:-1]]).astype(int)
        self._single_links = self.first_link[self.single]

    @property
    def n_vars(self) -> int:
        return self.m + len(self.multi)

    def split(self, point):
        point = np.asarray(point, dtype=float)
        return point[..., :self.m], point[..., self.m:]

    # -- batched pieces used by the solvers ----------------------------
    def _rates_from_free(self, X):
        if len(self.free) == self.m:
            return X
        R = np.zeros((X.shape[0], self.m))
        R[:, self.free] = X
        return R

    def _s2_violation(self, T):
        if len(self._s2_lhs) == 0:
            return np.zeros(T.shape[0])
        gap = T[:, self._s2_lhs] - (1.0 - self.delay_margin) * T[:, self._s2_rhs]
        return np.maximum(np.max(gap, axis=1), 0.0)

    def best_aux(self, T):
        """Optimal auxiliaries for given link throughputs: min(1, min over path links)."""
        if not self.multi:
            return np.zeros((T.shape[0], 0))
        A = np.minimum.reduceat(T[:, self._multi_links], self._multi_starts, axis=1)
        return np.minimum(A, 1.0)  # link throughputs are never negative

    def reduced(self, X):
        """Objective and S2 violation for free-rate rows X, auxiliaries set optimally."""
        T = self.model._throughputs(self._rates_from_free(X))
        obj = self.best_aux(T).sum(axis=1) + T[:, self._single_links].sum(axis=1)
        return obj, self._s2_violation(T)

    # -- full point evaluation ------------------------------------------
    def objective(self, point) -> float:
        q, aux = self.split(point)
        T = self.model.link_throughputs(q)
        return float(sum(T[self.first_link[k]] for k in self.single) + np.sum(aux))

    def violation(self, point) -> float:
        q, aux = self.split(point)
        box = max(np.max(np.maximum(-q, 0), initial=0), np.max(np.maximum(q - 1, 0), initial=0),
                  np.max(np.maximum(-aux, 0), initial=0), np.max(np.maximum(aux - 1, 0), initial=0))
        pinned = np.delete(q, self.free)
        box = max(box, np.max(np.abs(pinned), initial=0))
        qc = np.clip(q, 0, 1)
        T = self.model.link_throughputs(qc)[None, :]
        v = max(box, float(self._s2_violation(T)[0]))
        if len(self._s4_aux):
            v = max(v, float(np.max(np.maximum(aux[self._s4_aux] - T[0, self._s4_link], 0))))
        return v

    def point(self, rates) -> np.ndarray:
        """Complete a rate vector with its optimal auxiliaries."""
        q = as_rates(self.scenario, rates)
        T = self.model.link_throughputs(q[None, :])
        return np.concatenate([q, self.best_aux(T)[0]])


def build_problem(scenario: Scenario, truncation: int | None = None, delay_margin: float = 0.0,
                  silent_idle_paths: bool = False) -> AllocationProblem:
    return AllocationProblem(scenario, truncation, delay_margin=delay_margin,
                             silent_idle_paths=silent_idle_paths)


def evaluate(problem: AllocationProblem, point) -> tuple[float, float]:
    """(objective, max constraint violation) at ``point``."""
    point = np.asarray(point, dtype=float)
    if point.shape != (problem.n_vars,):
        raise ValueError(f"point must have {problem.n_vars} entries")
    return problem.objective(point), problem.violation(point)


def _result(problem, x, stats) -> AllocationResult:
    R = problem._rates_from_free(np.asarray(x, dtype=float)[None, :])
    pt = problem.point(R[0])
    obj, viol = evaluate(problem, pt)
    q, aux = problem.split(pt)
    return AllocationResult(rates=q, aux=aux, predicted_aat=obj,
                            feasible=bool(viol <= stats.get("tol", 1e-6)),
                            violation=viol, stats=stats)


def _polish(problem, x, fx, tol, h0, h_min=1e-4):
    """Deterministic coordinate pattern search with step halving."""
    x = x.copy()
    h = h0
    n = len(x)
    while h >= h_min:
        improved = False
        cands = []
        for d in range(n):
            for s in (h, -h):
                c = x.copy()
                c[d] = min(1.0, max(0.0, c[d] + s))
                cands.append(c)
        C = np.array(cands)
        f, v = problem.reduced(C)
        ok = (v <= tol) & (f > fx + 1e-15)
        if np.any(ok):
            b = int(np.argmax(np.where(ok, f, -np.inf)))
            x, fx = C[b], float(f[b])
            improved = True
        if not improved:
            h /= 2
    return x, fx


def solve_sa(problem: AllocationProblem, sa: SaParams = SaParams()) -> AllocationResult:
    """Simulated annealing over the free source rates.

    Restarts run in lockstep, each with its own generator spawned from
    ``sa.seed``; every walk starts at the all-zero point, which is always
    feasible. Infeasible proposals are rejected unless ``sa.penalty > 0``.
    """
    t0 = time.perf_counter()
    n = len(problem.free)
    if n == 0:
        return _result(problem, np.zeros(0), dict(iterations=0, restarts=0, best_iteration=0,
                                                  wall_time=time.perf_counter() - t0, tol=sa.tol))
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(sa.seed).spawn(sa.restarts)]
    B = sa.restarts
    X = np.zeros((B, n))
    f, v = problem.reduced(X)
    energy = f - sa.penalty * v
    best_x, best_f = X.copy(), np.where(v <= sa.tol, f, -np.inf)
    best_it = np.zeros(B, dtype=int)
    n_levels = max(1, int(math.ceil(math.log(sa.t_final / sa.t_initial) / math.log(sa.cooling))) + 1)
    it = 0
    T = sa.t_initial
    penalised = sa.penalty > 0
    for _ in range(n_levels):
        steps = np.stack([r.normal(0.0, sa.step, (sa.iters_per_temp, n)) for r in rngs], axis=1)
        # u < exp(delta / T)  <=>  T * log(u) < delta
        thresh = T * np.log(np.stack([r.random(sa.iters_per_temp) for r in rngs], axis=1))
        for s in range(sa.iters_per_temp):
            it += 1
            C = X + steps[s]
            np.maximum(C, 0.0, out=C)
            np.minimum(C, 1.0, out=C)
            fc, vc = problem.reduced(C)
            feas = vc <= sa.tol
            ec = fc - sa.penalty * vc if penalised else fc
            accept = thresh[s] < ec - energy
            if not penalised:
                accept &= feas
            if accept.any():
                X[accept] = C[accept]
                energy[accept] = ec[accept]
                better = accept & feas & (fc > best_f)
                if better.any():
                    best_x[better] = C[better]
                    best_f[better] = fc[better]
                    best_it[better] = it
        T *= sa.cooling
    b = int(np.argmax(best_f))  # argmax takes the first, i.e. lowest-seed, maximum
    x, fx = best_x[b], float(best_f[b])
    if sa.polish:
        x, fx = _polish(problem, x, fx, sa.tol, sa.step)
    stats = dict(iterations=it, restarts=B, best_iteration=int(best_it[b]), best_restart=b,
                 wall_time=time.perf_counter() - t0, tol=sa.tol)
    return _result(problem, x, stats)


MAX_GRID_VARS = 3


def solve_grid(problem: AllocationProblem, resolution: float = 0.01, tol: float = 1e-6,
               chunk: int = 50_000) -> AllocationResult:
    """Exhaustive search over a regular grid of the free source rates."""
    t0 = time.perf_counter()
    n = len(problem.free)
    if n > MAX_GRID_VARS:
        raise ValueError(f"grid search handles at most {MAX_GRID_VARS} source rates, got {n}")
    axis = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) if n else np.zeros((1, 0))
    best_f, best_x = -np.inf, None
    for lo in range(0, len(pts), chunk):
        P = pts[lo:lo + chunk]
        f, v = problem.reduced(P)
        f = np.where(v <= tol, f, -np.inf)
        b = int(np.argmax(f))
        if f[b] > best_f:
            best_f, best_x = float(f[b]), P[b]
    stats = dict(iterations=len(pts), restarts=1, best_iteration=0,
                 wall_time=time.perf_counter() - t0, tol=tol)
    return _result(problem, best_x, stats)


def s2_function(problem: AllocationProblem, constraint: Constraint):
    """The bounded-delay constraint as a function of the source rates: feasible iff <= 0."""
    if constraint.kind != "S2":
        raise ValueError("only S2 constraints depend on the rates alone")

    def g(rates) -> float:
        T = problem.model.link_throughputs(np.asarray(rates, dtype=float))
        return float(T[constraint.lhs] - (1.0 - problem.delay_margin) * T[constraint.rhs])
    return g


def convexity_witness(g, dim: int, step: float = 0.25, thetas=(0.25, 0.5, 0.75)):
    """Scan point pairs on a grid over [0, 1]^dim for g(θa + (1-θ)b) > θg(a) + (1-θ)g(b).

    Returns ``(a, b, theta, gap)`` for the largest gap found, or None when g
    looks convex on the grid. Any hit proves that g is not convex, hence that
    ``g <= 0`` need not describe a convex set.
    """
    axis = np.arange(0.0, 1.0 + 1e-9, step)
    pts = [np.array(p) for p in itertools.product(axis, repeat=dim)]
    vals = [g(p) for p in pts]
    best = None
    for (a, ga), (b, gb) in itertools.combinations(zip(pts, vals), 2):
        for th in thetas:
            gap = g(th * a + (1 - th) * b) - (th * ga + (1 - th) * gb)
            if gap > 1e-9 and (best is None or gap > best[3]):
                best = (a, b, th, gap)
    return best


# -- baselines ------------------------------------------------------------

def end_to_end_success_probability(flow: Flow, scenario: Scenario) -> float:
    """Product over the path of each link's interference-free capture probability."""
    pos, phy = scenario.positions, scenario.phy
    p = 1.0
    for i, j in flow.links:
        p *= _phy.noise_factor(i, j, pos, phy)
    return p


def best_path_flow(scenario: Scenario) -> int:
    probs = [end_to_end_success_probability(f, scenario) for f in scenario.flows]
    return int(np.argmax(probs))  # first maximum: lowest flow index


def baseline_best_path(scenario: Scenario, truncation: int | None = None,
                       sa: SaParams = SaParams(), delay_margin: float = 0.0,
                       silent_idle_paths: bool = False) -> AllocationResult:
    """Optimise only the flow whose path has the highest end-to-end success probability.

    The other source rates are pinned at zero, so the feasible set is a subset
    of the full problem's.
    """
    k = best_path_flow(scenario)
    prob = AllocationProblem(scenario, truncation, active=[k], delay_margin=delay_margin,
                             silent_idle_paths=silent_idle_paths)
    res = solve_sa(prob, sa)
    res.stats["best_flow"] = k
    return res


def baseline_fmp(scenario: Scenario) -> np.ndarray:
    """Full multipath: every source at one packet per slot."""
    return np.ones(len(scenario.flows))


@dataclass(frozen=True)
class RoundRobin:
    """Source k (in flow order) transmits, with probability one, only in slots s with s % m == k."""
    m: int

    def active_flow(self, slot: int) -> int:
        return slot % self.m

    def activations(self, n_slots: int) -> np.ndarray:
        return np.bincount(np.arange(n_slots) % self.m, minlength=self.m)


def baseline_rr(scenario: Scenario) -> RoundRobin:
    return RoundRobin(len(scenario.flows))
