import numpy as np
import pytest
from hypothesis import settings

from tofra import phy
from tofra.phy import PhyParams
from tofra.scenario import Flow, Node, Scenario, assign_roles, fig3_scenario
from tofra.throughput import node_probs

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def fig3():
    return fig3_scenario(1.0)


def make_scenario(xy, paths, gamma=1.0, eta=7e-11, p_tx=0.1, alpha=4.0, relay_prob=0.5):
    """Routed scenario from coordinates and explicit node paths."""
    nodes = tuple(Node(i, float(x), float(y)) for i, (x, y) in enumerate(xy))
    flows = tuple(Flow(k, p[0], p[-1], tuple(p)) for k, p in enumerate(paths))
    nodes = assign_roles(nodes, flows)
    nodes = tuple(Node(n.id, n.x, n.y, n.role, relay_prob if n.role == "relay" else None)
                  for n in nodes)
    sc = Scenario(nodes, flows, PhyParams(gamma=gamma, eta=eta, p_tx=p_tx, alpha=alpha))
    sc.validate()
    return sc


def random_scenario(rng, n_flows=3, max_hops=2, side=300.0, gamma=None):
    """Random small routed scenario with node-disjoint paths."""
    hops = rng.integers(1, max_hops + 1, n_flows)
    n = int(np.sum(hops + 1))
    xy = rng.uniform(0, side, (n, 2))
    paths, nxt = [], 0
    for h in hops:
        paths.append(list(range(nxt, nxt + h + 1)))
        nxt += h + 1
    g = float(rng.uniform(0.25, 2.0)) if gamma is None else gamma
    return make_scenario(xy, paths, gamma=g, eta=float(rng.choice([0.0, 7e-11, 1e-8])),
                         relay_prob=float(rng.uniform(0.2, 0.8)))


def slot_sampler(link, sc, rates, n, rng):
    """Direct per-slot sampling: Bernoulli transmitters, Rayleigh fades, SINR test."""
    i, j = link
    q = node_probs(sc, rates)
    tx_nodes = np.array(sc.transmitters)
    on = rng.random((n, len(tx_nodes))) < q[tx_nodes]
    col = {k: c for c, k in enumerate(tx_nodes)}
    g = phy.gain_matrix(sc.positions, sc.phy)
    fades = rng.exponential(sc.phy.v, (n, len(tx_nodes)))
    power = fades * g[tx_nodes, j]
    interf = (power * on).sum(axis=1) - power[:, col[i]] * on[:, col[i]]
    if j in col:
        interf -= power[:, col[j]] * on[:, col[j]]
        busy = on[:, col[j]]
    else:
        busy = np.zeros(n, bool)
    ok = on[:, col[i]] & ~busy & (power[:, col[i]] >= sc.phy.gamma * (sc.phy.eta + interf))
    return ok.mean()


# one line per acceptance criterion, echoed after the run
VERDICTS: list[str] = []


def verdict(label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
