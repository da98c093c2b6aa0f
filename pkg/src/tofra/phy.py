"""Physical-layer math: path-loss gains, SINR and Rayleigh capture probability.

Positions are an ``(N, 2)`` array indexed by node id. All functions are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np


class GeometryError(ValueError):
    """Two nodes share a position, so the path loss is undefined."""


class HalfDuplexError(ValueError):
    """The receiver of a link is listed among the active transmitters."""


@dataclass(frozen=True)
class PhyParams:
    gamma: float  # SINR threshold
    eta: float  # receiver noise power [W]
    p_tx: float  # transmit power [W]
    alpha: float  # path-loss exponent
    v: float = 1.0  # mean of the exponential fade A(i, j)
    # optional per-link fade means, keyed by (tx, rx)
    v_links: Mapping[tuple[int, int], float] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not self.p_tx > 0:
            raise ValueError(f"p_tx must be > 0, got {self.p_tx}")
        if not 2 <= self.alpha <= 6:
            raise ValueError(f"alpha must lie in [2, 6], got {self.alpha}")
        if not self.v > 0 or any(not x > 0 for x in self.v_links.values()):
            raise ValueError("fade means must be > 0")

    def fade_mean(self, i: int, j: int) -> float:
        return self.v_links.get((i, j), self.v)

    def with_gamma(self, gamma: float) -> "PhyParams":
        return replace(self, gamma=gamma)


# default transmit power, noise and path loss; gamma is swept per experiment
TABLE_III = dict(eta=7e-11, p_tx=0.1, alpha=4.0)


def distance(i: int, j: int, positions) -> float:
    pi, pj = positions[i], positions[j]
    return math.hypot(pi[0] - pj[0], pi[1] - pj[1])


def received_power_factor(i: int, j: int, positions, phy: PhyParams) -> float:
    """Mean-free received power g(i, j) = P_tx * r^-alpha."""
    if i == j:
        raise ValueError("received_power_factor needs two distinct nodes")
    r = distance(i, j, positions)
    if r == 0:
        raise GeometryError(f"nodes {i} and {j} are coincident")
    return phy.p_tx * r ** (-phy.alpha)


def gain_matrix(positions, phy: PhyParams) -> np.ndarray:
    """All pairwise g(i, j); the diagonal is left at zero."""
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    off = ~np.eye(len(pos), dtype=bool)
    if np.any(r[off] == 0):
        a, b = np.argwhere((r == 0) & off)[0]
        raise GeometryError(f"nodes {a} and {b} are coincident")
    g = np.zeros_like(r)
    g[off] = phy.p_tx * r[off] ** (-phy.alpha)
    return g


def noise_factor(i: int, j: int, positions, phy: PhyParams) -> float:
    """Probability that the fade alone clears the noise: exp(-gamma*eta / (v g))."""
    g = received_power_factor(i, j, positions, phy)
    return math.exp(-phy.gamma * phy.eta / (phy.fade_mean(i, j) * g))


def interference_factor(i: int, j: int, k: int, positions, phy: PhyParams) -> float:
    """Probability that link (i, j) survives interferer k alone (noise ignored)."""
    sig = phy.fade_mean(i, j) * received_power_factor(i, j, positions, phy)
    intf = phy.fade_mean(k, j) * received_power_factor(k, j, positions, phy)
    return 1.0 / (1.0 + phy.gamma * intf / sig)


def success_probability(i: int, j: int, active: Iterable[int], positions,
                        phy: PhyParams) -> float:
    """Capture probability of link (i, j) under Rayleigh fading.

    ``active`` is the set of concurrent transmitters and must contain ``i``
    but not ``j``.
    """
    active = set(active)
    if i not in active:
        raise ValueError(f"transmitter {i} must be in the active set")
    if j in active:
        raise HalfDuplexError(f"receiver {j} is transmitting (half-duplex)")
    p = noise_factor(i, j, positions, phy)
    for k in sorted(active - {i}):
        p *= interference_factor(i, j, k, positions, phy)
    return p


def instantaneous_sinr(i: int, j: int, active: Iterable[int], fades: Mapping[int, float],
                       positions, phy: PhyParams) -> float:
    """SINR at ``j`` for the packet from ``i`` given one fade draw per transmitter.

    ``fades[k]`` is the realised A(k, j). Returns ``inf`` when there is neither
    noise nor interference.
    """
    active = set(active)
    if i not in active:
        raise ValueError(f"transmitter {i} must be in the active set")
    signal = fades[i] * received_power_factor(i, j, positions, phy)
    denom = phy.eta
    for k in active - {i}:
        denom += fades[k] * received_power_factor(k, j, positions, phy)
    if denom == 0:
        return math.inf
    return signal / denom


def captured(sinr: float, phy: PhyParams) -> bool:
    return sinr >= phy.gamma
