"""Directed weighted relations between agents and the team-reward mixing rule.

The team reward is the double sum over directed edges: each agent i
contributes w_ij * r_j for every agent j it places importance on. With the
self-interested network (unit self-loops only) this reduces to the plain
reward sum, which is exactly the VDN team reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_unit_interval


@dataclass(frozen=True)
class RelationalNetwork:
    """n x n edge-weight matrix; entry (i, j) is the importance i puts on j."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"relational weights must be square, got shape {w.shape}")
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("relational weights must lie in [0, 1]")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def team_reward(network: RelationalNetwork, rewards: np.ndarray) -> float:
    """Sum over i of sum over j of w_ij * r_j."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != (network.n,):
        raise ValueError(f"reward vector has shape {r.shape}, expected ({network.n},)")
    return float(np.sum(network.weights @ r))


def team_reward_batch(network: RelationalNetwork, rewards: np.ndarray) -> np.ndarray:
    """Team reward of each row of a (batch, n) reward matrix."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 2 or r.shape[1] != network.n:
        raise ValueError(f"reward batch has shape {r.shape}, expected (batch, {network.n})")
    return (r @ network.weights.T).sum(axis=1)


def self_interested_network(n: int) -> RelationalNetwork:
    """Unit self-loops only: every agent values just its own reward."""
    if n < 1:
        raise ValueError(f"need at least one agent, got n={n}")
    return RelationalNetwork(np.eye(n))


def assistance_network(
    n: int,
    malfunctioning: set[int] | frozenset[int],
    assist_weight: float = 1.0,
    keep_self_edges: bool = True,
) -> RelationalNetwork:
    """Self-loops plus edges from every healthy agent toward each malfunctioning one."""
    check_unit_interval("assist_weight", assist_weight)
    bad = sorted(malfunctioning)
    if bad and not all(0 <= g < n for g in bad):
        raise ValueError(f"malfunctioning indices {bad} outside 0..{n - 1}")
    w = np.eye(n)
    if not keep_self_edges:
        for g in bad:
            w[g, g] = 0.0
    for g in bad:
        for i in range(n):
            if i != g and i not in malfunctioning:
                w[i, g] = assist_weight
    return RelationalNetwork(w)
