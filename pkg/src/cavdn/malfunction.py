"""Malfunction injection, reward-drop detection, and the adaptation response.

An immobilization malfunction overrides the affected agent's chosen actions
with Idle from its onset episode onward; the agent can still be displaced by
pushes. Detection watches the periodic greedy-evaluation rewards: when an
agent's evaluations stay more than ``drop_threshold`` below a baseline taken
from the evaluations preceding the drop, for ``window`` consecutive
evaluations, the trigger fires once. On detection the exploration schedule is
restarted, and under the adaptive algorithm the relational network is swapped
for an assistance network centered on the detected agents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import AgentAction
from .learner import EpsilonSchedule
from .relational import RelationalNetwork, assistance_network


@dataclass(frozen=True)
class MalfunctionSpec:
    """Which agent breaks, when, and how."""

    agent_index: int = 3
    onset_episode: int = 5000
    kind: str = "immobilized"

    def __post_init__(self) -> None:
        if self.agent_index < 0:
            raise ValueError(f"agent_index must be non-negative, got {self.agent_index}")
        if self.onset_episode < 0:
            raise ValueError(f"onset_episode must be non-negative, got {self.onset_episode}")
        if self.kind != "immobilized":
            raise ValueError(f"unsupported malfunction kind {self.kind!r}")

    def apply(self, episode: int, agent_index: int, chosen: AgentAction) -> AgentAction:
        """Executed action for this agent at this episode (identity before onset)."""
        if episode >= self.onset_episode and agent_index == self.agent_index:
            return AgentAction.IDLE
        return chosen

    def action_filter(self, episode: int):
        """Per-episode override callable for the training/evaluation loops."""
        return lambda agent_index, chosen: self.apply(episode, agent_index, chosen)


class MalfunctionTrigger:
    """Detects a sustained significant drop in any agent's evaluation reward.

    ``observe`` consumes one per-agent vector of greedy-evaluation rewards per
    call. The reference for each agent is the median of up to
    ``baseline_window`` evaluations older than the current run of low ones
    (excluding the newest ``window`` entries, so a drop in progress cannot
    dilute its own reference). An agent counts as dropped when its reward sits
    more than ``drop_threshold`` below that reference, and the trigger fires
    after ``window`` consecutive dropped evaluations, at most once.

    Two guards keep ordinary training churn from masquerading as a
    malfunction: the first ``warmup_evaluations`` observations never fire, and
    drops only count while the whole team's reference windows are stable —
    every evaluation of every agent within ``stability_threshold`` of that
    agent's median. A team still sorting out its joint policy routinely
    collapses one member's reward for hundreds of episodes; a drop is only
    meaningful against a converged joint behavior, so the trigger demands a
    flat stretch of team evaluations before it will blame a malfunction.
    """

    def __init__(
        self,
        n_agents: int = 4,
        window: int = 5,
        drop_threshold: float = 8.0,
        baseline_window: int = 10,
        warmup_evaluations: int = 20,
        stability_threshold: float = 1.0,
    ):
        if window < 1:
            raise ValueError(f"window must be positive, got {window}")
        if baseline_window < 1:
            raise ValueError(f"baseline_window must be positive, got {baseline_window}")
        if drop_threshold <= 0.0:
            raise ValueError(f"drop_threshold must be positive, got {drop_threshold}")
        if stability_threshold < 0.0:
            raise ValueError(f"stability_threshold must be >= 0, got {stability_threshold}")
        self.n_agents = n_agents
        self.window = window
        self.drop_threshold = drop_threshold
        self.baseline_window = baseline_window
        self.warmup_evaluations = warmup_evaluations
        self.stability_threshold = stability_threshold
        self.fired = False
        self.fire_observation: int | None = None
        self.observations = 0
        # recent evaluations, newest last; only window + baseline_window are needed
        self._recent: list[np.ndarray] = []
        self._below_counts = np.zeros(n_agents, dtype=np.int64)

    def observe(self, eval_rewards) -> tuple[int, ...] | None:
        """Record one evaluation; returns the detected agent set when firing."""
        rewards = np.asarray(eval_rewards, dtype=np.float64)
        if rewards.shape != (self.n_agents,):
            raise ValueError(f"rewards shape {rewards.shape}, expected ({self.n_agents},)")
        self.observations += 1
        self._recent.append(rewards)
        keep = self.window + self.baseline_window
        if len(self._recent) > keep:
            del self._recent[0]
        if self.fired:
            return None

        references = [self._reference(agent) for agent in range(self.n_agents)]
        team_stable = all(
            ref is not None and ref[1] <= self.stability_threshold for ref in references
        )
        detected: list[int] = []
        for agent in range(self.n_agents):
            dropped = (
                team_stable
                and rewards[agent] < references[agent][0] - self.drop_threshold
            )
            self._below_counts[agent] = self._below_counts[agent] + 1 if dropped else 0
            if (
                self._below_counts[agent] >= self.window
                and self.observations > self.warmup_evaluations
            ):
                detected.append(agent)
        if detected:
            self.fired = True
            self.fire_observation = self.observations
            return tuple(detected)
        return None

    def _reference(self, agent: int) -> tuple[float, float] | None:
        """(median, max deviation from median) of the pre-run evaluations."""
        end = len(self._recent) - self.window
        if end <= 0:
            return None
        start = max(0, end - self.baseline_window)
        values = np.array([r[agent] for r in self._recent[start:end]])
        median = float(np.median(values))
        return median, float(np.max(np.abs(values - median)))


def on_detection(
    detected: tuple[int, ...],
    schedule: EpsilonSchedule,
    episode: int,
    n_agents: int,
    adapt_relations: bool,
    current: RelationalNetwork,
    assist_weight: float = 1.0,
    keep_self_edges: bool = True,
) -> RelationalNetwork:
    """Reset exploration; swap in an assistance network when adapting.

    The non-adaptive baseline gets the same exploration reset but keeps its
    reward mixing unchanged.
    """
    if not detected:
        raise ValueError("on_detection called with an empty detection set")
    schedule.reset(episode)
    if adapt_relations:
        return assistance_network(n_agents, set(detected), assist_weight, keep_self_edges)
    return current
