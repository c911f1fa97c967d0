"""Cooperative multi-agent Q-learning with relational team rewards.

A self-contained grid-world research engine: per-agent Q-networks trained
against an additively decomposed joint value, team rewards mixed through a
directed relational network, and a malfunction trigger that swaps in an
assistance network and restarts exploration when an agent breaks.
"""

from .gridworld import AgentAction, GridLayout, GridWorld, DEFAULT_LAYOUT
from .learner import EpsilonSchedule, ReplayMemory, Transition, VdnTrainer
from .malfunction import MalfunctionSpec, MalfunctionTrigger, on_detection
from .relational import (
    RelationalNetwork,
    assistance_network,
    self_interested_network,
    team_reward,
    team_reward_batch,
)

__all__ = [
    "AgentAction",
    "GridLayout",
    "GridWorld",
    "DEFAULT_LAYOUT",
    "EpsilonSchedule",
    "ReplayMemory",
    "Transition",
    "VdnTrainer",
    "MalfunctionSpec",
    "MalfunctionTrigger",
    "on_detection",
    "RelationalNetwork",
    "assistance_network",
    "self_interested_network",
    "team_reward",
    "team_reward_batch",
]

__version__ = "0.1.0"
