"""Team Q-learning with additive value decomposition and relational rewards.

Each agent owns a prediction network and a periodically refreshed target copy.
Actions are chosen epsilon-greedily from the prediction nets; transitions go
to a shared replay memory storing raw per-agent rewards, so the team reward
can be mixed (and re-mixed after a relational-network swap) at training time.
The joint value is the across-agent sum of chosen-action Q-values, and the
squared TD error against the mixed team reward is minimized with Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import network as nn
from .gridworld import GridWorld
from .relational import RelationalNetwork, self_interested_network, team_reward, team_reward_batch


@dataclass
class AgentBrain:
    """Prediction and target nets for one agent, plus its optimizer state."""

    prediction: nn.Mlp
    target: nn.Mlp
    optimizer: nn.AdamState


@dataclass
class Transition:
    state_encoding: np.ndarray
    joint_action: list[int]
    rewards: np.ndarray
    next_state_encoding: np.ndarray
    done: bool


class ReplayMemory:
    """Fixed-capacity ring buffer over transition time-steps."""

    def __init__(self, capacity: int, state_dim: int, n_agents: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.states = np.empty((capacity, state_dim))
        self.actions = np.empty((capacity, n_agents), dtype=np.int64)
        self.rewards = np.empty((capacity, n_agents))
        self.next_states = np.empty((capacity, state_dim))
        self.dones = np.empty(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.states[i] = t.state_encoding
        self.actions[i] = t.joint_action
        self.rewards[i] = t.rewards
        self.next_states[i] = t.next_state_encoding
        self.dones[i] = t.done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        """Uniform batch of distinct slots: (states, actions, rewards, next_states, dones)."""
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from memory of size {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


@dataclass
class EpsilonSchedule:
    """Linear decay from start to end over a fixed number of episodes.

    ``reset(episode)`` restarts the decay from that episode, restoring the
    starting exploration rate.
    """

    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    decay_episodes: int = 2000
    reset_episode: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError(
                f"need 0 <= epsilon_end <= epsilon_start <= 1, "
                f"got {self.epsilon_end}, {self.epsilon_start}"
            )
        if self.decay_episodes < 1:
            raise ValueError(f"decay_episodes must be positive, got {self.decay_episodes}")

    def value(self, episode: int) -> float:
        progress = min(1.0, max(0, episode - self.reset_episode) / self.decay_episodes)
        return self.epsilon_start + progress * (self.epsilon_end - self.epsilon_start)

    def reset(self, episode: int) -> None:
        self.reset_episode = episode


@dataclass
class EpisodeRecord:
    episode: int
    agent_rewards: np.ndarray
    team_reward: float
    epsilon: float
    steps: int
    mean_loss: float | None
    losses: list[float] = field(default_factory=list)


class VdnTrainer(BaseEstimator):
    """Trainer for a team of independent Q-nets with an additive joint value.

    Follows the scikit-learn estimator conventions: the constructor only
    stores hyperparameters, learned state lives in trailing-underscore
    attributes created on first use, and ``fit``/``predict`` make the learned
    joint policy usable like any other estimator. The relational mixing
    network is an argument of the training methods because the surrounding
    experiment may swap it mid-run.
    """

    def __init__(
        self,
        n_agents: int = 4,
        n_actions: int = 5,
        state_dim: int = 68,
        hidden_dims: tuple[int, ...] = (128, 128),
        gamma: float = 0.99,
        learning_rate: float = 0.001,
        batch_size: int = 32,
        updates_per_episode: int = 10,
        target_update_interval: int = 200,
        memory_capacity: int = 50_000,
        epsilon_start: float = 1.0,
        epsilon_end: float = 0.05,
        epsilon_decay_episodes: int = 2000,
        episodes: int = 1000,
        seed: int = 0,
    ):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.state_dim = state_dim
        self.hidden_dims = hidden_dims
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.updates_per_episode = updates_per_episode
        self.target_update_interval = target_update_interval
        self.memory_capacity = memory_capacity
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_episodes = epsilon_decay_episodes
        self.episodes = episodes
        self.seed = seed

    # -- state management -------------------------------------------------

    def setup(self) -> "VdnTrainer":
        """Build networks, optimizer states, replay memory and the RNG."""
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        dims = (self.state_dim, *self.hidden_dims, self.n_actions)
        self.rng_ = np.random.default_rng(self.seed)
        self.brains_ = []
        for _ in range(self.n_agents):
            pred = nn.create_mlp(dims, self.rng_)
            tgt = nn.Mlp(dims, pred.theta.copy())
            opt = nn.AdamState(learning_rate=self.learning_rate)
            self.brains_.append(AgentBrain(pred, tgt, opt))
        self.memory_ = ReplayMemory(self.memory_capacity, self.state_dim, self.n_agents)
        self.schedule_ = EpsilonSchedule(
            self.epsilon_start, self.epsilon_end, self.epsilon_decay_episodes
        )
        self.episodes_trained_ = 0
        return self

    def _ensure_setup(self) -> None:
        if not hasattr(self, "brains_"):
            self.setup()

    # -- policies ----------------------------------------------------------

    def select_actions(self, state: np.ndarray, epsilon: float) -> list[int]:
        """Per-agent epsilon-greedy actions from the prediction nets."""
        actions = []
        for brain in self.brains_:
            if epsilon > 0.0 and self.rng_.random() < epsilon:
                actions.append(int(self.rng_.integers(self.n_actions)))
            else:
                actions.append(int(np.argmax(nn.forward(brain.prediction, state))))
        return actions

    def predict(self, states: np.ndarray) -> np.ndarray:
        """Greedy joint actions, one row of agent action indices per state."""
        self._ensure_setup()
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        out = np.empty((states.shape[0], self.n_agents), dtype=np.int64)
        for i, brain in enumerate(self.brains_):
            out[:, i] = np.argmax(nn.forward(brain.prediction, states), axis=1)
        return out

    # -- joint values -------------------------------------------------------

    def q_total_prediction(self, states: np.ndarray, joint_actions: np.ndarray) -> np.ndarray:
        """Across-agent sum of the prediction Q-values of the taken actions."""
        states = np.atleast_2d(states)
        joint_actions = np.atleast_2d(joint_actions)
        b = states.shape[0]
        if joint_actions.shape != (b, self.n_agents):
            raise ValueError(
                f"joint_actions shape {joint_actions.shape}, expected ({b}, {self.n_agents})"
            )
        rows = np.arange(b)
        total = np.zeros(b)
        for i, brain in enumerate(self.brains_):
            total += nn.forward(brain.prediction, states)[rows, joint_actions[:, i]]
        return total

    def q_total_target(self, next_states: np.ndarray) -> np.ndarray:
        """Across-agent sum of per-agent maxima of the target Q-values."""
        next_states = np.atleast_2d(next_states)
        total = np.zeros(next_states.shape[0])
        for brain in self.brains_:
            total += nn.forward(brain.target, next_states).max(axis=1)
        return total

    # -- learning -----------------------------------------------------------

    def td_update(
        self,
        states: np.ndarray,
        joint_actions: np.ndarray,
        rewards: np.ndarray,
        next_states: np.ndarray,
        dones: np.ndarray,
        mixing: RelationalNetwork,
    ) -> float:
        """One gradient step on the mean squared TD error; returns the loss.

        The bootstrap term uses the frozen target nets and is masked to zero
        on terminal transitions; gradients flow only into the prediction nets.
        """
        b = states.shape[0]
        r_team = team_reward_batch(mixing, rewards)
        targets = r_team + self.gamma * self.q_total_target(next_states) * (~dones)

        rows = np.arange(b)
        caches = []
        q_pred = np.zeros(b)
        for i, brain in enumerate(self.brains_):
            acts = nn._forward_cached(brain.prediction, states)
            caches.append(acts)
            q_pred += acts[-1][rows, joint_actions[:, i]]

        delta = targets - q_pred
        loss = float(np.mean(delta**2))
        if not np.isfinite(loss):
            raise nn.NetworkError(
                f"non-finite TD loss (targets range {targets.min()}..{targets.max()})"
            )
        dq_chosen = (-2.0 / b) * delta
        for i, brain in enumerate(self.brains_):
            dout = np.zeros((b, self.n_actions))
            dout[rows, joint_actions[:, i]] = dq_chosen
            grad = nn._backward_from_cache(brain.prediction, caches[i], dout)
            nn.adam_step(brain.prediction, grad, brain.optimizer)
        return loss

    def train_episode(
        self,
        env: GridWorld,
        episode_index: int,
        mixing: RelationalNetwork,
        epsilon: float,
        action_filter=None,
    ) -> EpisodeRecord:
        """Play one episode, store transitions, then run the update iterations.

        ``action_filter(agent_index, action) -> action`` overrides chosen
        actions before execution (malfunction injection); the stored
        transition records the action actually executed.
        """
        self._ensure_setup()
        state = env.reset()
        agent_rewards = np.zeros(self.n_agents)
        mixed_total = 0.0
        steps = 0
        while not env.is_terminal():
            actions = self.select_actions(state, epsilon)
            if action_filter is not None:
                actions = [action_filter(i, a) for i, a in enumerate(actions)]
            outcome = env.step(actions)
            # a step-limit cutoff is truncation, not termination: the stored
            # done flag only marks value-grounding terminals, so the TD target
            # keeps bootstrapping through timeouts (the encoding carries no
            # step counter, and masking timeouts would hand the same state
            # conflicting targets)
            self.memory_.push(
                Transition(state, actions, outcome.rewards, outcome.next_state_encoding,
                           outcome.done and not outcome.truncated)
            )
            agent_rewards += outcome.rewards
            mixed_total += team_reward(mixing, outcome.rewards)
            state = outcome.next_state_encoding
            steps += 1

        losses = []
        for _ in range(self.updates_per_episode):
            if self.memory_.size >= self.batch_size:
                losses.append(self.td_update(*self.memory_.sample(self.rng_, self.batch_size),
                                             mixing))
        if (episode_index + 1) % self.target_update_interval == 0:
            self.refresh_targets()
        self.episodes_trained_ = episode_index + 1
        mean_loss = float(np.mean(losses)) if losses else None
        return EpisodeRecord(episode_index, agent_rewards, mixed_total, epsilon, steps,
                             mean_loss, losses)

    def refresh_targets(self) -> None:
        for brain in self.brains_:
            nn.copy_parameters(brain.prediction, brain.target)

    def evaluate_greedy(self, env: GridWorld, action_filter=None) -> np.ndarray:
        """Per-agent reward sums of one greedy episode; touches no learner state."""
        self._ensure_setup()
        state = env.reset()
        totals = np.zeros(self.n_agents)
        while not env.is_terminal():
            actions = self.select_actions(state, epsilon=0.0)
            if action_filter is not None:
                actions = [action_filter(i, a) for i, a in enumerate(actions)]
            outcome = env.step(actions)
            totals += outcome.rewards
            state = outcome.next_state_encoding
        return totals

    def fit(self, env: GridWorld, mixing: RelationalNetwork | None = None) -> "VdnTrainer":
        """Train for ``self.episodes`` episodes with the linear epsilon schedule."""
        self.setup()
        if mixing is None:
            mixing = self_interested_network(self.n_agents)
        for episode in range(self.episodes):
            self.train_episode(env, episode, mixing, self.schedule_.value(episode))
        return self

    # -- persistence ----------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """All prediction and target parameters in one versioned npz file."""
        self._ensure_setup()
        arrays = {
            "format_version": np.int64(nn.SNAPSHOT_FORMAT_VERSION),
            "layer_dims": np.asarray(self.brains_[0].prediction.layer_dims, dtype=np.int64),
        }
        for i, brain in enumerate(self.brains_):
            arrays[f"prediction_{i}"] = brain.prediction.theta
            arrays[f"target_{i}"] = brain.target.theta
        np.savez(path, **arrays)

    def load_checkpoint(self, path) -> None:
        self._ensure_setup()
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != nn.SNAPSHOT_FORMAT_VERSION:
                raise nn.NetworkError(f"checkpoint format version {version} not supported")
            dims = tuple(int(d) for d in data["layer_dims"])
            for i, brain in enumerate(self.brains_):
                if brain.prediction.layer_dims != dims:
                    raise nn.NetworkError(
                        f"checkpoint architecture {dims} does not match "
                        f"{brain.prediction.layer_dims}"
                    )
                brain.prediction.theta[...] = data[f"prediction_{i}"]
                brain.target.theta[...] = data[f"target_{i}"]
