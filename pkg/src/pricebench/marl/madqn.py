"""Independent deep Q-learning over discrete price-change bins.

Each agent owns a Q-network with one 21-bin head per product, a hard-copied
target network, and a recency-biased replay buffer. No information is shared
between agents: act and learn consume only the agent's own state, action and
reward (there is deliberately no joint-batch surface here).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..market import MarketConfig, MarketObservation, ProductSpec, derive_rng
from ..nn import (
    Adam,
    DenseNet,
    EPSILON_GREEDY_DEFAULT,
    ExplorationSchedule,
    ReplayBuffer,
    TrainingError,
    Transition,
    hard_update,
    soft_update,
)
from .common import MarlAgentBase, N_PRICE_BINS, discretize_action, encode_state, state_dim


@dataclass(frozen=True)
class DqnHyper:
    lr: float = 0.001
    gamma: float = 0.95
    batch_size: int = 64
    buffer_capacity: int = 50_000
    recency_decay: float = 0.999
    warm_up: int = 64
    target_update_every: int = 5
    soft_tau: float = 0.0  # > 0 switches to Polyak target updates every learn call
    hidden: tuple[int, ...] = (128, 64, 32)
    schedule: ExplorationSchedule = EPSILON_GREEDY_DEFAULT
    updates_per_step: int = 1

    @classmethod
    def from_params(cls, params: dict) -> "DqnHyper":
        sched = EPSILON_GREEDY_DEFAULT
        if "epsilon_start" in params or "epsilon_decay" in params or "epsilon_floor" in params:
            sched = ExplorationSchedule(
                "epsilon_greedy",
                start=float(params.get("epsilon_start", sched.start)),
                decay=float(params.get("epsilon_decay", sched.decay)),
                floor=float(params.get("epsilon_floor", sched.floor)),
            )
        return cls(
            lr=float(params.get("lr", cls.lr)),
            gamma=float(params.get("gamma", cls.gamma)),
            batch_size=int(params.get("batch_size", cls.batch_size)),
            buffer_capacity=int(params.get("buffer_capacity", cls.buffer_capacity)),
            recency_decay=float(params.get("recency_decay", cls.recency_decay)),
            warm_up=int(params.get("warm_up", cls.warm_up)),
            target_update_every=int(params.get("target_update_every", cls.target_update_every)),
            soft_tau=float(params.get("soft_tau", cls.soft_tau)),
            hidden=tuple(params.get("hidden", cls.hidden)),
            schedule=sched,
            updates_per_step=int(params.get("updates_per_step", cls.updates_per_step)),
        )


class DqnCore:
    """Q-learning engine over `n_heads` independent discrete action heads."""

    def __init__(
        self,
        state_size: int,
        n_heads: int,
        n_bins: int,
        hyper: DqnHyper,
        rng: np.random.Generator,
    ):
        self.state_size = state_size
        self.n_heads = n_heads
        self.n_bins = n_bins
        self.hyper = hyper
        self.rng = rng
        sizes = [state_size, *hyper.hidden, n_heads * n_bins]
        acts = ["relu"] * len(hyper.hidden) + ["linear"]
        self.net = DenseNet(sizes, acts, rng)
        self.target = self.net.clone()
        self.optimizer = Adam(self.net.params())
        self.buffer = ReplayBuffer(hyper.buffer_capacity, hyper.recency_decay)
        self.learn_calls = 0

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.net.forward(state).reshape(self.n_heads, self.n_bins)

    def greedy_bins(self, state: np.ndarray) -> np.ndarray:
        # np.argmax breaks ties toward the lowest bin index
        return np.argmax(self.q_values(state), axis=1)

    def act(self, state: np.ndarray, episode: int) -> np.ndarray:
        epsilon = self.hyper.schedule.value(episode)
        bins = self.greedy_bins(state)
        explore = self.rng.random(self.n_heads) < epsilon
        random_bins = self.rng.integers(0, self.n_bins, size=self.n_heads)
        return np.where(explore, random_bins, bins)

    def store(self, transition: Transition) -> None:
        self.buffer.push(transition)

    def learn(self) -> float | None:
        """One TD step on a recency-sampled batch; None while warming up."""
        if len(self.buffer) < max(self.hyper.warm_up, 1):
            return None
        batch = self.buffer.sample(self.hyper.batch_size, self.rng)
        states = np.stack([t.state for t in batch])
        actions = np.stack([np.asarray(t.action, dtype=int) for t in batch])
        rewards = np.asarray([t.reward for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        done = np.asarray([t.done for t in batch], dtype=float)

        b = len(batch)
        target_q = self.target.forward(next_states).reshape(b, self.n_heads, self.n_bins)
        bootstrap = target_q.max(axis=2)  # (B, H)
        y = rewards[:, None] + self.hyper.gamma * (1.0 - done)[:, None] * bootstrap

        out, cache = self.net.forward_cached(states)
        q = out.reshape(b, self.n_heads, self.n_bins)
        rows = np.arange(b)[:, None]
        heads = np.arange(self.n_heads)[None, :]
        chosen = q[rows, heads, actions]
        err = chosen - y
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite TD loss; batch rewards {rewards.tolist()}, "
                f"q range [{q.min()}, {q.max()}]"
            )

        upstream = np.zeros_like(q)
        upstream[rows, heads, actions] = 2.0 * err / err.size
        grads, _ = self.net.backward(cache, upstream.reshape(b, -1))
        self.optimizer.step(self.net.params(), grads, self.hyper.lr)

        self.learn_calls += 1
        if self.hyper.soft_tau > 0:
            soft_update(self.target, self.net, self.hyper.soft_tau)
        elif self.learn_calls % self.hyper.target_update_every == 0:
            hard_update(self.target, self.net)
        return loss


class MadqnAgent(MarlAgentBase):
    """Pricing wrapper: encode market state, pick one bin per product, learn locally."""

    def __init__(
        self,
        agent_id: str,
        product_specs: list[ProductSpec],
        config: MarketConfig,
        hyper: DqnHyper | None = None,
    ):
        super().__init__(agent_id, product_specs, config)
        self.hyper = hyper or DqnHyper()
        self.core = DqnCore(
            state_size=state_dim(len(product_specs)),
            n_heads=len(product_specs),
            n_bins=N_PRICE_BINS,
            hyper=self.hyper,
            rng=derive_rng(config.seed, "agent", agent_id),
        )
        self._pending: tuple[np.ndarray, np.ndarray] | None = None
        self.last_loss: float | None = None

    def propose_prices(self, observation: MarketObservation) -> dict[str, float]:
        state = encode_state(self, observation)
        bins = self.core.act(state, self.episode_index)
        self._pending = (state, bins)
        changes = {
            spec.product_id: discretize_action(
                int(b), N_PRICE_BINS, self.config.max_weekly_change
            )
            for spec, b in zip(self.product_specs, bins)
        }
        return self._apply_changes(changes)

    def feedback(self, observation, prev_observation, done: bool) -> None:
        if self._pending is None:
            return
        state, bins = self._pending
        self._pending = None
        reward = self._reward_from(observation, prev_observation)
        next_state = encode_state(self, observation)
        self.core.store(Transition(state, bins, reward, next_state, done))
        for _ in range(self.hyper.updates_per_step):
            self.last_loss = self.core.learn()

    def checkpoint_state(self) -> dict:
        return {
            "kind": "madqn",
            "layer_sizes": self.core.net.layer_sizes,
            "activations": self.core.net.activations,
            "weights": [w.tolist() for w in self.core.net.weights],
            "biases": [b.tolist() for b in self.core.net.biases],
        }
