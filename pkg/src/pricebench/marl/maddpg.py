"""Deterministic policy-gradient team: local actors, centralized critics.

Actors map local state to one continuous price change per product (tanh
output scaled by the weekly cap). Critics score the JOINT state and action of
the whole team, so members share a coordinator that owns one aligned replay
buffer; each member still acts from purely local observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..market import MarketConfig, MarketObservation, ProductSpec, derive_rng
from ..nn import (
    Adam,
    DenseNet,
    GAUSSIAN_NOISE_DEFAULT,
    ExplorationSchedule,
    ReplayBuffer,
    ShapeError,
    soft_update,
)
from .common import MarlAgentBase, encode_state, state_dim

ACTION_SMOOTHING = 0.5  # EMA weight on the previous applied change


@dataclass(frozen=True)
class MaddpgHyper:
    actor_lr: float = 0.0001
    critic_lr: float = 0.00001
    gamma: float = 0.95
    tau: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 50_000
    recency_decay: float = 0.999
    warm_up: int = 64
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (128, 64)
    schedule: ExplorationSchedule = GAUSSIAN_NOISE_DEFAULT

    @classmethod
    def from_params(cls, params: dict) -> "MaddpgHyper":
        sched = GAUSSIAN_NOISE_DEFAULT
        if any(k in params for k in ("noise_start", "noise_decay", "noise_floor")):
            sched = ExplorationSchedule(
                "gaussian_noise",
                start=float(params.get("noise_start", sched.start)),
                decay=float(params.get("noise_decay", sched.decay)),
                floor=float(params.get("noise_floor", sched.floor)),
            )
        return cls(
            actor_lr=float(params.get("actor_lr", cls.actor_lr)),
            critic_lr=float(params.get("critic_lr", cls.critic_lr)),
            gamma=float(params.get("gamma", cls.gamma)),
            tau=float(params.get("tau", cls.tau)),
            batch_size=int(params.get("batch_size", cls.batch_size)),
            buffer_capacity=int(params.get("buffer_capacity", cls.buffer_capacity)),
            recency_decay=float(params.get("recency_decay", cls.recency_decay)),
            warm_up=int(params.get("warm_up", cls.warm_up)),
            actor_hidden=tuple(params.get("actor_hidden", cls.actor_hidden)),
            critic_hidden=tuple(params.get("critic_hidden", cls.critic_hidden)),
            schedule=sched,
        )


@dataclass
class JointTransition:
    """One aligned team step: per-member local views plus a shared done flag."""

    states: list[np.ndarray]
    actions: list[np.ndarray]  # applied relative changes, one vector per member
    rewards: list[float]
    next_states: list[np.ndarray]
    done: bool


class MaddpgCoordinator:
    """Owns the joint replay buffer and runs the centralized training step."""

    def __init__(self, config: MarketConfig, hyper: MaddpgHyper, team_key: str = "maddpg"):
        self.config = config
        self.hyper = hyper
        self.members: list["MaddpgAgent"] = []
        self.buffer = ReplayBuffer(hyper.buffer_capacity, hyper.recency_decay)
        self.rng = derive_rng(config.seed, "team", team_key)
        self._pending: dict[str, tuple] = {}
        self.last_losses: list[tuple[float, float]] = []

    def register(self, member: "MaddpgAgent") -> None:
        self.members.append(member)

    def contribute(self, agent_id, state, action, reward, next_state, done) -> None:
        """Collect one member's step; store and learn once the team is complete."""
        if agent_id not in {m.agent_id for m in self.members}:
            raise ValueError(f"agent {agent_id!r} is not a member of this team")
        self._pending[agent_id] = (state, action, reward, next_state)
        if len(self._pending) < len(self.members):
            return
        parts = [self._pending[m.agent_id] for m in self.members]
        self._pending = {}
        self.buffer.push(
            JointTransition(
                states=[p[0] for p in parts],
                actions=[p[1] for p in parts],
                rewards=[p[2] for p in parts],
                next_states=[p[3] for p in parts],
                done=done,
            )
        )
        self.learn()

    def _joint(self, rows: list[list[np.ndarray]]) -> np.ndarray:
        return np.concatenate([np.stack(col) for col in rows], axis=1)

    def learn(self) -> None:
        hp = self.hyper
        if len(self.buffer) < max(hp.warm_up, hp.batch_size):
            return
        batch = self.buffer.sample(hp.batch_size, self.rng)
        n = len(self.members)
        states = [[t.states[i] for t in batch] for i in range(n)]
        actions = [[t.actions[i] for t in batch] for i in range(n)]
        next_states = [[t.next_states[i] for t in batch] for i in range(n)]
        rewards = [np.asarray([t.rewards[i] for t in batch]) for i in range(n)]
        done = np.asarray([t.done for t in batch], dtype=float)
        b = len(batch)

        joint_state = self._joint(states)
        joint_action = self._joint(actions)
        joint_next_state = self._joint(next_states)
        max_change = self.config.max_weekly_change
        target_next_actions = np.concatenate(
            [
                m.target_actor.forward(np.stack(next_states[i])) * max_change
                for i, m in enumerate(self.members)
            ],
            axis=1,
        )
        critic_next_in = np.concatenate([joint_next_state, target_next_actions], axis=1)
        critic_in = np.concatenate([joint_state, joint_action], axis=1)

        self.last_losses = []
        action_offsets = np.cumsum([0] + [a[0].shape[0] for a in actions])
        for i, member in enumerate(self.members):
            q_next = member.target_critic.forward(critic_next_in)[:, 0]
            y = rewards[i] + hp.gamma * (1.0 - done) * q_next
            q, cache = member.critic.forward_cached(critic_in)
            err = q[:, 0] - y
            critic_loss = float(np.mean(err**2))
            grads, _ = member.critic.backward(cache, (2.0 * err / b)[:, None])
            member.critic_opt.step(member.critic.params(), grads, hp.critic_lr)

            # actor: ascend Q with own action replaced by the policy output
            own_states = np.stack(states[i])
            actor_out, actor_cache = member.actor.forward_cached(own_states)
            replaced = critic_in.copy()
            lo = joint_state.shape[1] + action_offsets[i]
            hi = joint_state.shape[1] + action_offsets[i + 1]
            replaced[:, lo:hi] = actor_out * max_change
            q_pi, critic_cache = member.critic.forward_cached(replaced)
            actor_loss = float(-np.mean(q_pi))
            _, input_grad = member.critic.backward(critic_cache, np.full((b, 1), -1.0 / b))
            upstream_actor = input_grad[:, lo:hi] * max_change
            actor_grads, _ = member.actor.backward(actor_cache, upstream_actor)
            member.actor_opt.step(member.actor.params(), actor_grads, hp.actor_lr)

            soft_update(member.target_actor, member.actor, hp.tau)
            soft_update(member.target_critic, member.critic, hp.tau)
            self.last_losses.append((critic_loss, actor_loss))


class MaddpgAgent(MarlAgentBase):
    """One team member: local tanh actor plus a centralized critic."""

    def __init__(
        self,
        agent_id: str,
        product_specs: list[ProductSpec],
        config: MarketConfig,
        coordinator: MaddpgCoordinator,
        team_size: int,
    ):
        super().__init__(agent_id, product_specs, config)
        hp = coordinator.hyper
        n_products = len(product_specs)
        local_dim = state_dim(n_products)
        joint_dim = team_size * (local_dim + n_products)
        rng = derive_rng(config.seed, "agent", agent_id)
        self.actor = DenseNet(
            [local_dim, *hp.actor_hidden, n_products],
            ["relu"] * len(hp.actor_hidden) + ["tanh"],
            rng,
        )
        # near-hold initial policy: standard small final-layer init for DDPG actors
        self.actor.scale_output_layer(0.01)
        self.critic = DenseNet(
            [joint_dim, *hp.critic_hidden, 1],
            ["relu"] * len(hp.critic_hidden) + ["linear"],
            rng,
        )
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.actor_opt = Adam(self.actor.params())
        self.critic_opt = Adam(self.critic.params())
        self.noise_rng = rng
        self.coordinator = coordinator
        coordinator.register(self)
        self._pending: tuple[np.ndarray, np.ndarray] | None = None

    def act_raw(self, state: np.ndarray, episode: int) -> np.ndarray:
        """Noisy tanh policy output scaled to a relative change, pre-smoothing."""
        out = self.actor.forward(state)
        sigma = self.coordinator.hyper.schedule.value(episode)
        noisy = np.clip(out + self.noise_rng.normal(0.0, sigma, size=out.shape), -1.0, 1.0)
        return noisy * self.config.max_weekly_change

    def propose_prices(self, observation: MarketObservation) -> dict[str, float]:
        state = encode_state(self, observation)
        raw = self.act_raw(state, self.episode_index)
        changes = {}
        for spec, r in zip(self.product_specs, raw):
            prev = self._prev_changes[spec.product_id]
            changes[spec.product_id] = ACTION_SMOOTHING * prev + (1.0 - ACTION_SMOOTHING) * r
        applied = np.asarray([changes[s.product_id] for s in self.product_specs])
        self._pending = (state, applied)
        return self._apply_changes(changes)

    def feedback(self, observation, prev_observation, done: bool) -> None:
        if self._pending is None:
            return
        state, action = self._pending
        self._pending = None
        reward = self._reward_from(observation, prev_observation)
        next_state = encode_state(self, observation)
        self.coordinator.contribute(self.agent_id, state, action, reward, next_state, done)

    def checkpoint_state(self) -> dict:
        return {
            "kind": "maddpg",
            "actor": {
                "layer_sizes": self.actor.layer_sizes,
                "weights": [w.tolist() for w in self.actor.weights],
                "biases": [b.tolist() for b in self.actor.biases],
            },
            "critic": {
                "layer_sizes": self.critic.layer_sizes,
                "weights": [w.tolist() for w in self.critic.weights],
                "biases": [b.tolist() for b in self.critic.biases],
            },
        }


def build_team(
    agent_ids: list[str],
    product_specs: list[ProductSpec],
    config: MarketConfig,
    params: dict | None = None,
) -> list[MaddpgAgent]:
    hyper = MaddpgHyper.from_params(params or {})
    coordinator = MaddpgCoordinator(config, hyper)
    if not agent_ids:
        raise ShapeError("a team needs at least one member")
    return [
        MaddpgAgent(aid, product_specs, config, coordinator, team_size=len(agent_ids))
        for aid in agent_ids
    ]
