"""State encoding, reward shaping and action post-processing shared by the
learning agents."""

from __future__ import annotations

import math

import numpy as np

from ..environment import PricingAgentBase
from ..features import InsufficientHistory, qrm, rolling_volatility, seasonal_encoding, trend
from ..features import VOLATILITY_WINDOW
from ..market import MarketConfig, MarketObservation, ProductSpec, ProductState, month_of_week

STATE_SLOTS_PER_PRODUCT = 12

N_PRICE_BINS = 21


def discretize_action(bin_index: int, n_bins: int = N_PRICE_BINS, max_change: float = 0.10) -> float:
    """Map a discrete bin onto a relative price change in [-max_change, +max_change]."""
    if not 0 <= bin_index < n_bins:
        raise ValueError(f"bin must be in 0..{n_bins - 1}, got {bin_index}")
    return -max_change + (2.0 * max_change / (n_bins - 1)) * bin_index


def apply_action(
    product: ProductState,
    relative_change: float,
    min_margin: float,
    max_weekly_change: float,
) -> float:
    """New price after a relative change, under the margin floor and weekly cap."""
    price = product.current_price
    floor = product.spec.unit_cost * (1.0 + min_margin)
    ceiling = price * (1.0 + max_weekly_change)
    return min(max(price * (1.0 + relative_change), floor), ceiling)


def compute_reward(
    prev_revenue: float,
    revenue: float,
    price_change_rel: float,
    penalty_lambda: float,
    running_mean: float,
) -> float:
    """Normalized revenue change minus a quadratic price-instability penalty."""
    if running_mean < 0:
        raise ValueError("running_mean must be >= 0")
    return (revenue - prev_revenue) / max(1.0, running_mean) - penalty_lambda * price_change_rel**2


def encode_state(agent: PricingAgentBase, observation: MarketObservation) -> np.ndarray:
    """Fixed-layout state vector: 12 slots per product, portfolio order.

    Per product: [price vs cluster avg, margin ratio, lag demand ratio,
    2-week mean ratio, 4-week mean ratio, trend ratio, volatility ratio,
    week sin, week cos, holiday, own market share, last relative price change].
    Demand ratios substitute 1.0 and trend/volatility 0.0 until enough history
    exists.
    """
    week_sin, week_cos, _, _ = seasonal_encoding(
        observation.week_number, month_of_week(observation.week_number)
    )
    holiday = 1.0 if observation.is_holiday else 0.0
    share = observation.per_agent[agent.agent_id].market_share
    slots = []
    for spec in agent.product_specs:
        product = agent.portfolio[spec.product_id]
        snapshot = observation.per_product[(agent.agent_id, spec.product_id)]
        baseline = spec.baseline_demand
        history = product.demand_history

        def ratio_or(fn, default, *args):
            try:
                return fn(history, *args) / baseline
            except InsufficientHistory:
                return default

        price = product.current_price
        slots.extend(
            [
                price / snapshot.cluster_avg_price,
                (price - spec.unit_cost) / price,
                (history[-1] / baseline) if history else 1.0,
                ratio_or(qrm, 1.0, 2),
                ratio_or(qrm, 1.0, 4),
                ratio_or(trend, 0.0),
                ratio_or(rolling_volatility, 0.0, VOLATILITY_WINDOW),
                week_sin,
                week_cos,
                holiday,
                share,
                product.last_relative_change(),
            ]
        )
    state = np.asarray(slots, dtype=float)
    if not np.all(np.isfinite(state)):
        raise ValueError(f"non-finite state entries for agent {agent.agent_id}")
    return state


def state_dim(n_products: int) -> int:
    return STATE_SLOTS_PER_PRODUCT * n_products


class MarlAgentBase(PricingAgentBase):
    """Reward bookkeeping and action application shared by the learning agents."""

    def __init__(self, agent_id: str, product_specs: list[ProductSpec], config: MarketConfig):
        self._revenue_samples: list[float] = []
        self._prev_changes: dict[str, float] = {}
        super().__init__(agent_id, product_specs, config)

    def begin_episode(self, episode_index: int) -> None:
        super().begin_episode(episode_index)
        self._revenue_samples = []
        self._prev_changes = {s.product_id: 0.0 for s in self.product_specs}

    def _apply_changes(self, changes: dict[str, float]) -> dict[str, float]:
        prices = {}
        for pid, r in changes.items():
            prices[pid] = apply_action(
                self.portfolio[pid], r, self.config.min_margin, self.config.max_weekly_change
            )
            self._prev_changes[pid] = r
        return prices

    def _reward_from(
        self, observation: MarketObservation, prev_observation: MarketObservation
    ) -> float:
        revenue = observation.per_agent[self.agent_id].revenue_last_week
        prev_revenue = prev_observation.per_agent[self.agent_id].revenue_last_week
        if not self._revenue_samples:
            self._revenue_samples.append(prev_revenue)
        running_mean = sum(self._revenue_samples) / len(self._revenue_samples)
        changes = [self.portfolio[s.product_id].last_relative_change() for s in self.product_specs]
        change_rms = math.sqrt(sum(c * c for c in changes) / len(changes))
        reward = compute_reward(
            prev_revenue, revenue, change_rms, self.config.reward_penalty_lambda, running_mean
        )
        self._revenue_samples.append(revenue)
        return reward
