"""Parametric demand oracle and the counterfactual price-elasticity sweep.

The reference model is log-linear: multiplicative baseline/cluster level,
constant own-price elasticity, a relative-price (cluster competition) term,
sinusoidal seasonality, a holiday uplift, an AR(1) demand carry-over, and
optional lognormal noise. It exposes the same feature inputs a trained
regressor would consume, so any oracle implementing `expected_demand` /
`sample_demand` can be swapped in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from .features import FeatureVector
from .market import ConfigError, ProductState

ELASTICITY_SWEEP_POINTS = 41
ELASTICITY_SWEEP_RANGE = (0.5, 2.5)
SMOOTHING_WINDOW = 5


@dataclass(frozen=True)
class DemandParams:
    """Coefficients of the reference demand model."""

    elasticity: float = -0.072
    holiday_uplift: float = 1.35
    cluster_base: dict[int, float] = field(default_factory=dict)
    seasonal_amp: float = 0.15
    lag_weight: float = 0.3
    noise_sigma: float = 0.05  # std-dev of log-space noise
    competitor_weight: float = 0.5

    def __post_init__(self):
        if self.elasticity > 0:
            raise ConfigError(f"elasticity must be <= 0, got {self.elasticity}")
        if self.holiday_uplift < 1:
            raise ConfigError(f"holiday_uplift must be >= 1, got {self.holiday_uplift}")
        if not 0 <= self.lag_weight < 1:
            raise ConfigError(f"lag_weight must be in [0, 1), got {self.lag_weight}")
        if self.noise_sigma < 0 or self.seasonal_amp < 0 or self.competitor_weight < 0:
            raise ConfigError("noise_sigma, seasonal_amp and competitor_weight must be >= 0")
        if any(v <= 0 for v in self.cluster_base.values()):
            raise ConfigError("cluster_base multipliers must be > 0")

    def with_clusters(self, clusters: Sequence[int]) -> "DemandParams":
        """Copy with a multiplier entry (default 1.0) for every cluster in use."""
        base = dict(self.cluster_base)
        for c in clusters:
            base.setdefault(int(c), 1.0)
        return replace(self, cluster_base=base)

    def to_dict(self) -> dict:
        return {
            "elasticity": self.elasticity,
            "holiday_uplift": self.holiday_uplift,
            "cluster_base": {str(k): v for k, v in sorted(self.cluster_base.items())},
            "seasonal_amp": self.seasonal_amp,
            "lag_weight": self.lag_weight,
            "noise_sigma": self.noise_sigma,
            "competitor_weight": self.competitor_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DemandParams":
        return cls(
            elasticity=float(d.get("elasticity", -0.072)),
            holiday_uplift=float(d.get("holiday_uplift", 1.35)),
            cluster_base={int(k): float(v) for k, v in d.get("cluster_base", {}).items()},
            seasonal_amp=float(d.get("seasonal_amp", 0.15)),
            lag_weight=float(d.get("lag_weight", 0.3)),
            noise_sigma=float(d.get("noise_sigma", 0.05)),
            competitor_weight=float(d.get("competitor_weight", 0.5)),
        )


@dataclass
class DemandQuery:
    """Everything the oracle may look at for one product-week."""

    product: ProductState
    features: FeatureVector
    rng: np.random.Generator | None = None
    observation: object | None = None  # full market snapshot, for richer oracles


def _log_demand(query: DemandQuery, params: DemandParams) -> float:
    spec = query.product.spec
    price = query.product.current_price
    if price <= 0:
        raise ValueError(f"price must be > 0, got {price}")
    try:
        cluster_mult = params.cluster_base[spec.cluster_id]
    except KeyError:
        raise ConfigError(f"no cluster_base entry for cluster {spec.cluster_id}") from None
    f = query.features
    lag1 = max(f.lag1_demand, 1e-9)
    return (
        math.log(spec.baseline_demand * cluster_mult)
        + params.elasticity * math.log(price / spec.initial_price)
        - params.competitor_weight * math.log(f.pvc_avg)
        + params.seasonal_amp * f.week_sin
        + math.log(params.holiday_uplift) * f.holiday
        + params.lag_weight * math.log(lag1 / spec.baseline_demand)
    )


def predict_demand(query: DemandQuery, params: DemandParams) -> float:
    """Expected weekly units, with lognormal noise when noise_sigma > 0."""
    log_q = _log_demand(query, params)
    if params.noise_sigma > 0:
        if query.rng is None:
            raise ValueError("noise_sigma > 0 requires a query rng")
        log_q += query.rng.normal(0.0, params.noise_sigma)
    q = math.exp(log_q)
    if not math.isfinite(q):
        raise ValueError(f"demand model produced a non-finite value (log_q={log_q})")
    return max(q, 0.0)


class DemandOracle(Protocol):
    def expected_demand(self, query: DemandQuery) -> float: ...

    def sample_demand(self, query: DemandQuery) -> float: ...


class ParametricDemandModel:
    """Reference oracle wrapping `predict_demand` over a fixed parameter set."""

    def __init__(self, params: DemandParams):
        self.params = params

    def expected_demand(self, query: DemandQuery) -> float:
        return predict_demand(query, replace(self.params, noise_sigma=0.0))

    def sample_demand(self, query: DemandQuery) -> float:
        return predict_demand(query, self.params)


def price_multipliers(
    n: int = ELASTICITY_SWEEP_POINTS,
    lo: float = ELASTICITY_SWEEP_RANGE[0],
    hi: float = ELASTICITY_SWEEP_RANGE[1],
) -> np.ndarray:
    """Sweep grid: multipliers spaced evenly on the ratio (log) scale."""
    return np.geomspace(lo, hi, n)


def centered_rolling_mean(values: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Full-window centered rolling mean; output is shorter by window - 1."""
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd and positive")
    if len(values) < window:
        raise ValueError(f"need at least {window} points, got {len(values)}")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(values, kernel, mode="valid")


def elasticity_sweep(
    oracle: DemandOracle | Callable[[DemandQuery], float],
    base_query: DemandQuery,
    scales: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate expected demand over scaled prices, holding all other inputs fixed.

    Returns (prices, demands) over the sweep. Noise never enters: the oracle's
    expected_demand path is used (a bare callable is treated as deterministic).
    """
    if scales is None:
        scales = price_multipliers()
    scales = np.asarray(scales, dtype=float)
    base_price = base_query.product.current_price
    predict = oracle.expected_demand if hasattr(oracle, "expected_demand") else oracle
    prices = np.empty(len(scales))
    demands = np.empty(len(scales))
    for i, s in enumerate(scales):
        product = replace(base_query.product, current_price=base_price * float(s))
        query = replace(base_query, product=product, rng=None)
        prices[i] = product.current_price
        demands[i] = predict(query)
    return prices, demands


def estimate_elasticity(
    oracle: DemandOracle | Callable[[DemandQuery], float],
    base_query: DemandQuery,
    scales: Sequence[float] | np.ndarray | None = None,
) -> float:
    """Own-price elasticity from the counterfactual sweep.

    The log-demand curve is smoothed with a 5-point centered rolling mean and
    the elasticity is the least-squares slope of smoothed log demand against
    log price. On the default log-even grid the smoothing is exact for
    power-law demand, so constant-elasticity oracles are recovered to machine
    precision.
    """
    if scales is None:
        scales = price_multipliers()
    if len(scales) < SMOOTHING_WINDOW:
        raise ValueError(f"need at least {SMOOTHING_WINDOW} scale points, got {len(scales)}")
    prices, demands = elasticity_sweep(oracle, base_query, scales)
    if np.any(demands <= 0):
        raise ValueError("oracle produced non-positive demand during the sweep")
    log_p = np.log(prices)
    log_q_smooth = centered_rolling_mean(np.log(demands))
    half = SMOOTHING_WINDOW // 2
    log_p_centers = log_p[half:-half]
    slope, _ = np.polyfit(log_p_centers, log_q_smooth, 1)
    return float(slope)


def neutral_query(product: ProductState) -> DemandQuery:
    """Query with all demand modifiers at their neutral values (for sweeps)."""
    from .features import build_feature_vector

    features = build_feature_vector(
        demand_history=[],
        baseline_demand=product.spec.baseline_demand,
        price=product.current_price,
        cluster_prices=[product.current_price],
        week=26,
        month=6,
        is_holiday=False,
    )
    # week 26 gives sin(pi) != 0 exactly; force the seasonal term off
    features = replace(features, week_sin=0.0, week_cos=-1.0)
    return DemandQuery(product=product, features=features)
