import pytest

from pricebench.demand import ParametricDemandModel
from pricebench.environment import run_episode
from pricebench.market import (
    AgentSpec,
    ConfigError,
    MarketConfig,
    ProductSpec,
    ProductState,
    make_default_portfolio,
)
from pricebench.rule_agents import (
    DIVERSE_STRATEGIES,
    RuleAgent,
    RuleStrategy,
    competitor_match_price,
    demand_responsive_price,
    historical_anchor_price,
    seasonal_price,
    static_markup_price,
)


def _product(price=10.0, cost=6.0, baseline=20.0):
    return ProductState.fresh(ProductSpec("p", 1, price, cost, baseline))


def _observation(week=20, competitor_prices=(), holiday=False, price=10.0):
    from pricebench.market import AgentSnapshot, MarketObservation, ProductSnapshot

    pool = [price, *competitor_prices]
    return MarketObservation(
        week_number=week,
        year=1,
        is_holiday=holiday,
        per_product={
            ("me", "p"): ProductSnapshot(
                price=price,
                cluster_id=1,
                competitor_prices=tuple(competitor_prices),
                cluster_avg_price=sum(pool) / len(pool),
                last_demand=20.0,
            )
        },
        per_agent={"me": AgentSnapshot(revenue_last_week=200.0, market_share=1.0)},
    )


class TestStaticMarkup:
    def test_formula(self):
        assert static_markup_price(_product(cost=6.0), markup=0.5) == pytest.approx(9.0)

    def test_zero_markup_hits_cost(self):
        assert static_markup_price(_product(cost=6.0), markup=0.0) == pytest.approx(6.0)

    def test_constant_across_weeks(self):
        product = _product()
        assert static_markup_price(product) == static_markup_price(product)


class TestCompetitorMatch:
    def test_undercuts_mean(self):
        obs = _observation(competitor_prices=(10.0, 10.0))
        price = competitor_match_price(_product(), obs, "me", undercut_fraction=0.03)
        assert price == pytest.approx(9.70)

    def test_floor_binds(self):
        obs = _observation(competitor_prices=(1.0,))
        price = competitor_match_price(_product(cost=6.0), obs, "me", undercut_fraction=0.03)
        assert price == pytest.approx(6.0 * 1.05)

    def test_no_competitors_falls_back_to_markup(self):
        obs = _observation(competitor_prices=())
        price = competitor_match_price(_product(cost=6.0), obs, "me", markup=0.5)
        assert price == pytest.approx(9.0)


class TestHistoricalAnchor:
    def test_constant_history_fixed_point(self):
        product = _product()
        for _ in range(5):
            product.record_week(8.0, 10.0)
        assert historical_anchor_price(product, 4) == pytest.approx(8.0)

    def test_window_mean(self):
        product = _product()
        for p in (10.0, 10.0, 10.0, 14.0):
            product.record_week(p, 10.0)
        assert historical_anchor_price(product, 4) == pytest.approx(11.0)

    def test_cold_start_uses_initial_price(self):
        assert historical_anchor_price(_product(price=10.0)) == pytest.approx(10.0)


class TestDemandResponsive:
    def _with_demand(self, d1, d2, price=10.0):
        product = _product(price=price)
        product.record_week(price, d1)
        product.record_week(price, d2)
        return product

    def test_up_step(self):
        product = self._with_demand(10.0, 12.0)
        assert demand_responsive_price(product, response_step=0.02) == pytest.approx(10.20)

    def test_down_step(self):
        product = self._with_demand(12.0, 10.0)
        assert demand_responsive_price(product, response_step=0.02) == pytest.approx(9.80)

    def test_tie_holds(self):
        product = self._with_demand(10.0, 10.0)
        assert demand_responsive_price(product) == pytest.approx(10.0)

    def test_floor_clamps_down_step(self):
        product = self._with_demand(12.0, 10.0, price=6.31)
        assert demand_responsive_price(product, response_step=0.02) == pytest.approx(6.30)


class TestSeasonal:
    def test_holiday_uplift(self):
        obs = _observation(week=50, holiday=True)
        assert seasonal_price(_product(cost=6.0), obs, seasonal_uplift=0.10) == pytest.approx(9.90)

    def test_off_peak_base(self):
        obs = _observation(week=20)
        assert seasonal_price(_product(cost=6.0), obs) == pytest.approx(9.0)

    def test_zero_uplift(self):
        obs = _observation(week=50, holiday=True)
        assert seasonal_price(_product(cost=6.0), obs, seasonal_uplift=0.0) == pytest.approx(9.0)


class TestRuleStrategyValidation:
    def test_undercut_band(self):
        with pytest.raises(ConfigError):
            RuleStrategy("competitor_match", undercut_fraction=0.2)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            RuleStrategy("astrology")


def _rule_market(weeks=40, seed=31, noise=0.0):
    roster = [AgentSpec(f"rule-{i}", "rule") for i in range(4)]
    config = MarketConfig(
        agent_roster=roster,
        products_per_agent=2,
        clusters=(1, 2),
        weeks_per_episode=weeks,
        episodes=1,
        seed=seed,
    ).validate()
    from dataclasses import replace

    config.demand_params = replace(config.demand_params, noise_sigma=noise)
    portfolio = make_default_portfolio(2, [1, 2], config.seed)
    agents = [
        RuleAgent(s.agent_id, portfolio, config, RuleStrategy(DIVERSE_STRATEGIES[i]))
        for i, s in enumerate(config.agent_roster)
    ]
    return config, agents


class TestRuleAgentProperties:
    def test_deterministic(self):
        results = []
        for _ in range(2):
            config, agents = _rule_market(weeks=10)
            model = ParametricDemandModel(config.demand_params)
            records = run_episode(config, agents, model)
            results.append([r.products for r in records])
        assert results[0] == results[1]

    def test_constraints_respected(self):
        config, agents = _rule_market(weeks=30, noise=0.05)
        model = ParametricDemandModel(config.demand_params)
        records = run_episode(config, agents, model)
        for agent in agents:
            for product in agent.portfolio.values():
                floor = config.price_floor(product.spec)
                prev = product.spec.initial_price
                for price in product.price_history:
                    assert price >= floor - 1e-9
                    assert abs(price - prev) / prev <= config.max_weekly_change + 1e-9
                    prev = price

    def test_diverse_market_share_stability(self):
        from pricebench.metrics import market_share_series, market_share_volatility_pp

        config, agents = _rule_market(weeks=40)
        model = ParametricDemandModel(config.demand_params)
        records = run_episode(config, agents, model)
        revenues = {
            a.agent_id: [r.agent_revenue[a.agent_id] for r in records] for a in agents
        }
        shares, _ = market_share_series(revenues)
        assert market_share_volatility_pp(shares) < 0.5
