"""pricebench: a multi-agent dynamic-pricing market simulator.

A weekly-stepped market where rule-based and reinforcement-learning agents
price product portfolios against an elasticity-calibrated demand model, with
a fairness/stability/coordination metric suite and a reproducible experiment
harness.
"""

__version__ = "0.1.0"
