"""Differential evolution with learned per-step mutation-strategy selection."""

from deopt.bench import ObjectiveFunction, SuiteConfig, make_suite, load_transform_data
from deopt.de import DEParams, DERun, Population, Strategy
from deopt.rewards import RewardKind, reward

__all__ = [
    "DEParams",
    "DERun",
    "ObjectiveFunction",
    "Population",
    "RewardKind",
    "Strategy",
    "SuiteConfig",
    "load_transform_data",
    "make_suite",
    "reward",
]
