"""Discrete-event simulator of the cloning attack on Aura and Clique proof-of-authority consensus."""

from .analysis import RegionPoint, Sync, is_live, is_safe, min_aura_attack_duration, safe_live_region
from .attack import (
    AttackPlan,
    ConflictingTxPair,
    RunOutcome,
    evaluate_double_spend,
    plan_aura_attack,
    plan_clique_attack,
    plan_clique_blind_attack,
    run_attack,
)
from .chain import Block, ChainView, DecisionRule, Protocol, RuleKind, SealerId, Transaction
from .config import ScenarioConfig, SweepConfig
from .errors import ConfigError, PlanError
from .runner import execute, run_simulation

__all__ = [
    "AttackPlan",
    "Block",
    "ChainView",
    "ConfigError",
    "ConflictingTxPair",
    "DecisionRule",
    "PlanError",
    "Protocol",
    "RegionPoint",
    "RuleKind",
    "RunOutcome",
    "ScenarioConfig",
    "SealerId",
    "SweepConfig",
    "Sync",
    "Transaction",
    "evaluate_double_spend",
    "execute",
    "is_live",
    "is_safe",
    "min_aura_attack_duration",
    "plan_aura_attack",
    "plan_clique_attack",
    "plan_clique_blind_attack",
    "run_attack",
    "run_simulation",
    "safe_live_region",
]
