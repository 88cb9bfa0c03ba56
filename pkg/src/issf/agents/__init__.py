"""Agents: built-in scripted/heuristic players and learned action decision models."""

from .builtin import (
    BaseAgent,
    ConstantAgent,
    HeuristicAttacker,
    NullDefender,
    PatrolDefender,
    RandomAgent,
    ScriptedAgent,
    shortest_attack_chain,
)
from .encoding import ActionIndex, ObservationEncoder
from .model import ActionDecisionModel, LearnerConfig, ModelAgent, select_action

__all__ = [
    "ActionDecisionModel",
    "ActionIndex",
    "BaseAgent",
    "ConstantAgent",
    "HeuristicAttacker",
    "LearnerConfig",
    "ModelAgent",
    "NullDefender",
    "ObservationEncoder",
    "PatrolDefender",
    "RandomAgent",
    "ScriptedAgent",
    "select_action",
    "shortest_attack_chain",
]
