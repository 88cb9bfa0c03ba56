"""Turn-based episode loop with full trace recording."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Protocol, Sequence

from .actions import (
    ATTACKER_ACTION_TYPES,
    DEFENDER_ACTION_TYPES,
    Action,
    EpisodeState,
    Noop,
    RewardBreakdown,
    action_to_dict,
    apply_attacker,
    apply_defender,
    end_round,
    enumerate_valid_attacker_actions,
    enumerate_valid_defender_actions,
)
from .errors import UnknownId
from .graph import (
    DynamicAccessGraph,
    Mark,
    NodeState,
    attacker_observation,
    defender_observation,
)
from .seeding import derive_seed


class Role(str, Enum):
    ATTACKER = "attacker"
    DEFENDER = "defender"

    @property
    def opposite(self) -> "Role":
        return Role.DEFENDER if self is Role.ATTACKER else Role.ATTACKER


class Agent(Protocol):
    role: Role

    def begin_episode(self, graph: DynamicAccessGraph, rng: random.Random) -> None: ...

    def act(self, observation, valid_actions: Sequence[Action]) -> Action: ...

    def observe(self, reward: RewardBreakdown) -> None: ...

    def end_episode(self, observation, valid_actions: Sequence[Action],
                    outcome: "TerminationOutcome") -> None: ...


class Termination(str, Enum):
    ATTACKER_WIN = "attacker_win"
    STEP_LIMIT = "step_limit"
    ABORTED = "aborted"


@dataclass(frozen=True)
class TerminationOutcome:
    kind: Termination
    reason: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "reason": self.reason}


@dataclass(frozen=True)
class StepRecord:
    step: int
    role: Role
    action: dict
    reward: RewardBreakdown
    discovered: int
    owned: int
    suspicious: int
    rng_draws: int

    def to_dict(self) -> dict:
        return {"step": self.step, "role": self.role.value, "action": self.action,
                "reward": self.reward.to_dict(), "discovered": self.discovered,
                "owned": self.owned, "suspicious": self.suspicious,
                "rng_draws": self.rng_draws}


@dataclass
class EpisodeTrace:
    scenario_id: str
    scenario_hash: str
    seed: int
    records: list[StepRecord] = field(default_factory=list)
    outcome: TerminationOutcome | None = None
    attacker_reward: float = 0.0
    defender_reward: float = 0.0
    length: int = 0
    final_discovered: int = 0
    final_owned: int = 0
    tally: dict[str, int] = field(default_factory=dict)

    def header(self) -> dict:
        return {"scenario_id": self.scenario_id, "scenario_hash": self.scenario_hash,
                "seed": self.seed, "outcome": self.outcome.to_dict() if self.outcome else None,
                "length": self.length, "attacker_reward": self.attacker_reward,
                "defender_reward": self.defender_reward,
                "final_discovered": self.final_discovered, "final_owned": self.final_owned,
                "tally": dict(sorted(self.tally.items()))}

    def to_jsonl(self) -> str:
        lines = [json.dumps({"header": self.header()}, sort_keys=True)]
        lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in self.records)
        return "\n".join(lines) + "\n"


def write_traces(traces: Iterable[EpisodeTrace], fh: IO[str]) -> None:
    for trace in traces:
        fh.write(trace.to_jsonl())


def reset(graph: DynamicAccessGraph, seed: int) -> EpisodeState:
    """Fresh episode: landing nodes owned, everything else undiscovered and normal."""
    return EpisodeState.initial(graph, derive_seed(seed, "environment"))


def _counts(state: EpisodeState) -> tuple[int, int, int]:
    discovered = sum(1 for s in state.attacker_state.values() if s is not NodeState.UNDISCOVERED)
    owned = state.count(NodeState.OWNED)
    suspicious = sum(1 for m in state.marks.values() if m is Mark.SUSPICIOUS)
    return discovered, owned, suspicious


def _observe(graph: DynamicAccessGraph, state: EpisodeState, role: Role):
    if role is Role.ATTACKER:
        return attacker_observation(graph, state), enumerate_valid_attacker_actions(graph, state)
    return defender_observation(graph, state), enumerate_valid_defender_actions(graph, state)


class AgentFailure(Exception):
    pass


def _turn(graph: DynamicAccessGraph, state: EpisodeState, agent: Agent) -> StepRecord:
    role = agent.role
    obs, valid = _observe(graph, state, role)
    action = agent.act(obs, valid) if valid else Noop()
    allowed = ATTACKER_ACTION_TYPES if role is Role.ATTACKER else DEFENDER_ACTION_TYPES
    if not isinstance(action, allowed + (Noop,)):
        raise AgentFailure(f"{role.value} returned {action!r}")
    try:
        apply = apply_attacker if role is Role.ATTACKER else apply_defender
        reward = apply(graph, state, action)
    except UnknownId as exc:
        raise AgentFailure(f"{role.value} action {action!r}: {exc}") from exc
    agent.observe(reward)
    d, o, s = _counts(state)
    return StepRecord(state.step, role, action_to_dict(action), reward, d, o, s, state.rng_draws)


def goals_reached(graph: DynamicAccessGraph, state: EpisodeState) -> bool:
    return all(state.attacker_state[g] is NodeState.OWNED for g in graph.goal_ids)


def step(graph: DynamicAccessGraph, state: EpisodeState, attacker: Agent, defender: Agent,
         defender_first: bool = True, max_steps: int | None = None,
         ) -> tuple[list[StepRecord], TerminationOutcome | None]:
    """Play one full round; termination is checked only after both agents act."""
    limit = max_steps or graph.config.max_episode_length
    order = (defender, attacker) if defender_first else (attacker, defender)
    records = []
    try:
        for agent in order:
            records.append(_turn(graph, state, agent))
    except AgentFailure as exc:
        end_round(graph, state)
        return records, TerminationOutcome(Termination.ABORTED, str(exc))
    end_round(graph, state)
    if goals_reached(graph, state):
        return records, TerminationOutcome(Termination.ATTACKER_WIN)
    if state.step >= limit:
        return records, TerminationOutcome(Termination.STEP_LIMIT)
    return records, None


def run_episode(graph: DynamicAccessGraph, attacker: Agent, defender: Agent, seed: int,
                defender_first: bool = True, max_steps: int | None = None,
                keep_records: bool = True) -> EpisodeTrace:
    """Reset, alternate turns until termination, and return the trace.

    Deterministic given the graph, the agents' policies and ``seed``.
    """
    if attacker.role is not Role.ATTACKER or defender.role is not Role.DEFENDER:
        raise ValueError("attacker/defender slots filled with the wrong roles")
    state = reset(graph, seed)
    attacker.begin_episode(graph, random.Random(derive_seed(seed, "attacker")))
    defender.begin_episode(graph, random.Random(derive_seed(seed, "defender")))
    trace = EpisodeTrace(graph.scenario_id, graph.env_hash, seed)
    totals = {Role.ATTACKER: 0.0, Role.DEFENDER: 0.0}
    outcome = None
    while outcome is None:
        records, outcome = step(graph, state, attacker, defender, defender_first, max_steps)
        for r in records:
            totals[r.role] += r.reward.reward
        if keep_records:
            trace.records.extend(records)
    for agent in (attacker, defender):
        obs, valid = _observe(graph, state, agent.role)
        agent.end_episode(obs, valid, outcome)
    trace.outcome = outcome
    trace.attacker_reward = totals[Role.ATTACKER]
    trace.defender_reward = totals[Role.DEFENDER]
    trace.length = state.step
    trace.final_discovered, trace.final_owned, _ = _counts(state)
    trace.tally = dict(state.tally)
    return trace
