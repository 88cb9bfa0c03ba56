"""Non-learning agents: random, null defender, replay scripts and simple heuristics."""

from __future__ import annotations

import random
from typing import Iterable, Sequence

from ..actions import (
    Action,
    Connect,
    Detail,
    LocalAttack,
    Noop,
    Remediate,
    RemoteAttack,
    Restore,
    RewardBreakdown,
    Scan,
)
from ..engine import Role, TerminationOutcome
from ..graph import DynamicAccessGraph, Mark, NodeState


class BaseAgent:
    role: Role

    def begin_episode(self, graph: DynamicAccessGraph, rng: random.Random) -> None:
        self.graph = graph
        self.rng = rng

    def act(self, observation, valid_actions: Sequence[Action]) -> Action:
        raise NotImplementedError

    def observe(self, reward: RewardBreakdown) -> None:
        pass

    def end_episode(self, observation, valid_actions, outcome: TerminationOutcome) -> None:
        pass


class RandomAgent(BaseAgent):
    """Uniform choice over the valid actions."""

    def __init__(self, role: Role):
        self.role = role

    def act(self, observation, valid_actions):
        return valid_actions[self.rng.randrange(len(valid_actions))]


class NullDefender(BaseAgent):
    """The "NA" adversary: never does anything, at no cost."""

    role = Role.DEFENDER

    def act(self, observation, valid_actions):
        return Noop()


class ScriptedAgent(BaseAgent):
    """Replays a fixed action list, then repeats ``then`` (Noop by default)."""

    def __init__(self, role: Role, actions: Iterable[Action], then: Action | None = None):
        self.role = role
        self.actions = tuple(actions)
        self.then = then or Noop()
        self._i = 0

    def begin_episode(self, graph, rng):
        super().begin_episode(graph, rng)
        self._i = 0

    def act(self, observation, valid_actions):
        if self._i < len(self.actions):
            self._i += 1
            return self.actions[self._i - 1]
        return self.then


class ConstantAgent(ScriptedAgent):
    """Plays the same action every turn."""

    def __init__(self, role: Role, action: Action):
        super().__init__(role, (), then=action)


class HeuristicAttacker(BaseAgent):
    """Greedy hand-written attacker.

    Prefers connecting with a held credential, then exploits it has not yet
    seen fail (local before remote), then anything valid.  It remembers
    (node, vulnerability) pairs that came back ``VULN_NOT_PRESENT``.
    """

    role = Role.ATTACKER

    def __init__(self, prefer_remote: bool = False, explore: float = 0.0):
        self.prefer_remote = prefer_remote
        self.explore = explore

    def begin_episode(self, graph, rng):
        super().begin_episode(graph, rng)
        self.absent: set[tuple[str, str]] = set()
        self._last: Action | None = None

    def act(self, observation, valid_actions):
        if self.explore and self.rng.random() < self.explore:
            choice = valid_actions[self.rng.randrange(len(valid_actions))]
        else:
            choice = self._choose(observation, valid_actions)
        self._last = choice
        return choice

    def _choose(self, obs, valid_actions):
        connects = [a for a in valid_actions if isinstance(a, Connect)]
        if connects:
            return connects[0]
        tried = obs.exploited | self.absent
        local = [a for a in valid_actions if isinstance(a, LocalAttack)
                 and (a.target, a.vulnerability) not in tried]
        remote = [a for a in valid_actions if isinstance(a, RemoteAttack)
                  and (a.target, a.vulnerability) not in tried]
        ordered = remote + local if self.prefer_remote else local + remote
        if ordered:
            return ordered[0]
        return valid_actions[self.rng.randrange(len(valid_actions))]

    def observe(self, reward):
        last = self._last
        if reward.detail is Detail.VULN_NOT_PRESENT and isinstance(last, (LocalAttack, RemoteAttack)):
            self.absent.add((last.target, last.vulnerability))


class PatrolDefender(BaseAgent):
    """Rule-based defender.

    Responds to a suspicious running node if there is one (``response`` is
    ``"restore"``, ``"remediate"`` or ``"alternate"``), otherwise scans on
    every ``period``-th step and idles (``"noop"`` or ``"scan"``) in between.
    """

    role = Role.DEFENDER

    def __init__(self, period: int = 1, response: str = "restore", idle: str = "noop"):
        if response not in ("restore", "remediate", "alternate"):
            raise ValueError(f"unknown response {response!r}")
        if idle not in ("noop", "scan"):
            raise ValueError(f"unknown idle action {idle!r}")
        self.period = max(1, period)
        self.response = response
        self.idle = idle

    def begin_episode(self, graph, rng):
        super().begin_episode(graph, rng)
        self._responses = 0

    def act(self, obs, valid_actions):
        suspicious = [n for n in obs.nodes
                      if obs.marks[n] is Mark.SUSPICIOUS and not obs.reimaging[n]]
        if suspicious:
            target = suspicious[self._responses % len(suspicious)]
            mode = self.response
            if mode == "alternate":
                mode = "restore" if self._responses % 2 == 0 else "remediate"
            self._responses += 1
            return Restore(target) if mode == "restore" else Remediate(target)
        if obs.step % self.period == 0 or self.idle == "scan":
            return Scan()
        return Noop()


def shortest_attack_chain(graph: DynamicAccessGraph) -> list[Action]:
    """Breadth-first search for a minimal attacker action list that owns every goal.

    Uses only successful actions against an idle defender; intended for small
    scenarios (the state space is the attacker's knowledge lattice).
    """
    from collections import deque

    from ..actions import EpisodeState, apply_attacker, enumerate_valid_attacker_actions

    start = EpisodeState.initial(graph, 0)

    def key(s: EpisodeState):
        return (frozenset(n for n, st in s.attacker_state.items() if st is NodeState.OWNED),
                frozenset(n for n, st in s.attacker_state.items() if st is NodeState.DISCOVERED),
                frozenset(s.exploited), frozenset(s.credentials))

    frontier = deque([(start, [])])
    seen = {key(start)}
    while frontier:
        state, path = frontier.popleft()
        if all(state.attacker_state[g] is NodeState.OWNED for g in graph.goal_ids):
            return path
        for action in enumerate_valid_attacker_actions(graph, state):
            nxt = state.clone()
            if not apply_attacker(graph, nxt, action).success:
                continue
            k = key(nxt)
            if k not in seen:
                seen.add(k)
                frontier.append((nxt, path + [action]))
    raise ValueError("goal nodes are unreachable")
