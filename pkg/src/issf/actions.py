"""Attacker and defender meta-actions and their reward accounting.

Every action returns a :class:`RewardBreakdown` with ``reward == gain - cost``.
The subtraction is done in decimal so that CVSS subscores such as 2.7 and 2.0
produce 0.7 rather than 0.7000000000000002.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum

from .errors import UnknownId
from .graph import (
    DynamicAccessGraph,
    LeakCredential,
    Mark,
    NodeState,
    RevealNodes,
    Vector,
)


# -- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class LocalAttack:
    target: str
    vulnerability: str


@dataclass(frozen=True)
class RemoteAttack:
    source: str
    target: str
    vulnerability: str


@dataclass(frozen=True)
class Connect:
    source: str
    target: str
    credential: str


@dataclass(frozen=True)
class Scan:
    pass


@dataclass(frozen=True)
class Restore:
    target: str


@dataclass(frozen=True)
class Remediate:
    target: str


@dataclass(frozen=True)
class Noop:
    """Deliberate pass: zero gain, zero cost.  Used by the null defender."""


AttackerAction = LocalAttack | RemoteAttack | Connect
DefenderAction = Scan | Restore | Remediate
Action = AttackerAction | DefenderAction | Noop

ATTACKER_ACTION_TYPES = (LocalAttack, RemoteAttack, Connect)
DEFENDER_ACTION_TYPES = (Scan, Restore, Remediate)

_KIND = {
    LocalAttack: "local_attack",
    RemoteAttack: "remote_attack",
    Connect: "connect",
    Scan: "scan",
    Restore: "restore",
    Remediate: "remediate",
    Noop: "noop",
}


def action_kind(action: Action) -> str:
    return _KIND[type(action)]


def action_to_dict(action: Action) -> dict:
    d = {"kind": action_kind(action)}
    d.update(action.__dict__)
    return d


def action_from_dict(d: dict) -> Action:
    kinds = {v: k for k, v in _KIND.items()}
    payload = dict(d)
    cls = kinds[payload.pop("kind")]
    return cls(**payload)


# -- rewards ----------------------------------------------------------------


class Detail(str, Enum):
    EXPLOITED = "exploited"
    VULN_NOT_PRESENT = "vuln_not_present"
    ALREADY_EXPLOITED = "already_exploited"
    CREDENTIAL_GRANTED = "credential_granted"
    INVALID = "invalid"
    NOOP = "noop"
    NEW_SUSPICIOUS = "new_suspicious"
    RESTORED = "restored"
    REMEDIATED = "remediated"
    NOTHING_TO_REMEDIATE = "nothing_to_remediate"


def _sub(gain: float, cost: float) -> float:
    return float(Decimal(repr(gain)) - Decimal(repr(cost)))


@dataclass(frozen=True)
class RewardBreakdown:
    gain: float
    cost: float
    reward: float
    success: bool
    detail: Detail
    count: int = 0  # newly suspicious nodes, for scans

    @classmethod
    def of(cls, gain: float, cost: float, success: bool, detail: Detail,
           count: int = 0) -> "RewardBreakdown":
        return cls(float(gain), float(cost), _sub(gain, cost), success, detail, count)

    def to_dict(self) -> dict:
        return {"gain": self.gain, "cost": self.cost, "reward": self.reward,
                "success": self.success, "detail": self.detail.value, "count": self.count}


# -- episode state ----------------------------------------------------------


@dataclass
class EpisodeState:
    """Mutable security posture of one episode.

    ``reimaging`` holds the remaining re-image steps per node (0 = running).
    ``restored_at`` remembers the step at which each re-image started so the
    end-of-round tick does not count the round the restore happened in.
    """

    step: int
    attacker_state: dict[str, NodeState]
    marks: dict[str, Mark]
    reimaging: dict[str, int]
    restored_at: dict[str, int] = field(default_factory=dict)
    exploited: set[tuple[str, str]] = field(default_factory=set)
    credentials: set[str] = field(default_factory=set)
    discovery_edges: list[tuple[str, str, int]] = field(default_factory=list)
    rng: random.Random = field(default_factory=random.Random)
    rng_draws: int = 0
    tally: Counter = field(default_factory=Counter)

    @classmethod
    def initial(cls, graph: DynamicAccessGraph, seed: int) -> "EpisodeState":
        return cls(
            step=0,
            attacker_state={n: (NodeState.OWNED if graph.node(n).is_landing
                                else NodeState.UNDISCOVERED) for n in graph.node_ids},
            marks={n: Mark.NORMAL for n in graph.node_ids},
            reimaging={n: 0 for n in graph.node_ids},
            rng=random.Random(seed),
        )

    def clone(self) -> "EpisodeState":
        rng = random.Random()
        rng.setstate(self.rng.getstate())
        return EpisodeState(
            step=self.step,
            attacker_state=dict(self.attacker_state),
            marks=dict(self.marks),
            reimaging=dict(self.reimaging),
            restored_at=dict(self.restored_at),
            exploited=set(self.exploited),
            credentials=set(self.credentials),
            discovery_edges=list(self.discovery_edges),
            rng=rng,
            rng_draws=self.rng_draws,
            tally=Counter(self.tally),
        )

    def posture(self) -> tuple:
        """Hashable snapshot of everything except rng and tallies."""
        return (
            self.step,
            tuple(sorted((n, s.value) for n, s in self.attacker_state.items())),
            tuple(sorted((n, m.value) for n, m in self.marks.items())),
            tuple(sorted(self.reimaging.items())),
            tuple(sorted((n, t) for n, t in self.restored_at.items() if self.reimaging[n])),
            tuple(sorted(self.exploited)),
            tuple(sorted(self.credentials)),
            tuple(self.discovery_edges),
        )

    def running(self, node: str) -> bool:
        return self.reimaging[node] == 0

    def count(self, node_state: NodeState) -> int:
        return sum(1 for s in self.attacker_state.values() if s is node_state)

    def _record(self, kind: str, success: bool) -> None:
        self.tally[f"{kind}.{'success' if success else 'failure'}"] += 1


def _require_node(graph: DynamicAccessGraph, node: str) -> None:
    if node not in graph.nodes:
        raise UnknownId(f"unknown node {node!r}")


def _check_ids(graph: DynamicAccessGraph, action: Action) -> None:
    for attr in ("source", "target"):
        if hasattr(action, attr):
            _require_node(graph, getattr(action, attr))
    if hasattr(action, "vulnerability") and action.vulnerability not in graph.toolkit:
        raise UnknownId(f"unknown vulnerability {action.vulnerability!r}")
    if hasattr(action, "credential") and action.credential not in graph.credentials:
        raise UnknownId(f"unknown credential {action.credential!r}")


def _invalid(graph: DynamicAccessGraph, state: EpisodeState, kind: str) -> RewardBreakdown:
    state._record(kind, False)
    return RewardBreakdown.of(0.0, graph.config.invalid_action_cost, False, Detail.INVALID)


def _noop(state: EpisodeState) -> RewardBreakdown:
    state._record("noop", True)
    return RewardBreakdown.of(0.0, 0.0, True, Detail.NOOP)


# -- attacker ---------------------------------------------------------------


def _reveal(graph: DynamicAccessGraph, state: EpisodeState, source: str,
            nodes: tuple[str, ...]) -> None:
    for n in sorted(nodes):
        if state.attacker_state[n] is NodeState.UNDISCOVERED:
            state.attacker_state[n] = NodeState.DISCOVERED
            state.discovery_edges.append((source, n, state.step))


def _exploit(graph: DynamicAccessGraph, state: EpisodeState, target: str, vuln_id: str,
             kind: str) -> RewardBreakdown:
    entry = graph.toolkit[vuln_id]
    vuln = graph.node(target).vulnerability(vuln_id)
    if vuln is None or vuln.vector is not entry.vector:
        state._record(kind, False)
        return RewardBreakdown.of(0.0, entry.exploitability, False, Detail.VULN_NOT_PRESENT)
    if (target, vuln_id) in state.exploited:
        state._record(kind, False)
        return RewardBreakdown.of(0.0, entry.exploitability, False, Detail.ALREADY_EXPLOITED)
    state.exploited.add((target, vuln_id))
    if isinstance(vuln.outcome, RevealNodes):
        _reveal(graph, state, target, vuln.outcome.nodes)
    else:
        state.credentials.add(vuln.outcome.credential)
    state._record(kind, True)
    return RewardBreakdown.of(vuln.impact, vuln.exploitability, True, Detail.EXPLOITED)


def apply_attacker(graph: DynamicAccessGraph, state: EpisodeState,
                   action: AttackerAction | Noop) -> RewardBreakdown:
    """Apply one attacker action in place and return its reward.

    Raises :class:`UnknownId` for ids outside the graph.  Actions whose
    state/role preconditions fail are penalised no-ops.
    """
    if isinstance(action, Noop):
        return _noop(state)
    if not isinstance(action, ATTACKER_ACTION_TYPES):
        raise TypeError(f"{type(action).__name__} is not an attacker action")
    _check_ids(graph, action)
    kind = action_kind(action)
    owned, discovered = NodeState.OWNED, NodeState.DISCOVERED
    cur = state.attacker_state

    if isinstance(action, LocalAttack):
        t = action.target
        if (cur[t] is not owned or not state.running(t)
                or graph.toolkit[action.vulnerability].vector is not Vector.LOCAL):
            return _invalid(graph, state, kind)
        return _exploit(graph, state, t, action.vulnerability, kind)

    if isinstance(action, RemoteAttack):
        s, t = action.source, action.target
        if (s == t or cur[s] is not owned or not state.running(s)
                or cur[t] is NodeState.UNDISCOVERED or not state.running(t)
                or graph.toolkit[action.vulnerability].vector is not Vector.REMOTE):
            return _invalid(graph, state, kind)
        return _exploit(graph, state, t, action.vulnerability, kind)

    # Connect
    s, t, c = action.source, action.target, action.credential
    if (s == t or cur[s] is not owned or not state.running(s)
            or cur[t] is not discovered or not state.running(t)
            or c not in state.credentials
            or graph.credentials[c].target_node != t
            or graph.node(t).required_credential != c):
        return _invalid(graph, state, kind)
    cur[t] = owned
    state._record(kind, True)
    return RewardBreakdown.of(graph.node(t).asset_value, graph.config.connect_cost, True,
                              Detail.CREDENTIAL_GRANTED)


# -- defender ---------------------------------------------------------------


def _revealed_elsewhere(graph: DynamicAccessGraph, state: EpisodeState, node: str) -> bool:
    for src, vid in state.exploited:
        outcome = graph.node(src).vulnerability(vid).outcome
        if isinstance(outcome, RevealNodes) and node in outcome.nodes:
            return True
    return False


def apply_defender(graph: DynamicAccessGraph, state: EpisodeState,
                   action: DefenderAction | Noop) -> RewardBreakdown:
    """Apply one defender action in place and return its reward."""
    if isinstance(action, Noop):
        return _noop(state)
    if not isinstance(action, DEFENDER_ACTION_TYPES):
        raise TypeError(f"{type(action).__name__} is not a defender action")
    _check_ids(graph, action)
    cfg = graph.config
    kind = action_kind(action)

    if isinstance(action, Scan):
        newly = 0
        # one draw per node in id order, whether or not it is already marked
        for n in graph.node_ids:
            touched = state.attacker_state[n] is not NodeState.UNDISCOVERED
            rate = cfg.scan_true_positive_rate if touched else cfg.scan_false_positive_rate
            hit = state.rng.random() < rate
            state.rng_draws += 1
            if hit and state.marks[n] is Mark.NORMAL:
                state.marks[n] = Mark.SUSPICIOUS
                newly += 1
        state._record(kind, newly > 0)
        return RewardBreakdown.of(cfg.scan_gain_per_new_suspicious * newly, cfg.scan_cost,
                                  newly > 0, Detail.NEW_SUSPICIOUS, count=newly)

    t = action.target
    spec = graph.node(t)
    if not state.running(t):
        return _invalid(graph, state, kind)

    if isinstance(action, Restore):
        was_owned = state.attacker_state[t] is NodeState.OWNED
        if cfg.reimage_duration_steps > 0:
            state.reimaging[t] = cfg.reimage_duration_steps
            state.restored_at[t] = state.step
        if was_owned and not spec.is_landing:
            state.attacker_state[t] = NodeState.DISCOVERED
        state.marks[t] = Mark.NORMAL
        state._record(kind, was_owned)
        return RewardBreakdown.of(spec.asset_value if was_owned else 0.0, cfg.restore_cost,
                                  was_owned, Detail.RESTORED)

    # Remediate
    candidates = sorted(v for (n, v) in state.exploited if n == t)
    state.marks[t] = Mark.NORMAL
    if not candidates:
        state._record(kind, False)
        return RewardBreakdown.of(0.0, cfg.remediate_base_cost, False,
                                  Detail.NOTHING_TO_REMEDIATE)
    if len(candidates) == 1:
        vuln_id = candidates[0]
    else:
        vuln_id = candidates[state.rng.randrange(len(candidates))]
        state.rng_draws += 1
    vuln = spec.vulnerability(vuln_id)
    state.exploited.discard((t, vuln_id))
    if isinstance(vuln.outcome, LeakCredential):
        state.credentials.discard(vuln.outcome.credential)
    else:
        hidden = set()
        for n in vuln.outcome.nodes:
            if (state.attacker_state[n] is NodeState.DISCOVERED
                    and not graph.node(n).is_landing
                    and not _revealed_elsewhere(graph, state, n)):
                state.attacker_state[n] = NodeState.UNDISCOVERED
                hidden.add(n)
        if hidden:
            state.discovery_edges[:] = [e for e in state.discovery_edges if e[1] not in hidden]
    state._record(kind, True)
    return RewardBreakdown.of(vuln.impact, vuln.exploitability, True, Detail.REMEDIATED)


def end_round(graph: DynamicAccessGraph, state: EpisodeState) -> None:
    """Advance re-image countdowns and the step counter after a full round."""
    for n, left in state.reimaging.items():
        if left and state.restored_at.get(n) != state.step:
            state.reimaging[n] = left - 1
    state.step += 1


# -- masks ------------------------------------------------------------------


def enumerate_valid_attacker_actions(graph: DynamicAccessGraph,
                                     state: EpisodeState) -> list[AttackerAction]:
    """Actions whose role/state preconditions hold, in a stable order.

    Whether an attack succeeds is still hidden: every toolkit vulnerability
    of the right vector is listed for each eligible target.
    """
    cur = state.attacker_state
    owned = [n for n in graph.node_ids
             if cur[n] is NodeState.OWNED and state.running(n)]
    visible = [n for n in graph.node_ids
               if cur[n] is not NodeState.UNDISCOVERED and state.running(n)]
    actions: list[AttackerAction] = []
    for n in owned:
        actions.extend(LocalAttack(n, v) for v in graph.local_toolkit)
    for s in owned:
        for t in visible:
            if t != s:
                actions.extend(RemoteAttack(s, t, v) for v in graph.remote_toolkit)
    connectable = [(graph.credentials[c].target_node, c) for c in sorted(state.credentials)]
    for t, c in sorted(connectable):
        if cur[t] is NodeState.DISCOVERED and state.running(t):
            actions.extend(Connect(s, t, c) for s in owned if s != t)
    return actions


def enumerate_valid_defender_actions(graph: DynamicAccessGraph,
                                     state: EpisodeState) -> list[DefenderAction]:
    actions: list[DefenderAction] = [Scan()]
    running = [n for n in graph.node_ids if state.running(n)]
    actions.extend(Restore(n) for n in running)
    actions.extend(Remediate(n) for n in running)
    return actions
