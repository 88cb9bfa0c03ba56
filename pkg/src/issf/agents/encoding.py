"""Fixed-length observation features and the dense action index.

Both are built from a graph *shape* (sorted node ids, credential ids and
toolkit vulnerability ids) rather than from the graph itself, so a policy can
be rebuilt from its blob header alone and reused on any graph with the same
shape.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping, Sequence

import numpy as np

from ..actions import Action, Connect, LocalAttack, Remediate, RemoteAttack, Restore, Scan
from ..engine import Role
from ..graph import AttackerObservation, DefenderObservation, Mark, NodeState

ENCODER_ID = "issf-features-v1"

Shape = Mapping[str, Sequence[str]]


def shape_fingerprint(shape: Shape) -> str:
    canon = json.dumps({k: list(v) for k, v in sorted(shape.items())}, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


_ATTACKER_STATES = (NodeState.UNDISCOVERED, NodeState.DISCOVERED, NodeState.OWNED)


class ObservationEncoder:
    """Maps an observation to a float vector and a discrete table key.

    Attacker layout: per-node one-hot (undiscovered, discovered, owned), one
    bit per held credential, one bit per exploited (node, toolkit vuln) pair,
    then step fraction, credential count and exploited count.

    Defender layout: per-node one-hot mark (normal, suspicious) and run state
    (running, reimaging), then step fraction, suspicious count and reimaging
    count.  Nothing about the attacker's position leaks into it.

    The step fraction is the only continuous feature and is left out of
    :meth:`key`, which tabular learners use.
    """

    def __init__(self, shape: Shape, role: Role):
        self.role = role
        self.nodes = list(shape["nodes"])
        self.credentials = list(shape["credentials"])
        self.toolkit = sorted(set(shape["local_toolkit"]) | set(shape["remote_toolkit"]))
        self._node_pos = {n: i for i, n in enumerate(self.nodes)}
        self._cred_pos = {c: i for i, c in enumerate(self.credentials)}
        self._vuln_pos = {v: i for i, v in enumerate(self.toolkit)}
        n, c, v = len(self.nodes), len(self.credentials), len(self.toolkit)
        if role is Role.ATTACKER:
            self.n_discrete = 3 * n + c + n * v + 2
            self._count_scale = np.array([max(c, 1), max(n * v, 1)], dtype=float)
        else:
            self.n_discrete = 4 * n + 2
            self._count_scale = np.array([max(n, 1), max(n, 1)], dtype=float)
        self.size = self.n_discrete + 1

    def _discrete(self, obs) -> np.ndarray:
        out = np.zeros(self.n_discrete, dtype=np.int64)
        n = len(self.nodes)
        if self.role is Role.ATTACKER:
            assert isinstance(obs, AttackerObservation)
            out[0:3 * n:3] = 1  # undiscovered unless listed
            for node, st in obs.nodes.items():
                i = self._node_pos[node]
                out[3 * i:3 * i + 3] = 0
                out[3 * i + _ATTACKER_STATES.index(st)] = 1
            base = 3 * n
            for cred in obs.credentials:
                out[base + self._cred_pos[cred]] = 1
            base += len(self.credentials)
            nv = len(self.toolkit)
            for node, vuln in obs.exploited:
                out[base + self._node_pos[node] * nv + self._vuln_pos[vuln]] = 1
            out[-2] = len(obs.credentials)
            out[-1] = len(obs.exploited)
        else:
            assert isinstance(obs, DefenderObservation)
            for node in obs.nodes:
                i = self._node_pos[node]
                out[4 * i + (1 if obs.marks[node] is Mark.SUSPICIOUS else 0)] = 1
                out[4 * i + (3 if obs.reimaging[node] else 2)] = 1
            out[-2] = sum(1 for m in obs.marks.values() if m is Mark.SUSPICIOUS)
            out[-1] = sum(1 for r in obs.reimaging.values() if r)
        return out

    def key(self, obs) -> bytes:
        return self._discrete(obs).astype(np.uint16).tobytes()

    def encode(self, obs) -> np.ndarray:
        return self._features(obs, self._discrete(obs))

    def key_and_features(self, obs, features: bool = True) -> tuple[bytes, np.ndarray | None]:
        d = self._discrete(obs)
        return d.astype(np.uint16).tobytes(), self._features(obs, d) if features else None

    def _features(self, obs, discrete: np.ndarray) -> np.ndarray:
        d = discrete.astype(float)
        d[-2:] /= self._count_scale
        frac = obs.step / obs.max_steps if obs.max_steps else 0.0
        return np.concatenate([d, [frac]])


class ActionIndex:
    """Bijection between ``range(len(index))`` and a role's structured actions.

    Attacker: LocalAttack(node x local vuln), RemoteAttack(source x target x
    remote vuln, source != target), Connect(source x target x credential,
    source != target).  Defender: Scan, Restore(node), Remediate(node).
    """

    def __init__(self, shape: Shape, role: Role):
        nodes = list(shape["nodes"])
        actions: list[Action] = []
        if role is Role.ATTACKER:
            actions += [LocalAttack(n, v) for n in nodes for v in shape["local_toolkit"]]
            actions += [RemoteAttack(s, t, v) for s in nodes for t in nodes if s != t
                        for v in shape["remote_toolkit"]]
            actions += [Connect(s, t, c) for s in nodes for t in nodes if s != t
                        for c in shape["credentials"]]
        else:
            actions += [Scan()]
            actions += [Restore(n) for n in nodes]
            actions += [Remediate(n) for n in nodes]
        self.role = role
        self.actions: tuple[Action, ...] = tuple(actions)
        self._pos = {a: i for i, a in enumerate(self.actions)}

    def __len__(self) -> int:
        return len(self.actions)

    def index(self, action: Action) -> int:
        return self._pos[action]

    def mask(self, valid_actions: Sequence[Action]) -> np.ndarray:
        return np.fromiter((self._pos[a] for a in valid_actions), dtype=np.int64,
                           count=len(valid_actions))

    def action(self, i: int) -> Action:
        return self.actions[i]
