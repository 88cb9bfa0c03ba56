"""Dynamic access graph: static environment description and role observations.

A scenario document is JSON with three top-level keys (``config``, ``nodes``,
``credentials``).  Edges are never authored; they are derived from what each
vulnerability leaks when exploited.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import TYPE_CHECKING, Any, Mapping

import jsonschema

from .errors import ParseError, ValidationError

if TYPE_CHECKING:
    from .actions import EpisodeState


class Vector(str, Enum):
    LOCAL = "local"
    REMOTE = "remote"


class EdgeKind(str, Enum):
    ENDPOINT = "endpoint"
    CREDENTIAL = "credential"


class NodeState(str, Enum):
    """Security state of a node as seen by the attacker."""

    UNDISCOVERED = "undiscovered"
    DISCOVERED = "discovered"
    OWNED = "owned"


class Mark(str, Enum):
    """Defender-assigned mark."""

    NORMAL = "normal"
    SUSPICIOUS = "suspicious"


@dataclass(frozen=True)
class RevealNodes:
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class LeakCredential:
    credential: str


Outcome = RevealNodes | LeakCredential


@dataclass(frozen=True)
class Vulnerability:
    id: str
    vector: Vector
    outcome: Outcome
    impact: float
    exploitability: float


@dataclass(frozen=True)
class Credential:
    id: str
    target_node: str


@dataclass(frozen=True)
class NodeSpec:
    id: str
    asset_value: float
    vulnerabilities: tuple[Vulnerability, ...] = ()
    required_credential: str | None = None
    is_goal: bool = False
    is_landing: bool = False

    def vulnerability(self, vuln_id: str) -> Vulnerability | None:
        for v in self.vulnerabilities:
            if v.id == vuln_id:
                return v
        return None


@dataclass(frozen=True, order=True)
class EdgeSpec:
    source: str
    target: str
    kind: EdgeKind


@dataclass(frozen=True)
class EnvironmentConfig:
    max_episode_length: int = 2000
    scan_true_positive_rate: float = 0.95
    scan_false_positive_rate: float = 0.05
    connect_cost: float = 2.0
    restore_cost: float = 10.0
    scan_cost: float = 0.5
    scan_gain_per_new_suspicious: float = 1.0
    remediate_base_cost: float = 1.0
    reimage_duration_steps: int = 1
    invalid_action_cost: float = 1.0

    def validate(self) -> None:
        if not isinstance(self.max_episode_length, int) or self.max_episode_length <= 0:
            raise ValidationError("max_episode_length must be a positive integer")
        for name in ("scan_true_positive_rate", "scan_false_positive_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {rate}")
        for name in ("connect_cost", "restore_cost", "scan_cost",
                     "scan_gain_per_new_suspicious", "remediate_base_cost",
                     "invalid_action_cost"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if not isinstance(self.reimage_duration_steps, int) or self.reimage_duration_steps < 0:
            raise ValidationError("reimage_duration_steps must be a non-negative integer")
        if self.restore_cost <= self.connect_cost:
            raise ValidationError(
                "restore_cost must exceed connect_cost (re-imaging costs more than a connect)"
                f": restore_cost={self.restore_cost}, connect_cost={self.connect_cost}"
            )


_CONFIG_PROPS = {
    f.name: {"type": "integer", "minimum": 0} if f.type == "int" else {"type": "number"}
    for f in fields(EnvironmentConfig)
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["nodes", "credentials"],
    "properties": {
        "config": {"type": "object", "additionalProperties": False, "properties": _CONFIG_PROPS},
        "credentials": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "target_node"],
                "properties": {"id": {"type": "string"}, "target_node": {"type": "string"}},
            },
        },
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "asset_value"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "asset_value": {"type": "number", "minimum": 0},
                    "required_credential": {"type": ["string", "null"]},
                    "is_goal": {"type": "boolean"},
                    "is_landing": {"type": "boolean"},
                    "vulnerabilities": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["id", "vector", "outcome", "impact", "exploitability"],
                            "properties": {
                                "id": {"type": "string", "minLength": 1},
                                "vector": {"enum": ["local", "remote"]},
                                "impact": {"type": "number", "minimum": 0, "maximum": 10},
                                "exploitability": {"type": "number", "minimum": 0, "maximum": 10},
                                "outcome": {
                                    "oneOf": [
                                        {
                                            "type": "object",
                                            "additionalProperties": False,
                                            "required": ["reveal_nodes"],
                                            "properties": {
                                                "reveal_nodes": {
                                                    "type": "array",
                                                    "items": {"type": "string"},
                                                    "minItems": 1,
                                                }
                                            },
                                        },
                                        {
                                            "type": "object",
                                            "additionalProperties": False,
                                            "required": ["leak_credential"],
                                            "properties": {"leak_credential": {"type": "string"}},
                                        },
                                    ]
                                },
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ToolkitEntry:
    """What the attacker knows about a vulnerability id, independent of any node."""

    id: str
    vector: Vector
    impact: float
    exploitability: float


class DynamicAccessGraph:
    """Validated, immutable environment truth.

    Build with :func:`load_graph` or :meth:`build`; both reject dangling
    references.  Instances are safe to share between concurrent episodes.
    """

    def __init__(self, nodes: Mapping[str, NodeSpec], credentials: Mapping[str, Credential],
                 config: EnvironmentConfig, scenario_id: str = "scenario"):
        self._nodes = MappingProxyType(dict(sorted(nodes.items())))
        self._credentials = MappingProxyType(dict(sorted(credentials.items())))
        self.config = config
        self.scenario_id = scenario_id
        _validate(self)
        self.node_ids: tuple[str, ...] = tuple(self._nodes)
        self.credential_ids: tuple[str, ...] = tuple(self._credentials)
        self.goal_ids = tuple(n for n, spec in self._nodes.items() if spec.is_goal)
        self.landing_ids = tuple(n for n, spec in self._nodes.items() if spec.is_landing)
        toolkit: dict[str, ToolkitEntry] = {}
        for spec in self._nodes.values():
            for v in spec.vulnerabilities:
                toolkit.setdefault(v.id, ToolkitEntry(v.id, v.vector, v.impact, v.exploitability))
        self.toolkit = MappingProxyType(dict(sorted(toolkit.items())))
        self.local_toolkit = tuple(v for v, t in self.toolkit.items() if t.vector is Vector.LOCAL)
        self.remote_toolkit = tuple(v for v, t in self.toolkit.items() if t.vector is Vector.REMOTE)
        self.edges: tuple[EdgeSpec, ...] = tuple(derive_edges(self))
        self.env_hash = hashlib.sha256(canonical_json(self.to_document()).encode()).hexdigest()

    @classmethod
    def build(cls, nodes, credentials, config: EnvironmentConfig | None = None,
              scenario_id: str = "scenario") -> "DynamicAccessGraph":
        node_map: dict[str, NodeSpec] = {}
        for n in nodes:
            if n.id in node_map:
                raise ValidationError(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        cred_map: dict[str, Credential] = {}
        for c in credentials:
            if c.id in cred_map:
                raise ValidationError(f"duplicate credential id {c.id!r}")
            cred_map[c.id] = c
        return cls(node_map, cred_map, config or EnvironmentConfig(), scenario_id)

    @property
    def nodes(self) -> Mapping[str, NodeSpec]:
        return self._nodes

    @property
    def credentials(self) -> Mapping[str, Credential]:
        return self._credentials

    def node(self, node_id: str) -> NodeSpec:
        return self._nodes[node_id]

    def shape(self) -> dict[str, list[str]]:
        """Everything that fixes the size and meaning of learner inputs/outputs."""
        return {
            "nodes": list(self.node_ids),
            "credentials": list(self.credential_ids),
            "local_toolkit": list(self.local_toolkit),
            "remote_toolkit": list(self.remote_toolkit),
        }

    def with_config(self, **overrides) -> "DynamicAccessGraph":
        cfg = EnvironmentConfig(**{**asdict(self.config), **overrides})
        return DynamicAccessGraph(self._nodes, self._credentials, cfg, self.scenario_id)

    def to_document(self) -> dict[str, Any]:
        nodes = []
        for spec in self._nodes.values():
            entry: dict[str, Any] = {"id": spec.id, "asset_value": spec.asset_value}
            if spec.required_credential is not None:
                entry["required_credential"] = spec.required_credential
            entry["is_goal"] = spec.is_goal
            entry["is_landing"] = spec.is_landing
            vulns = []
            for v in spec.vulnerabilities:
                if isinstance(v.outcome, RevealNodes):
                    outcome: dict[str, Any] = {"reveal_nodes": list(v.outcome.nodes)}
                else:
                    outcome = {"leak_credential": v.outcome.credential}
                vulns.append({"id": v.id, "vector": v.vector.value, "outcome": outcome,
                              "impact": v.impact, "exploitability": v.exploitability})
            entry["vulnerabilities"] = vulns
            nodes.append(entry)
        return {
            "config": asdict(self.config),
            "nodes": nodes,
            "credentials": [{"id": c.id, "target_node": c.target_node}
                            for c in self._credentials.values()],
        }

    def __repr__(self) -> str:
        return (f"DynamicAccessGraph({self.scenario_id!r}, {len(self._nodes)} nodes, "
                f"{len(self._credentials)} credentials)")


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _validate(graph: DynamicAccessGraph) -> None:
    nodes, creds = graph.nodes, graph.credentials
    graph.config.validate()
    if not nodes:
        raise ValidationError("scenario has no nodes")
    for cred in creds.values():
        if cred.target_node not in nodes:
            raise ValidationError(f"credential {cred.id!r} targets unknown node {cred.target_node!r}")
        if nodes[cred.target_node].required_credential != cred.id:
            raise ValidationError(
                f"credential {cred.id!r} targets {cred.target_node!r}, which does not require it")
    catalog: dict[str, tuple] = {}
    for spec in nodes.values():
        if spec.asset_value < 0:
            raise ValidationError(f"node {spec.id!r} has negative asset value")
        if spec.required_credential is not None and spec.required_credential not in creds:
            raise ValidationError(
                f"node {spec.id!r} requires unknown credential {spec.required_credential!r}")
        seen: set[str] = set()
        for v in spec.vulnerabilities:
            if v.id in seen:
                raise ValidationError(f"vulnerability {v.id!r} listed twice on node {spec.id!r}")
            seen.add(v.id)
            if not (0 <= v.impact <= 10 and 0 <= v.exploitability <= 10):
                raise ValidationError(f"vulnerability {v.id!r} subscores must lie in [0, 10]")
            key = (v.vector, v.impact, v.exploitability)
            if catalog.setdefault(v.id, key) != key:
                raise ValidationError(
                    f"vulnerability {v.id!r} has inconsistent vector/subscores across nodes")
            if isinstance(v.outcome, RevealNodes):
                if not v.outcome.nodes:
                    raise ValidationError(f"vulnerability {v.id!r} on {spec.id!r} reveals nothing")
                for target in v.outcome.nodes:
                    if target not in nodes:
                        raise ValidationError(
                            f"vulnerability {v.id!r} on {spec.id!r} reveals unknown node {target!r}")
                    if target == spec.id:
                        raise ValidationError(f"vulnerability {v.id!r} on {spec.id!r} reveals itself")
            else:
                cid = v.outcome.credential
                if cid not in creds:
                    raise ValidationError(
                        f"vulnerability {v.id!r} on {spec.id!r} leaks unknown credential {cid!r}")
                if creds[cid].target_node == spec.id:
                    raise ValidationError(
                        f"vulnerability {v.id!r} on {spec.id!r} leaks its own node's credential")
    if not any(s.is_goal for s in nodes.values()):
        raise ValidationError("scenario has no goal node")
    if not any(s.is_landing for s in nodes.values()):
        raise ValidationError("scenario has no landing node")


def derive_edges(graph: DynamicAccessGraph) -> list[EdgeSpec]:
    """Access paths implied by vulnerability outcomes, deduplicated and sorted."""
    edges: set[EdgeSpec] = set()
    for spec in graph.nodes.values():
        for v in spec.vulnerabilities:
            if isinstance(v.outcome, RevealNodes):
                for target in v.outcome.nodes:
                    edges.add(EdgeSpec(spec.id, target, EdgeKind.ENDPOINT))
            else:
                target = graph.credentials[v.outcome.credential].target_node
                edges.add(EdgeSpec(spec.id, target, EdgeKind.CREDENTIAL))
    return sorted(edges, key=lambda e: (e.source, e.target, e.kind.value))


def load_graph(document: Mapping[str, Any] | str | bytes,
               scenario_id: str = "scenario") -> DynamicAccessGraph:
    """Parse and validate a scenario document (a mapping or raw JSON text)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(document, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"scenario schema violation at {where}: {exc.message}") from exc

    raw_config = dict(document.get("config", {}))
    for f in fields(EnvironmentConfig):
        if f.name in raw_config and f.type == "float":
            raw_config[f.name] = float(raw_config[f.name])
    config = EnvironmentConfig(**raw_config)
    nodes = []
    for raw in document["nodes"]:
        vulns = []
        for rv in raw.get("vulnerabilities", []):
            out = rv["outcome"]
            outcome: Outcome = (RevealNodes(tuple(out["reveal_nodes"])) if "reveal_nodes" in out
                                else LeakCredential(out["leak_credential"]))
            vulns.append(Vulnerability(rv["id"], Vector(rv["vector"]), outcome,
                                       float(rv["impact"]), float(rv["exploitability"])))
        nodes.append(NodeSpec(
            id=raw["id"],
            asset_value=float(raw["asset_value"]),
            vulnerabilities=tuple(vulns),
            required_credential=raw.get("required_credential"),
            is_goal=raw.get("is_goal", False),
            is_landing=raw.get("is_landing", False),
        ))
    credentials = [Credential(c["id"], c["target_node"]) for c in document["credentials"]]
    return DynamicAccessGraph.build(nodes, credentials, config, scenario_id)


SCENARIO_DIR = Path(__file__).parent / "scenarios"


def load_scenario(name_or_path: str | Path) -> DynamicAccessGraph:
    """Load a scenario by catalog name (e.g. ``three_service_chain``) or file path."""
    path = Path(name_or_path)
    if not path.exists():
        candidate = SCENARIO_DIR / f"{name_or_path}.json"
        if not candidate.exists():
            raise FileNotFoundError(f"no scenario file or catalog entry named {name_or_path!r}")
        path = candidate
    return load_graph(path.read_bytes(), scenario_id=path.stem)


# -- observations -----------------------------------------------------------


@dataclass(frozen=True)
class AttackerObservation:
    """What the attacker knows: only nodes it has discovered or owns.

    ``exploited`` lists (node, vulnerability) pairs the attacker successfully
    exploited on visible nodes; nothing else about vulnerability presence is
    exposed.
    """

    step: int
    max_steps: int
    nodes: Mapping[str, NodeState]
    discovery_edges: tuple[tuple[str, str, int], ...]
    credentials: frozenset[str]
    exploited: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class DefenderObservation:
    """Full topology plus the defender's own marks and node run states.

    ``reimaging`` maps node id to remaining re-image steps; 0 means running.
    """

    step: int
    max_steps: int
    nodes: tuple[str, ...]
    edges: tuple[EdgeSpec, ...]
    marks: Mapping[str, Mark]
    reimaging: Mapping[str, int]


def attacker_observation(graph: DynamicAccessGraph, state: "EpisodeState") -> AttackerObservation:
    visible = {n: s for n, s in sorted(state.attacker_state.items())
               if s is not NodeState.UNDISCOVERED}
    return AttackerObservation(
        step=state.step,
        max_steps=graph.config.max_episode_length,
        nodes=MappingProxyType(visible),
        discovery_edges=tuple(e for e in state.discovery_edges if e[1] in visible),
        credentials=frozenset(state.credentials),
        exploited=frozenset(p for p in state.exploited if p[0] in visible),
    )


def defender_observation(graph: DynamicAccessGraph, state: "EpisodeState") -> DefenderObservation:
    return DefenderObservation(
        step=state.step,
        max_steps=graph.config.max_episode_length,
        nodes=graph.node_ids,
        edges=graph.edges,
        marks=MappingProxyType(dict(sorted(state.marks.items()))),
        reimaging=MappingProxyType(dict(sorted(state.reimaging.items()))),
    )
