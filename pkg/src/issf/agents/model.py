"""Action decision model: a learner bound to a role, an encoder and an action index."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

from ..actions import Action, Noop, RewardBreakdown
from ..engine import Role, Termination, TerminationOutcome
from ..errors import CorruptBlob, EmptyMask, RoleMismatch, ShapeMismatch
from ..graph import DynamicAccessGraph
from .encoding import ENCODER_ID, ActionIndex, ObservationEncoder, shape_fingerprint
from .learners import PolicyGradientLearner, QLearner, RandomLearner, Transition

FORMAT_VERSION = 1

ALGORITHMS = ("random", "qlearning", "policy_gradient")

_DEFAULTS = {
    "qlearning": {"learning_rate": 0.5, "discount": 0.95},
    "policy_gradient": {"learning_rate": 0.001, "discount": 0.99},
    "random": {"learning_rate": 0.0, "discount": 0.0},
}


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: str = "qlearning"
    total_timesteps: int = 50000
    max_episode_length: int = 2000
    learning_start: int = 10000
    learning_rate: float | None = None
    discount: float | None = None
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.5
    seed: int = 0
    stochastic_adversary: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.total_timesteps < 0 or self.max_episode_length <= 0:
            raise ValueError("total_timesteps must be >= 0 and max_episode_length > 0")

    def resolved(self) -> "LearnerConfig":
        d = _DEFAULTS[self.algorithm]
        return replace(
            self,
            learning_rate=d["learning_rate"] if self.learning_rate is None else self.learning_rate,
            discount=d["discount"] if self.discount is None else self.discount,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _make_learner(config: LearnerConfig, n_actions: int, n_features: int):
    c = config.resolved()
    if c.algorithm == "qlearning":
        return QLearner(c.learning_rate, c.discount, c.learning_start, c.total_timesteps,
                        c.epsilon_start, c.epsilon_end, c.epsilon_fraction)
    if c.algorithm == "policy_gradient":
        return PolicyGradientLearner(n_actions, n_features, c.learning_rate, c.discount)
    return RandomLearner()


@dataclass
class ActionDecisionModel:
    role: Role
    config: LearnerConfig
    shape: dict[str, list[str]]
    env_hash: str
    learner: Any = field(repr=False)
    encoder: ObservationEncoder = field(repr=False)
    index: ActionIndex = field(repr=False)

    @classmethod
    def create(cls, graph: DynamicAccessGraph, role: Role,
               config: LearnerConfig | None = None) -> "ActionDecisionModel":
        config = config or LearnerConfig()
        shape = graph.shape()
        encoder = ObservationEncoder(shape, role)
        index = ActionIndex(shape, role)
        learner = _make_learner(config, len(index), encoder.size)
        return cls(role, config, shape, graph.env_hash, learner, encoder, index)

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def shape_fingerprint(self) -> str:
        return shape_fingerprint(self.shape)

    def check_compatible(self, graph: DynamicAccessGraph, role: Role | None = None) -> None:
        if role is not None and role is not self.role:
            raise RoleMismatch(f"model plays {self.role.value}, slot expects {role.value}")
        if graph.shape() != self.shape:
            raise ShapeMismatch(
                f"model shape {self.shape_fingerprint[:12]} does not match graph "
                f"{graph.scenario_id!r} shape {shape_fingerprint(graph.shape())[:12]}")

    def select_action(self, observation, valid_actions: Sequence[Action], rng: random.Random,
                      greedy: bool = False) -> Action:
        if not valid_actions:
            raise EmptyMask("no valid actions")
        mask = self.index.mask(valid_actions)
        i = self.learner.select(self.encoder.key(observation), self.encoder.encode(observation),
                                mask, rng, greedy)
        return self.index.action(i)

    def retarget(self, config: LearnerConfig) -> None:
        """Carry learned parameters into a new training budget (fine-tuning)."""
        fresh = _make_learner(config, len(self.index), self.encoder.size)
        fresh.load_state_dict(self.learner.state_dict())
        fresh.steps = 0  # exploration/warm-up schedule restarts for the new budget
        self.learner = fresh
        self.config = config

    # -- persistence --------------------------------------------------------

    def params_json(self) -> str:
        return json.dumps(self.learner.state_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.params_json().encode()).hexdigest()

    def serialize(self) -> bytes:
        header = {
            "format_version": FORMAT_VERSION,
            "role": self.role.value,
            "algorithm": self.algorithm,
            "graph_fingerprint": self.env_hash,
            "shape": self.shape,
            "shape_fingerprint": self.shape_fingerprint,
            "encoder": ENCODER_ID,
            "hyperparameters": self.config.to_dict(),
        }
        body = json.dumps({"header": header, "params": self.learner.state_dict()},
                          sort_keys=True, separators=(",", ":"))
        return body.encode()

    @staticmethod
    def read_header(blob: bytes) -> dict:
        return _parse(blob)["header"]

    @classmethod
    def deserialize(cls, blob: bytes, graph: DynamicAccessGraph | None = None,
                    role: Role | None = None) -> "ActionDecisionModel":
        doc = _parse(blob)
        header = doc["header"]
        model_role = Role(header["role"])
        if role is not None and role is not model_role:
            raise RoleMismatch(f"blob holds a {model_role.value} policy, expected {role.value}")
        if header.get("encoder") != ENCODER_ID:
            raise ShapeMismatch(f"unsupported encoder {header.get('encoder')!r}")
        config = LearnerConfig(**header["hyperparameters"])
        shape = {k: list(v) for k, v in header["shape"].items()}
        encoder = ObservationEncoder(shape, model_role)
        index = ActionIndex(shape, model_role)
        learner = _make_learner(config, len(index), encoder.size)
        try:
            learner.load_state_dict(doc["params"])
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptBlob(f"policy parameters unreadable: {exc}") from exc
        model = cls(model_role, config, shape, header["graph_fingerprint"], learner,
                    encoder, index)
        if graph is not None:
            model.check_compatible(graph)
        return model


def _parse(blob: bytes) -> dict:
    try:
        doc = json.loads(blob)
        header = doc["header"]
        if header["format_version"] != FORMAT_VERSION:
            raise CorruptBlob(f"unsupported format_version {header['format_version']}")
        doc["params"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptBlob(f"policy blob unreadable: {exc}") from exc
    return doc


def select_action(model: ActionDecisionModel, observation, valid_actions: Sequence[Action],
                  rng: random.Random, greedy: bool = False) -> Action:
    return model.select_action(observation, valid_actions, rng, greedy)


class ModelAgent:
    """Runs an :class:`ActionDecisionModel` inside the episode engine.

    In training mode every decision is turned into a transition that reaches
    the learner once the next observation (after the adversary has moved) is
    known.  Frozen agents never touch the learner.

    ``greedy=None`` uses the learner's own evaluation mode: argmax for value
    learners, sampling for the softmax policy (whose argmax tends to loop on
    a single action).
    """

    def __init__(self, model: ActionDecisionModel, greedy: bool | None = None,
                 training: bool = False):
        self.model = model
        self.role = model.role
        if greedy is None:
            greedy = getattr(model.learner, "greedy_eval", True)
        self.greedy = greedy
        self.training = training
        self.steps = 0
        self._pending: tuple | None = None
        self._rng = random.Random(0)

    def begin_episode(self, graph: DynamicAccessGraph, rng: random.Random) -> None:
        self._rng = rng
        self._pending = None

    def _flush(self, key, features, mask, done: bool) -> None:
        if self._pending is None:
            return
        pkey, pfeat, pmask, action, reward = self._pending
        self.model.learner.record(Transition(pkey, pfeat, pmask, action, reward,
                                             key, features, mask, done))
        self._pending = None

    def act(self, observation, valid_actions: Sequence[Action]) -> Action:
        m = self.model
        mask = m.index.mask(valid_actions)
        key, features = m.encoder.key_and_features(
            observation, getattr(m.learner, "uses_features", True))
        if self.training:
            self._flush(key, features, mask, False)
        if len(mask) == 0:
            return Noop()
        i = m.learner.select(key, features, mask, self._rng, self.greedy and not self.training)
        if self.training:
            self.steps += 1
            self._pending = (key, features, mask, i, 0.0)
        return m.index.action(i)

    def observe(self, reward: RewardBreakdown) -> None:
        if self.training and self._pending is not None:
            self._pending = self._pending[:4] + (reward.reward,)

    def end_episode(self, observation, valid_actions: Sequence[Action],
                    outcome: TerminationOutcome) -> None:
        if not self.training:
            return
        m = self.model
        done = outcome.kind is not Termination.STEP_LIMIT
        key, features = m.encoder.key_and_features(
            observation, getattr(m.learner, "uses_features", True))
        self._flush(key, features, m.index.mask(valid_actions), done)
        m.learner.end_episode()
