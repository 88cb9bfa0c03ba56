"""Training and fine-tuning of security services against frozen adversaries."""

from __future__ import annotations

import graphlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .agents.builtin import NullDefender
from .agents.model import ActionDecisionModel, LearnerConfig, ModelAgent
from .engine import Role, Termination, run_episode
from .errors import (
    AdversaryRequired,
    CyclicPlan,
    DuplicateId,
    ParseError,
    RoleMismatch,
    UnknownService,
)
from .graph import DynamicAccessGraph
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass
class TrainingReport:
    episodes: int = 0
    timesteps: int = 0
    attacker_wins: int = 0
    episode_lengths: list[int] = field(default_factory=list)
    episode_rewards: list[float] = field(default_factory=list)
    final_epsilon: float | None = None
    adversary_digest_before: str | None = None
    adversary_digest_after: str | None = None

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "timesteps": self.timesteps,
            "attacker_wins": self.attacker_wins,
            "final_epsilon": self.final_epsilon,
            "mean_length_last_10": (sum(self.episode_lengths[-10:]) / len(self.episode_lengths[-10:])
                                    if self.episode_lengths else None),
        }


def train(graph: DynamicAccessGraph, role: Role, config: LearnerConfig,
          adversary: ActionDecisionModel | Sequence[ActionDecisionModel] | None = None,
          pretrained: ActionDecisionModel | None = None,
          seed: int | None = None) -> tuple[ActionDecisionModel, TrainingReport]:
    """Train a ``role`` policy until it has taken ``config.total_timesteps`` actions.

    ``adversary=None`` stands for "NA" (the null defender) and is only allowed
    when training an attacker.  The adversary acts first in every round and
    is never updated.  ``pretrained`` parameters, if given, are the starting
    point (fine-tuning).  A list of adversaries is rotated, one per episode.
    """
    seed = config.seed if seed is None else seed
    if adversary is None:
        adversaries: list[ActionDecisionModel] = []
    elif isinstance(adversary, ActionDecisionModel):
        adversaries = [adversary]
    else:
        adversaries = list(adversary)
    if role is Role.DEFENDER and not adversaries:
        raise AdversaryRequired("a defender can only be trained against a real attacker service")
    for adv in adversaries:
        if adv.role is not role.opposite:
            raise RoleMismatch(f"adversary plays {adv.role.value}, need {role.opposite.value}")
        adv.check_compatible(graph)
    if pretrained is not None:
        pretrained.check_compatible(graph, role)
        model = ActionDecisionModel.deserialize(pretrained.serialize(), graph)
        model.env_hash = graph.env_hash
        model.retarget(config)
    else:
        model = ActionDecisionModel.create(graph, role, config)

    trainee = ModelAgent(model, greedy=False, training=True)
    greedy = False if config.stochastic_adversary else None
    opponents: list[Any] = [ModelAgent(a, greedy=greedy) for a in adversaries] or [NullDefender()]

    report = TrainingReport()
    if adversaries:
        report.adversary_digest_before = _digests(adversaries)
    while trainee.steps < config.total_timesteps:
        opponent = opponents[report.episodes % len(opponents)]
        attacker, defender = (trainee, opponent) if role is Role.ATTACKER else (opponent, trainee)
        ep_seed = derive_seed(seed, "train", report.episodes)
        trace = run_episode(graph, attacker, defender, ep_seed,
                            defender_first=(role is Role.ATTACKER),
                            max_steps=config.max_episode_length, keep_records=False)
        report.episodes += 1
        report.episode_lengths.append(trace.length)
        report.episode_rewards.append(trace.attacker_reward if role is Role.ATTACKER
                                      else trace.defender_reward)
        report.attacker_wins += trace.outcome.kind is Termination.ATTACKER_WIN
    report.timesteps = trainee.steps
    report.final_epsilon = getattr(model.learner, "epsilon", None)
    if adversaries:
        report.adversary_digest_after = _digests(adversaries)
    log.info("trained %s/%s: %d episodes, %d steps", role.value, config.algorithm,
             report.episodes, report.timesteps)
    return model, report


def _digests(models: Sequence[ActionDecisionModel]) -> str:
    return ",".join(m.digest() for m in models)


# -- curricula ---------------------------------------------------------------


_ROLE_ALIASES = {"offense": "attacker", "defense": "defender"}


@dataclass(frozen=True)
class PlanEntry:
    id: str
    role: Role
    algorithm: str
    adversary: str = "NA"
    pretrain: str = "NA"
    seed: int = 0
    label: str | None = None
    overrides: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlanEntry":
        known = {"id", "role", "algorithm", "adversary_id", "pretrain_id", "seed", "label",
                 "overrides"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown plan keys {sorted(extra)}")
        return cls(
            id=d["id"],
            role=Role(_ROLE_ALIASES.get(d["role"], d["role"])),
            algorithm=d["algorithm"],
            adversary=d.get("adversary_id") or "NA",
            pretrain=d.get("pretrain_id") or "NA",
            seed=int(d.get("seed", 0)),
            label=d.get("label"),
            overrides=dict(d.get("overrides", {})),
        )

    def config(self, base: LearnerConfig) -> LearnerConfig:
        return replace(base, algorithm=self.algorithm, seed=self.seed, **self.overrides)


def plan_order(plan: Sequence[PlanEntry], known: Callable[[str], bool]) -> list[PlanEntry]:
    """Topological order of plan entries; ``known`` says whether an id already exists."""
    by_id = {}
    for e in plan:
        if e.id in by_id:
            raise CyclicPlan(f"plan lists {e.id!r} twice")
        by_id[e.id] = e
    sorter = graphlib.TopologicalSorter()
    for e in plan:
        deps = [d for d in (e.adversary, e.pretrain) if d != "NA"]
        for d in deps:
            if d not in by_id and not known(d):
                raise UnknownService(f"plan entry {e.id!r} references unknown service {d!r}")
        sorter.add(e.id, *[d for d in deps if d in by_id])
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise CyclicPlan(f"plan has a dependency cycle: {exc.args[1]}") from exc
    return [by_id[i] for i in order]


PLAN_DIR = Path(__file__).parent / "plans"


def load_plan(source: str | Path | Mapping[str, Any] | Sequence[Mapping[str, Any]]) -> list[PlanEntry]:
    """Read a plan: a JSON list of entries, or an object with a ``services`` list.

    ``source`` may be a path, the name of a shipped plan, or already-parsed JSON.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists() and (PLAN_DIR / f"{source}.json").exists():
            path = PLAN_DIR / f"{source}.json"
        try:
            doc = json.loads(path.read_text())
        except ValueError as exc:
            raise ParseError(f"{path}: plan is not valid JSON: {exc}") from exc
    else:
        doc = source
    entries = doc.get("services") if isinstance(doc, Mapping) else doc
    if not isinstance(entries, list):
        raise ParseError("plan must be a list of entries or an object with a 'services' list")
    try:
        return [PlanEntry.from_dict(e) for e in entries]
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad plan entry: {exc}") from exc


def training_curriculum(graph: DynamicAccessGraph, plan: Sequence[PlanEntry], pool,
                        base_config: LearnerConfig | None = None
                        ) -> list[tuple[str, TrainingReport]]:
    """Train every plan entry in dependency order and publish each to ``pool``."""
    base_config = base_config or LearnerConfig()
    published = []
    for entry in plan_order(plan, pool.__contains__):
        if entry.id in pool:
            raise DuplicateId(f"plan entry {entry.id!r} already exists in the pool")
        adversary = pool.load(entry.adversary, graph)[1] if entry.adversary != "NA" else None
        pretrained = pool.load(entry.pretrain, graph)[1] if entry.pretrain != "NA" else None
        config = entry.config(base_config)
        model, report = train(graph, entry.role, config, adversary, pretrained, entry.seed)
        pool.publish_model(entry.id, model, graph, adversary=entry.adversary,
                           pretrain=entry.pretrain, label=entry.label or config.algorithm,
                           report=report.to_dict())
        published.append((entry.id, report))
    return published
