"""Head-to-head simulation, match scoring, ELO ladders and the leaderboard."""

from __future__ import annotations

import itertools
import json
import math
import multiprocessing
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .agents.builtin import NullDefender, RandomAgent
from .agents.model import ActionDecisionModel, ModelAgent
from .engine import Role, Termination, run_episode
from .errors import InsufficientServices, ShapeMismatch, UnknownService
from .graph import DynamicAccessGraph
from .seeding import derive_seed

INITIAL_RATING = 1000.0
K_FACTOR = 32.0


# -- simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class SimulationMetrics:
    ael: float
    aer_attacker: float
    aer_defender: float
    mean_discovered: float
    mean_owned: float
    attacker_win_rate: float
    episodes: int
    tally: Mapping[str, int] = field(default_factory=dict)

    def aer(self, role: Role) -> float:
        return self.aer_attacker if role is Role.ATTACKER else self.aer_defender

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tally"] = dict(sorted(self.tally.items()))
        return d


def _as_agent(player, graph: DynamicAccessGraph, role: Role):
    if isinstance(player, ActionDecisionModel):
        player.check_compatible(graph, role)
        return ModelAgent(player)
    if isinstance(player, ModelAgent):
        player.model.check_compatible(graph, role)
    elif getattr(player, "role", role) is not role:
        raise ShapeMismatch(f"{player!r} cannot fill the {role.value} slot")
    return player


def simulate(graph: DynamicAccessGraph, attacker, defender, episodes: int = 50,
             base_seed: int = 0, defender_first: bool = True,
             traces: list | None = None) -> SimulationMetrics:
    """Run ``episodes`` independent episodes and average the outcome.

    ``attacker``/``defender`` may be agents or bare decision models.  Episode
    ``i`` uses seed ``derive_seed(base_seed, i)``.  If ``traces`` is a list,
    full episode traces are appended to it.
    """
    if episodes <= 0:
        raise ValueError("episodes must be positive")
    attacker = _as_agent(attacker, graph, Role.ATTACKER)
    defender = _as_agent(defender, graph, Role.DEFENDER)
    lengths, ra, rd, disc, owned, wins = [], [], [], [], [], 0
    tally: Counter = Counter()
    for i in range(episodes):
        tr = run_episode(graph, attacker, defender, derive_seed(base_seed, i),
                         defender_first=defender_first, keep_records=traces is not None)
        if traces is not None:
            traces.append(tr)
        lengths.append(tr.length)
        ra.append(tr.attacker_reward)
        rd.append(tr.defender_reward)
        disc.append(tr.final_discovered)
        owned.append(tr.final_owned)
        wins += tr.outcome.kind is Termination.ATTACKER_WIN
        tally.update(tr.tally)
    n = float(episodes)
    return SimulationMetrics(
        ael=sum(lengths) / n,
        aer_attacker=math.fsum(ra) / n,
        aer_defender=math.fsum(rd) / n,
        mean_discovered=sum(disc) / n,
        mean_owned=sum(owned) / n,
        attacker_win_rate=wins / n,
        episodes=episodes,
        tally=dict(sorted(tally.items())),
    )


# -- match scoring and ELO -----------------------------------------------------


def decide_match(mi: SimulationMetrics, mj: SimulationMetrics, role: Role) -> tuple[float, float]:
    """Score two same-role contestants that faced the same adversary.

    Attackers want short episodes, defenders long ones; ties fall through to
    the contestants' own average reward, then to a draw.
    """
    sign = 1 if role is Role.DEFENDER else -1
    for a, b in ((sign * mi.ael, sign * mj.ael), (mi.aer(role), mj.aer(role))):
        if a > b:
            return 1.0, 0.0
        if a < b:
            return 0.0, 1.0
    return 0.5, 0.5


def expected_score(r_i: float, r_j: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((r_j - r_i) / 400.0))


@dataclass
class EloTable:
    k: float = K_FACTOR
    initial: float = INITIAL_RATING
    ratings: dict[str, float] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)

    def register(self, service_id: str) -> None:
        self.ratings.setdefault(service_id, self.initial)

    def __getitem__(self, service_id: str) -> float:
        return self.ratings[service_id]

    def update(self, id_i: str, id_j: str, s_i: float, **info: Any) -> tuple[float, float]:
        for sid in (id_i, id_j):
            if sid not in self.ratings:
                raise UnknownService(f"{sid!r} is not registered in the rating table")
        r_i, r_j = self.ratings[id_i], self.ratings[id_j]
        e_i = expected_score(r_i, r_j)
        delta = self.k * (s_i - e_i)
        # E_j = 1 - E_i and S_j = 1 - S_i, so j's change is exactly -delta.
        self.ratings[id_i] = r_i + delta
        self.ratings[id_j] = r_j - delta
        self.log.append({"i": id_i, "j": id_j, "s_i": s_i, "e_i": e_i,
                         "before": [r_i, r_j], "after": [self.ratings[id_i], self.ratings[id_j]],
                         **info})
        return self.ratings[id_i], self.ratings[id_j]


def elo_update(table: EloTable, id_i: str, id_j: str, s_i: float) -> EloTable:
    table.update(id_i, id_j, s_i)
    return table


# -- tournament ------------------------------------------------------------------


@dataclass
class Contestant:
    """A service entered in a tournament.

    ``make_agent`` builds a fresh agent for each simulation; it must be
    picklable when simulations run in worker processes.
    """

    id: str
    role: Role
    make_agent: Callable[[], Any]
    model: ActionDecisionModel | None = None


class _ModelFactory:
    def __init__(self, model: ActionDecisionModel):
        self.model = model

    def __call__(self):
        return ModelAgent(self.model)


class _BuiltinFactory:
    def __init__(self, name: str, role: Role):
        self.name, self.role = name, role

    def __call__(self):
        if self.name == "NA":
            return NullDefender()
        return RandomAgent(self.role)


def model_contestant(service_id: str, model: ActionDecisionModel) -> Contestant:
    return Contestant(service_id, model.role, _ModelFactory(model), model)


def builtin_contestant(name: str, role: Role) -> Contestant:
    if name == "NA" and role is not Role.DEFENDER:
        raise ValueError("NA is only a defender")
    if name not in ("NA", "random"):
        raise ValueError(f"unknown built-in {name!r}")
    return Contestant(name if name == "NA" else f"random-{role.value}", role,
                      _BuiltinFactory(name, role))


def agent_contestant(service_id: str, role: Role, factory: Callable[[], Any]) -> Contestant:
    return Contestant(service_id, role, factory)


@dataclass
class TournamentReport:
    roles: list[str]
    elo: EloTable
    matches: list[dict]
    records: dict[str, dict[str, int]]
    per_adversary: dict[str, dict[str, float]]
    average_rating: dict[str, float]
    simulations: dict[str, int]
    roles_of: dict[str, str]
    settings: dict[str, Any]

    def leaderboard(self, role: str | None = None) -> list[dict]:
        rows = []
        for sid, rating in self.elo.ratings.items():
            if role is not None and self.roles_of[sid] != role:
                continue
            rec = self.records[sid]
            rows.append({"service": sid, "role": self.roles_of[sid], "rating": rating,
                         "average_rating": self.average_rating.get(sid),
                         "matches": rec["matches"], "wins": rec["wins"],
                         "draws": rec["draws"], "losses": rec["losses"]})
        rows.sort(key=lambda r: (r["role"], -r["rating"], r["service"]))
        return rows

    def to_dict(self) -> dict:
        return {
            "settings": self.settings,
            "initial_rating": self.elo.initial,
            "k": self.elo.k,
            "leaderboard": self.leaderboard(),
            "per_adversary": self.per_adversary,
            "simulations": self.simulations,
            "matches": self.matches,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render(self) -> str:
        lines = [f"ELO leaderboard (initial rating {self.elo.initial:g}, K = {self.elo.k:g})"]
        for role in self.roles:
            lines.append("")
            lines.append(f"{role.capitalize()} services")
            lines.append(f"{'rank':>4}  {'service':<16} {'rating':>9} {'avg/adv':>9} "
                         f"{'matches':>7} {'W':>5} {'D':>5} {'L':>5}")
            for rank, row in enumerate(self.leaderboard(role), 1):
                avg = row["average_rating"]
                lines.append(f"{rank:>4}  {row['service']:<16} {row['rating']:>9.2f} "
                             f"{avg if avg is not None else float('nan'):>9.2f} "
                             f"{row['matches']:>7} {row['wins']:>5} {row['draws']:>5} "
                             f"{row['losses']:>5}")
        return "\n".join(lines)


def _run_sim(args):
    graph, attacker, defender, episodes, seed = args
    return simulate(graph, attacker.make_agent(), defender.make_agent(), episodes, seed)


# Worker processes are forked and read their jobs from here, so nothing
# (graphs hold read-only mapping proxies) has to be pickled on the way in.
_JOBS: list = []


def _run_job(i: int) -> SimulationMetrics:
    return _run_sim(_JOBS[i])


def tournament_schedule(contestants: Sequence[Contestant], sims: int,
                        roles: Iterable[Role] | None = None) -> list[tuple[Role, int, str, str, str]]:
    """Match order: per role, for each repetition, each adversary, each pair (all sorted).

    Returns ``(role, rep, adversary, i, j)`` tuples.
    """
    by_role: dict[Role, list[str]] = defaultdict(list)
    for c in contestants:
        by_role[c.role].append(c.id)
    for ids in by_role.values():
        ids.sort()
    wanted = list(roles) if roles is not None else [Role.ATTACKER, Role.DEFENDER]
    schedule = []
    for role in wanted:
        own, adversaries = by_role.get(role, []), by_role.get(role.opposite, [])
        if len(own) < 2 or not adversaries:
            continue
        pairs = list(itertools.combinations(own, 2))
        for rep in range(sims):
            for adv in adversaries:
                for i, j in pairs:
                    schedule.append((role, rep, adv, i, j))
    return schedule


def run_tournament(contestants: Sequence[Contestant], graph: DynamicAccessGraph,
                   sims: int = 25, episodes: int = 50, base_seed: int = 0,
                   roles: Iterable[Role] | None = None, parallel: int = 1,
                   k: float = K_FACTOR, initial: float = INITIAL_RATING) -> TournamentReport:
    """Rank same-role services by ELO over matches against shared adversaries.

    Each match runs one simulation per contestant against the same adversary
    with the same seed.  A contestant's simulation for a given (adversary,
    repetition) is reused across all of its pairings.  Ratings are updated
    sequentially in schedule order, once on a global ladder and once on a
    ladder per adversary.
    """
    if sims <= 0 or episodes <= 0:
        raise ValueError("sims and episodes must be positive")
    by_id: dict[str, Contestant] = {}
    for c in contestants:
        if c.id in by_id:
            raise ValueError(f"duplicate contestant id {c.id!r}")
        if c.model is not None:
            c.model.check_compatible(graph, c.role)
        by_id[c.id] = c
    roles = list(roles) if roles is not None else None
    schedule = tournament_schedule(contestants, sims, roles)
    if not schedule:
        raise InsufficientServices(
            "need at least two services of one role and one service of the other role")

    def seed_of(role: Role, adv: str, rep: int) -> int:
        return derive_seed(base_seed, "tournament", role.value, adv, rep)

    needed: dict[tuple[str, str, int], tuple] = {}
    for role, rep, adv, i, j in schedule:
        for sid in (i, j):
            key = (sid, adv, rep)
            if key not in needed:
                att, dfn = (by_id[sid], by_id[adv]) if role is Role.ATTACKER else (by_id[adv], by_id[sid])
                needed[key] = (graph, att, dfn, episodes, seed_of(role, adv, rep))
    keys = list(needed)
    if parallel > 1:
        _JOBS[:] = [needed[k] for k in keys]
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=parallel, mp_context=ctx) as ex:
                results = list(ex.map(_run_job, range(len(keys)), chunksize=4))
        finally:
            _JOBS.clear()
    else:
        results = [_run_sim(needed[k]) for k in keys]
    metrics = dict(zip(keys, results))

    elo = EloTable(k=k, initial=initial)
    ladders: dict[str, EloTable] = {}
    records = {sid: {"matches": 0, "wins": 0, "draws": 0, "losses": 0} for sid in by_id}
    for sid in sorted(by_id):
        elo.register(sid)
    matches = []
    sim_counts: Counter = Counter()
    for n, (role, rep, adv, i, j) in enumerate(schedule):
        mi, mj = metrics[(i, adv, rep)], metrics[(j, adv, rep)]
        s_i, s_j = decide_match(mi, mj, role)
        elo.update(i, j, s_i, match=n)
        ladder = ladders.setdefault(adv, EloTable(k=k, initial=initial))
        ladder.register(i)
        ladder.register(j)
        ladder.update(i, j, s_i, match=n)
        sim_counts[role.value] += 1
        for sid, s in ((i, s_i), (j, s_j)):
            rec = records[sid]
            rec["matches"] += 1
            rec["wins" if s == 1 else "losses" if s == 0 else "draws"] += 1
        matches.append({
            "match": n, "role": role.value, "rep": rep, "adversary": adv,
            "seed": seed_of(role, adv, rep), "contestants": [i, j], "scores": [s_i, s_j],
            "ael": [mi.ael, mj.ael], "aer": [mi.aer(role), mj.aer(role)],
            "ratings_after": [elo[i], elo[j]],
        })

    per_adversary = {adv: dict(sorted(t.ratings.items())) for adv, t in sorted(ladders.items())}
    collected: dict[str, list[float]] = defaultdict(list)
    for table in per_adversary.values():
        for sid, r in table.items():
            collected[sid].append(r)
    average = {sid: math.fsum(v) / len(v) for sid, v in sorted(collected.items())}
    ranked_roles = sorted({r.value for r, *_ in schedule},
                          key=lambda v: 0 if v == Role.ATTACKER.value else 1)
    return TournamentReport(
        roles=ranked_roles,
        elo=elo,
        matches=matches,
        records=records,
        per_adversary=per_adversary,
        average_rating=average,
        simulations={"matches": dict(sim_counts), "unique_simulations": len(keys)},
        roles_of={sid: c.role.value for sid, c in by_id.items()},
        settings={"sims": sims, "episodes": episodes, "base_seed": base_seed,
                  "scenario_id": graph.scenario_id, "scenario_hash": graph.env_hash},
    )
