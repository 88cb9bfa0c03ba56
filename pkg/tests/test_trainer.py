import json

import numpy as np
import pytest

from issf.agents import LearnerConfig
from issf.engine import Role
from issf.errors import (
    AdversaryRequired,
    CyclicPlan,
    DuplicateId,
    ParseError,
    RoleMismatch,
    ShapeMismatch,
    UnknownService,
)
from issf.trainer import PlanEntry, load_plan, plan_order, train, training_curriculum

SMALL = LearnerConfig("qlearning", total_timesteps=600, max_episode_length=60, learning_start=100)


def small(**kw):
    return LearnerConfig(**{**SMALL.to_dict(), **kw})


@pytest.fixture(scope="module")
def attacker():
    from toys import toy_graph

    return train(toy_graph(), Role.ATTACKER, small(seed=1))[0]


class TestTrain:
    def test_defender_needs_a_real_adversary(self, toy):
        with pytest.raises(AdversaryRequired):
            train(toy, Role.DEFENDER, SMALL)
        with pytest.raises(AdversaryRequired):
            train(toy, Role.DEFENDER, SMALL, adversary=[])

    def test_adversary_must_play_the_other_role(self, toy, attacker):
        with pytest.raises(RoleMismatch):
            train(toy, Role.ATTACKER, SMALL, adversary=attacker)

    def test_pretrained_must_match_role(self, toy, attacker):
        with pytest.raises(RoleMismatch):
            train(toy, Role.DEFENDER, SMALL, adversary=attacker, pretrained=attacker)

    def test_adversary_shape_checked(self, chain, attacker):
        with pytest.raises(ShapeMismatch):
            train(chain, Role.DEFENDER, SMALL, adversary=attacker)

    @pytest.mark.parametrize("algo", ["qlearning", "policy_gradient", "random"])
    def test_timestep_accounting(self, toy, algo):
        cfg = small(algorithm=algo, total_timesteps=500)
        _, report = train(toy, Role.ATTACKER, cfg)
        assert cfg.total_timesteps <= report.timesteps < cfg.total_timesteps + cfg.max_episode_length
        assert report.episodes == len(report.episode_lengths)

    def test_adversary_is_never_mutated(self, toy, attacker):
        before = attacker.digest()
        _, report = train(toy, Role.DEFENDER, small(seed=4), adversary=attacker)
        assert attacker.digest() == before
        assert report.adversary_digest_before == report.adversary_digest_after == before

    def test_stochastic_adversary_also_untouched(self, toy, attacker):
        before = attacker.digest()
        train(toy, Role.DEFENDER, small(seed=4, stochastic_adversary=True), adversary=attacker)
        assert attacker.digest() == before

    @pytest.mark.parametrize("algo", ["qlearning", "policy_gradient"])
    def test_reproducible_digest(self, toy, algo):
        a = train(toy, Role.ATTACKER, small(algorithm=algo, seed=9))[0].digest()
        b = train(toy, Role.ATTACKER, small(algorithm=algo, seed=9))[0].digest()
        c = train(toy, Role.ATTACKER, small(algorithm=algo, seed=10))[0].digest()
        assert a == b != c

    def test_fine_tune_starts_from_pretrained_parameters(self, toy, attacker):
        base, _ = train(toy, Role.DEFENDER, small(seed=2), adversary=attacker)
        zero_budget = small(seed=3, total_timesteps=0)
        copy, report = train(toy, Role.DEFENDER, zero_budget, adversary=attacker, pretrained=base)
        assert report.episodes == 0
        assert copy.learner.table == base.learner.table and copy.learner.steps == 0
        tuned, _ = train(toy, Role.DEFENDER, small(seed=3), adversary=attacker, pretrained=base)
        assert tuned.digest() != base.digest()
        assert base.digest() == train(toy, Role.DEFENDER, small(seed=2), adversary=attacker)[0].digest()

    def test_fine_tune_pg_keeps_weights(self, toy):
        base, _ = train(toy, Role.ATTACKER, small(algorithm="policy_gradient", seed=1))
        copy, _ = train(toy, Role.ATTACKER, small(algorithm="policy_gradient", total_timesteps=0),
                        pretrained=base)
        assert np.array_equal(copy.learner.weights, base.learner.weights)

    def test_adversary_rotation(self, toy, attacker):
        other = train(toy, Role.ATTACKER, small(seed=8))[0]
        _, report = train(toy, Role.DEFENDER, small(seed=5), adversary=[attacker, other])
        assert report.adversary_digest_before == f"{attacker.digest()},{other.digest()}"
        assert report.adversary_digest_after == report.adversary_digest_before


class TestPlans:
    def entry(self, id, role="defender", adversary="A", pretrain="NA"):
        return PlanEntry(id, Role(role), "qlearning", adversary, pretrain)

    def test_topological_order(self):
        plan = [self.entry("D2", pretrain="D1"), self.entry("D1"), self.entry("A", "attacker", "NA")]
        order = [e.id for e in plan_order(plan, lambda _: False)]
        assert order.index("A") < order.index("D1") < order.index("D2")

    def test_cycle(self):
        plan = [self.entry("X", adversary="Y"), self.entry("Y", adversary="X")]
        with pytest.raises(CyclicPlan):
            plan_order(plan, lambda _: False)

    def test_missing_reference(self):
        with pytest.raises(UnknownService, match="ghost"):
            plan_order([self.entry("X", adversary="ghost")], lambda _: False)

    def test_reference_to_existing_service(self):
        assert [e.id for e in plan_order([self.entry("X")], lambda i: i == "A")] == ["X"]

    def test_empty_plan(self, chain, pool):
        assert training_curriculum(chain, [], pool) == []
        assert pool.ids() == []

    def test_load_shipped_plan(self):
        plan = load_plan("mini_table1")
        assert [e.id for e in plan] == ["AQ", "AP", "DQQ", "DQP", "DQQQ", "DQQP"]
        assert plan[4].pretrain == "DQQ" and plan[5].adversary == "AP"

    def test_load_plan_forms(self, tmp_path):
        entries = [{"id": "A1", "role": "offense", "algorithm": "random", "overrides": {"total_timesteps": 5}}]
        path = tmp_path / "p.json"
        path.write_text(json.dumps(entries))
        for source in (entries, {"services": entries}, path, str(path)):
            (e,) = load_plan(source)
            assert e.role is Role.ATTACKER and e.overrides == {"total_timesteps": 5}

    @pytest.mark.parametrize("bad", ["{oops", '{"services": 3}', '[{"id": "X"}]',
                                     '[{"id": "X", "role": "attacker", "algorithm": "q", "colour": 1}]'])
    def test_bad_plans(self, tmp_path, bad):
        path = tmp_path / "bad.json"
        path.write_text(bad)
        with pytest.raises(ParseError):
            load_plan(path)


def test_curriculum_builds_a_small_table(chain, pool):
    plan = load_plan("mini_table1")
    base = LearnerConfig(total_timesteps=300, max_episode_length=60, learning_start=50)
    published = training_curriculum(chain, plan, pool, base)
    assert [i for i, _ in published] == ["AQ", "AP", "DQQ", "DQP", "DQQQ", "DQQP"]
    assert pool.ids() == sorted(["AQ", "AP", "DQQ", "DQP", "DQQQ", "DQQP"])
    assert pool.manifest("AQ").adversary == "NA"
    assert pool.manifest("DQP").adversary == "AP"
    assert pool.manifest("DQP").algorithm == "qlearning"
    assert pool.manifest("AP").algorithm == "policy_gradient"
    tuned = pool.manifest("DQQP")
    assert (tuned.adversary, tuned.pretrain) == ("AP", "DQQ")
    assert [s.id for s in pool.lineage("DQQP")] == ["DQQP", "DQQ"]
    with pytest.raises(DuplicateId):
        training_curriculum(chain, plan[:1], pool, base)
