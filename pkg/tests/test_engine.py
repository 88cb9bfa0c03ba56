import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issf.actions import Connect, LocalAttack, Noop, RemoteAttack, Restore, Scan
from issf.agents import (
    ConstantAgent,
    HeuristicAttacker,
    NullDefender,
    PatrolDefender,
    RandomAgent,
    ScriptedAgent,
    shortest_attack_chain,
)
from issf.engine import Role, Termination, reset, run_episode, step, write_traces
from issf.graph import NodeState
from toys import LOCAL_LEAK, LOCAL_REVEAL, REMOTE_LEAK, REMOTE_REVEAL, toy_graph

G = "APIGateway"
# Worked out from the scenario topology: the gateway's two local exploits reveal
# SA1/SC1 and leak cred_SB1; SA1 reveals SA2, whose two exploits reveal/leak
# towards DBA, and so on down each chain until the three databases are owned.
HAND_CHAIN = [
    LocalAttack(G, "CVE-2020-15257"),
    LocalAttack(G, "CVE-2020-8564"),
    RemoteAttack(G, "SA1", "CVE-2019-14271"),
    RemoteAttack(G, "SA2", "CVE-2019-14271"),
    RemoteAttack(G, "SA2", "CVE-2021-21334"),
    RemoteAttack(G, "SC1", "CVE-2019-14271"),
    RemoteAttack(G, "SC1", "CVE-2021-21334"),
    Connect(G, "DBA", "cred_DBA"),
    Connect(G, "SB1", "cred_SB1"),
    LocalAttack("SB1", "CVE-2020-15257"),
    LocalAttack("SB1", "CVE-2020-8564"),
    Connect(G, "SB2", "cred_SB2"),
    LocalAttack("SB2", "CVE-2020-15257"),
    LocalAttack("SB2", "CVE-2020-8564"),
    Connect(G, "DBB", "cred_DBB"),
    Connect(G, "SC2", "cred_SC2"),
    LocalAttack("SC2", "CVE-2020-15257"),
    LocalAttack("SC2", "CVE-2020-8564"),
    Connect(G, "DBC", "cred_DBC"),
]


def digest(state):
    return (state.step, sorted((n, s.value) for n, s in state.attacker_state.items()),
            sorted((n, m.value) for n, m in state.marks.items()), sorted(state.reimaging.items()),
            sorted(state.exploited), sorted(state.credentials), state.discovery_edges)


class TestReset:
    def test_only_the_gateway_is_owned(self, chain):
        s = reset(chain, 11)
        owned = [n for n, st in s.attacker_state.items() if st is NodeState.OWNED]
        assert owned == [G]
        assert sum(st is NodeState.UNDISCOVERED for st in s.attacker_state.values()) == 9
        assert s.step == 0 and not s.exploited and not s.credentials

    def test_seed_does_not_change_the_state(self, chain):
        assert digest(reset(chain, 1)) == digest(reset(chain, 1)) == digest(reset(chain, 99))


class TestStep:
    def test_defender_acts_first_by_default(self, toy):
        s = reset(toy, 0)
        records, outcome = step(toy, s, ConstantAgent(Role.ATTACKER, LocalAttack("L", LOCAL_REVEAL)),
                                ConstantAgent(Role.DEFENDER, Scan()))
        assert [r.role for r in records] == [Role.DEFENDER, Role.ATTACKER]
        assert outcome is None and s.step == 1

    def test_attacker_first_when_configured(self, toy):
        s = reset(toy, 0)
        records, _ = step(toy, s, ConstantAgent(Role.ATTACKER, Noop()), NullDefender(),
                          defender_first=False)
        assert [r.role for r in records] == [Role.ATTACKER, Role.DEFENDER]

    def test_reimaging_one_returns_at_t_plus_two(self):
        g = toy_graph(reimage_duration_steps=1)
        s = reset(g, 0)
        attacker = NullDefender()
        attacker.role = Role.ATTACKER
        for _ in range(3):
            step(g, s, attacker, NullDefender())
        t = s.step
        step(g, s, attacker, ScriptedAgent(Role.DEFENDER, [Restore("A")], then=Noop()))
        assert s.step == t + 1 and not s.running("A")
        step(g, s, attacker, NullDefender())
        assert s.step == t + 2 and s.running("A")

    def test_unknown_id_aborts(self, toy):
        s = reset(toy, 0)
        _, outcome = step(toy, s, ConstantAgent(Role.ATTACKER, LocalAttack("Q", LOCAL_LEAK)),
                          NullDefender())
        assert outcome.kind is Termination.ABORTED and "Q" in outcome.reason

    def test_wrong_role_action_aborts(self, toy):
        s = reset(toy, 0)
        _, outcome = step(toy, s, ConstantAgent(Role.ATTACKER, Scan()), NullDefender())
        assert outcome.kind is Termination.ABORTED

    def test_win_detected_in_the_finishing_round(self, toy):
        script = [LocalAttack("L", LOCAL_REVEAL), LocalAttack("L", LOCAL_LEAK),
                  RemoteAttack("L", "A", REMOTE_REVEAL), RemoteAttack("L", "A", REMOTE_LEAK),
                  Connect("L", "B", "cred_B")]
        trace = run_episode(toy, ScriptedAgent(Role.ATTACKER, script), NullDefender(), 0)
        assert trace.outcome.kind is Termination.ATTACKER_WIN
        assert trace.length == 5


class TestRunEpisode:
    def test_hand_chain_is_minimal(self, chain):
        assert len(shortest_attack_chain(chain)) == len(HAND_CHAIN) == 19

    def test_scripted_chain_wins_in_chain_length(self, chain):
        trace = run_episode(chain, ScriptedAgent(Role.ATTACKER, HAND_CHAIN), NullDefender(), 3)
        assert trace.outcome.kind is Termination.ATTACKER_WIN
        assert trace.length == 19
        assert all(trace.records[i].reward.success for i in range(1, 38, 2))
        assert trace.final_owned == 7

    def test_always_invalid_attacker_hits_step_limit(self, toy):
        bad = ConstantAgent(Role.ATTACKER, LocalAttack("B", LOCAL_LEAK))
        trace = run_episode(toy, bad, NullDefender(), 0, max_steps=50)
        assert trace.outcome.kind is Termination.STEP_LIMIT and trace.length == 50
        assert trace.attacker_reward == -50 * toy.config.invalid_action_cost
        assert trace.defender_reward == 0

    def test_full_length_step_limit(self, chain):
        trace = run_episode(chain, ConstantAgent(Role.ATTACKER, LocalAttack("DBA", "CVE-2020-8564")),
                            NullDefender(), 0, keep_records=False)
        assert trace.length == chain.config.max_episode_length == 2000

    def test_random_attacker_trace_is_reproducible(self, chain):
        def jsonl(seed):
            return run_episode(chain, RandomAgent(Role.ATTACKER), PatrolDefender(3), seed,
                               max_steps=300).to_jsonl()

        assert jsonl(7) == jsonl(7)
        assert jsonl(7) != jsonl(8)

    def test_wrong_slots_rejected(self, toy):
        with pytest.raises(ValueError):
            run_episode(toy, NullDefender(), NullDefender(), 0)

    def test_trace_export(self, toy):
        trace = run_episode(toy, RandomAgent(Role.ATTACKER), RandomAgent(Role.DEFENDER), 4,
                            max_steps=20)
        buf = io.StringIO()
        write_traces([trace, trace], buf)
        lines = [json.loads(x) for x in buf.getvalue().splitlines()]
        assert len(lines) == 2 * (1 + len(trace.records))
        header = lines[0]["header"]
        assert header["scenario_hash"] == toy.env_hash and header["seed"] == 4
        assert header["outcome"]["kind"] == trace.outcome.kind.value
        assert {"step", "role", "action", "reward", "discovered", "owned", "suspicious",
                "rng_draws"} <= set(lines[1])


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31), st.booleans(), st.integers(1, 200))
def test_trace_bookkeeping(seed, defender_first, limit):
    g = toy_graph(max_episode_length=limit)
    trace = run_episode(g, HeuristicAttacker(explore=0.3), PatrolDefender(2, "alternate"), seed,
                        defender_first=defender_first)
    assert 0 < trace.length <= limit
    for role, total in ((Role.ATTACKER, trace.attacker_reward), (Role.DEFENDER, trace.defender_reward)):
        assert total == pytest.approx(sum(r.reward.reward for r in trace.records if r.role is role))
    steps = [r.step for r in trace.records]
    assert steps == sorted(steps)
    if trace.outcome.kind is Termination.ATTACKER_WIN:
        # the goal cannot have been owned before the final round
        last = [r for r in trace.records if r.role is Role.ATTACKER][-1]
        assert (last.action["kind"], last.action["target"]) == ("connect", "B")
        assert last.reward.success
    else:
        assert trace.length == limit
