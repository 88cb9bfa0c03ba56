import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issf.actions import (
    EpisodeState,
    apply_attacker,
    apply_defender,
    end_round,
    enumerate_valid_attacker_actions,
    LocalAttack,
    RemoteAttack,
    Restore,
)
from issf.errors import ParseError, ValidationError
from issf.graph import (
    SCENARIO_DIR,
    EdgeKind,
    EdgeSpec,
    Mark,
    NodeState,
    attacker_observation,
    defender_observation,
    derive_edges,
    load_graph,
)
from toys import LOCAL_REVEAL, REMOTE_LEAK, REMOTE_REVEAL, toy_graph

CHAIN_PATH = SCENARIO_DIR / "three_service_chain.json"


def chain_doc():
    return json.loads(CHAIN_PATH.read_text())


class TestLoading:
    def test_shipped_scenario_shape(self, chain):
        assert len(chain.node_ids) == 10
        assert len(chain.credential_ids) == 6
        assert len(chain.goal_ids) == 3
        assert chain.landing_ids == ("APIGateway",)

    def test_three_chains_of_two_services_and_a_database(self, chain):
        for letter in "ABC":
            assert {f"S{letter}1", f"S{letter}2", f"DB{letter}"} <= set(chain.node_ids)
            assert chain.node(f"DB{letter}").is_goal

    def test_empty_node_list_rejected(self):
        doc = chain_doc()
        doc["nodes"] = []
        with pytest.raises(ValidationError):
            load_graph(doc)

    def test_dangling_leaked_credential_rejected(self):
        doc = chain_doc()
        leaked = None
        for node in doc["nodes"]:
            for v in node["vulnerabilities"]:
                if "leak_credential" in v["outcome"]:
                    leaked = v["outcome"]["leak_credential"]
        assert leaked is not None
        doc["credentials"] = [c for c in doc["credentials"] if c["id"] != leaked]
        for node in doc["nodes"]:
            if node.get("required_credential") == leaked:
                del node["required_credential"]
        with pytest.raises(ValidationError, match=leaked):
            load_graph(doc)

    def test_dangling_reveal_rejected(self):
        doc = chain_doc()
        doc["nodes"][0]["vulnerabilities"][0]["outcome"] = {"reveal_nodes": ["nowhere"]}
        with pytest.raises(ValidationError):
            load_graph(doc)

    def test_no_goal_rejected(self):
        doc = chain_doc()
        for n in doc["nodes"]:
            n["is_goal"] = False
        with pytest.raises(ValidationError, match="goal"):
            load_graph(doc)

    def test_no_landing_rejected(self):
        doc = chain_doc()
        for n in doc["nodes"]:
            n["is_landing"] = False
        with pytest.raises(ValidationError, match="landing"):
            load_graph(doc)

    @pytest.mark.parametrize("restore", [2.0, 1.0])
    def test_restore_must_cost_more_than_connect(self, restore):
        doc = chain_doc()
        doc["config"]["restore_cost"] = restore
        with pytest.raises(ValidationError, match="restore_cost must exceed connect_cost"):
            load_graph(doc)

    def test_malformed_json(self):
        with pytest.raises(ParseError):
            load_graph("{not json")
        with pytest.raises(ParseError):
            load_graph("")

    def test_unknown_keys_rejected(self):
        doc = chain_doc()
        doc["nodes"][0]["colour"] = "red"
        with pytest.raises(ParseError, match="colour"):
            load_graph(doc)

    def test_subscores_out_of_range(self):
        doc = chain_doc()
        doc["nodes"][0]["vulnerabilities"][0]["impact"] = 11
        with pytest.raises(ParseError):
            load_graph(doc)

    def test_inconsistent_toolkit_rejected(self):
        doc = chain_doc()
        # same CVE id, different subscores on another node
        for node in doc["nodes"]:
            for v in node["vulnerabilities"]:
                if v["id"] == "CVE-2020-15257" and node["id"] != "APIGateway":
                    v["impact"] = 9.0
        with pytest.raises(ValidationError):
            load_graph(doc)

    def test_round_trip_document_keeps_hash(self, chain):
        again = load_graph(chain.to_document(), "three_service_chain")
        assert again.env_hash == chain.env_hash
        assert again.shape() == chain.shape()

    def test_hash_is_content_sensitive(self, chain):
        assert chain.with_config(scan_cost=0.25).env_hash != chain.env_hash


class TestEdges:
    def test_endpoint_edge_from_reveal(self, chain):
        assert EdgeSpec("SA1", "SA2", EdgeKind.ENDPOINT) in chain.edges

    def test_credential_edge_points_at_credential_target(self, chain):
        assert EdgeSpec("APIGateway", "SB1", EdgeKind.CREDENTIAL) in chain.edges

    def test_node_without_vulnerabilities_contributes_nothing(self, toy):
        assert not [e for e in toy.edges if e.source == "B"]

    def test_duplicate_reveals_deduplicated(self):
        from issf.graph import Credential, DynamicAccessGraph, NodeSpec
        from toys import reveal, vuln

        nodes = [NodeSpec("L", 0.0, (vuln(LOCAL_REVEAL, reveal("X")), vuln("CVE-2020-8564", reveal("X"))),
                          is_landing=True),
                 NodeSpec("X", 1.0, is_goal=True),
                 NodeSpec("Y", 1.0)]
        g = DynamicAccessGraph.build(nodes, [])
        assert derive_edges(g) == [EdgeSpec("L", "X", EdgeKind.ENDPOINT)]

    def test_derivation_is_pure_and_sorted(self, chain):
        first, second = derive_edges(chain), derive_edges(chain)
        assert first == second == list(chain.edges)
        keys = [(e.source, e.target, e.kind.value) for e in first]
        assert keys == sorted(keys)
        assert all(e.source != e.target for e in first)


class TestObservations:
    def test_initial_attacker_view_is_only_the_landing_node(self, chain):
        obs = attacker_observation(chain, EpisodeState.initial(chain, 0))
        assert dict(obs.nodes) == {"APIGateway": NodeState.OWNED}
        assert obs.discovery_edges == ()
        assert obs.exploited == frozenset()

    def test_saturated_state_shows_everything(self, chain):
        state = EpisodeState.initial(chain, 0)
        for n in chain.node_ids:
            state.attacker_state[n] = NodeState.OWNED
        assert set(attacker_observation(chain, state).nodes) == set(chain.node_ids)

    def test_remote_reveal_adds_node_and_discovery_edge(self, toy):
        state = EpisodeState.initial(toy, 0)
        apply_attacker(toy, state, LocalAttack("L", LOCAL_REVEAL))
        end_round(toy, state)
        apply_attacker(toy, state, RemoteAttack("L", "A", REMOTE_REVEAL))
        obs = attacker_observation(toy, state)
        assert obs.nodes["B"] is NodeState.DISCOVERED
        assert ("A", "B", 1) in obs.discovery_edges
        assert obs.discovery_edges == (("L", "A", 0), ("A", "B", 1))

    def test_initial_defender_view(self, chain):
        obs = defender_observation(chain, EpisodeState.initial(chain, 0))
        assert obs.nodes == chain.node_ids
        assert obs.edges == chain.edges
        assert set(obs.marks.values()) == {Mark.NORMAL}
        assert set(obs.reimaging.values()) == {0}

    def test_restore_shows_reimaging(self, toy):
        state = EpisodeState.initial(toy, 0)
        apply_defender(toy, state, Restore("L"))
        assert defender_observation(toy, state).reimaging["L"] == 1

    def test_defender_view_carries_no_attacker_state(self, toy):
        obs = defender_observation(toy, EpisodeState.initial(toy, 0))
        assert not hasattr(obs, "exploited")
        assert not hasattr(obs, "credentials")
        assert "OWNED" not in repr(obs) and "owned" not in repr(obs)

    def test_no_vulnerability_presence_before_exploit(self, toy):
        state = EpisodeState.initial(toy, 0)
        apply_attacker(toy, state, LocalAttack("L", LOCAL_REVEAL))
        apply_attacker(toy, state, RemoteAttack("L", "A", REMOTE_LEAK))
        obs = attacker_observation(toy, state)
        # A carries two vulnerabilities; only the exploited one is visible.
        assert obs.exploited == {("L", LOCAL_REVEAL), ("A", REMOTE_LEAK)}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10_000), max_size=25))
def test_attacker_view_grows_under_attacker_only_play(choices):
    g = toy_graph()
    state = EpisodeState.initial(g, 0)
    seen = set(attacker_observation(g, state).nodes)
    for c in choices:
        valid = enumerate_valid_attacker_actions(g, state)
        apply_attacker(g, state, valid[c % len(valid)])
        end_round(g, state)
        now = set(attacker_observation(g, state).nodes)
        assert seen <= now
        seen = now


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(min_value=0, max_value=10_000)), max_size=25))
def test_defender_view_topology_is_constant(moves):
    from issf.actions import enumerate_valid_defender_actions

    g = toy_graph()
    state = EpisodeState.initial(g, 3)
    for attacker_turn, c in moves:
        if attacker_turn:
            valid = enumerate_valid_attacker_actions(g, state)
            if valid:  # empty while the landing node re-images
                apply_attacker(g, state, valid[c % len(valid)])
        else:
            valid = enumerate_valid_defender_actions(g, state)
            apply_defender(g, state, valid[c % len(valid)])
        end_round(g, state)
        obs = defender_observation(g, state)
        assert obs.nodes == g.node_ids and obs.edges == g.edges
        att = attacker_observation(g, state)
        assert all(s is not NodeState.UNDISCOVERED for s in att.nodes.values())
        assert {n for n, _ in att.exploited} <= set(att.nodes)
