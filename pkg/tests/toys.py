"""Small hand-built graphs shared by the tests."""

from __future__ import annotations

import random

from issf.errors import ValidationError
from issf.graph import (
    Credential,
    DynamicAccessGraph,
    EnvironmentConfig,
    LeakCredential,
    NodeSpec,
    RevealNodes,
    Vector,
    Vulnerability,
)

# CVE table: id -> (vector, impact, exploitability)
CVES = {
    "CVE-2020-15257": (Vector.LOCAL, 2.7, 2.0),
    "CVE-2020-8564": (Vector.LOCAL, 3.6, 1.8),
    "CVE-2019-14271": (Vector.REMOTE, 5.9, 3.9),
    "CVE-2021-21334": (Vector.REMOTE, 4.0, 1.8),
}

LOCAL_REVEAL = "CVE-2020-15257"
LOCAL_LEAK = "CVE-2020-8564"
REMOTE_REVEAL = "CVE-2019-14271"
REMOTE_LEAK = "CVE-2021-21334"


def vuln(cve: str, outcome) -> Vulnerability:
    vector, impact, expl = CVES[cve]
    return Vulnerability(cve, vector, outcome, impact, expl)


def reveal(*nodes: str) -> RevealNodes:
    return RevealNodes(tuple(nodes))


def leak(cred: str) -> LeakCredential:
    return LeakCredential(cred)


def toy_graph(**config) -> DynamicAccessGraph:
    """L (landing) -> A -> B (goal).

    L: local reveal A, local leak cred_A.  A (needs cred_A): remote reveal B,
    remote leak cred_B.  B (goal, needs cred_B, asset 100).
    """
    nodes = [
        NodeSpec("L", 5.0, (vuln(LOCAL_REVEAL, reveal("A")), vuln(LOCAL_LEAK, leak("cred_A"))),
                 is_landing=True),
        NodeSpec("A", 10.0, (vuln(REMOTE_REVEAL, reveal("B")), vuln(REMOTE_LEAK, leak("cred_B"))),
                 required_credential="cred_A"),
        NodeSpec("B", 100.0, (), required_credential="cred_B", is_goal=True),
    ]
    creds = [Credential("cred_A", "A"), Credential("cred_B", "B")]
    return DynamicAccessGraph.build(nodes, creds, EnvironmentConfig(**config), "toy")


def random_small_graph(rng: random.Random, max_nodes: int = 3, max_vulns: int = 2,
                       **config) -> DynamicAccessGraph:
    """A random valid graph with at most ``max_nodes`` nodes and ``max_vulns`` vulns each."""
    for _ in range(1000):
        n = rng.randint(1, max_nodes)
        ids = [f"N{i}" for i in range(n)]
        landing = ids[0]
        needs_cred = {i: (f"c_{i}" if i != landing and rng.random() < 0.6 else None) for i in ids}
        creds = [Credential(c, i) for i, c in needs_cred.items() if c]
        nodes = []
        for i in ids:
            vulns = []
            for cve in rng.sample(sorted(CVES), rng.randint(0, max_vulns)):
                others = [o for o in ids if o != i]
                leakable = [c.id for c in creds if c.target_node != i]
                options = []
                if others:
                    options.append(reveal(*sorted(rng.sample(others, rng.randint(1, len(others))))))
                if leakable:
                    options.append(leak(rng.choice(leakable)))
                if options:
                    vulns.append(vuln(cve, rng.choice(options)))
            nodes.append(NodeSpec(i, float(rng.choice([0, 5, 10, 100])), tuple(vulns),
                                  required_credential=needs_cred[i],
                                  is_goal=(i == ids[-1]), is_landing=(i == landing)))
        try:
            return DynamicAccessGraph.build(nodes, creds, EnvironmentConfig(**config), "random")
        except ValidationError:
            continue
    raise RuntimeError("could not generate a valid graph")
