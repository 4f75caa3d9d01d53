from __future__ import annotations

import pytest

from redsim.knowledge import (
    ConsistencyError,
    EventRecord,
    KnowledgeBase,
    Query,
    QueryError,
    render_observation,
)
from redsim import knowledge as kn
from redsim.tasks import (
    TaskInvocation,
    TaskResult,
    FAILED,
    find_information,
    lateral_move,
    scan,
)


def result(invocation, events, status="ok", error=None):
    return TaskResult(invocation=invocation, status=status, events=events, error=error)


def host_discovered(host, subnet, external=False):
    return (kn.HOST_DISCOVERED, {"host": host, "subnet": subnet, "external": external})


def session(host, subnet, privilege="user", external=False, routes=()):
    return (
        kn.SESSION_ESTABLISHED,
        {"host": host, "privilege": privilege, "subnet": subnet, "external": external, "routes": list(routes)},
    )


# Hand-folded eq-mini trace: scan the external subnet, move onto web2, loot
# it, move onto db1, loot it, exfiltrate. Events written out by hand from
# the fixture's ground truth; this is the oracle the fold must match.
def folded_eq_mini_kb(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    kb.record(
        result(
            scan("attacker", "s0"),
            [
                host_discovered("attacker", "s0", external=True),
                host_discovered("web1", "s0", external=True),
                (kn.SERVICE_DISCOVERED, {"host": "web1", "protocol": "http", "port": 80, "vuln": "CVE-2017-5638"}),
                (kn.VULN_DISCOVERED, {"host": "web1", "vuln": "CVE-2017-5638", "kind": "remote_code_execution"}),
                host_discovered("web2", "s0", external=True),
                (kn.SERVICE_DISCOVERED, {"host": "web2", "protocol": "http", "port": 80, "vuln": "CVE-2017-5638"}),
                (kn.VULN_DISCOVERED, {"host": "web2", "vuln": "CVE-2017-5638", "kind": "remote_code_execution"}),
            ],
        ),
        sim_time=2,
    )
    kb.record(result(lateral_move("web2"), [session("web2", "s0", external=True, routes=("s0", "s1"))]), sim_time=5)
    kb.record(
        result(
            find_information("web2"),
            [
                (
                    kn.CREDENTIAL_FOUND,
                    {"cred": "cred-dbs", "stored_on": "web2", "targets": ["db1", "db2", "db3"], "requires_root_to_read": False},
                )
            ],
        ),
        sim_time=6,
    )
    kb.record(result(lateral_move("db1"), [session("db1", "s1", routes=("s0",))]), sim_time=9)
    kb.record(
        result(
            find_information("db1"),
            [(kn.DATA_FOUND, {"asset": "data1", "host": "db1", "requires_root": False, "size_units": 1})],
        ),
        sim_time=10,
    )
    kb.record(result(TaskInvocation.make("ExfiltrateData", asset="data1"), [(kn.DATA_EXFILTRATED, {"asset": "data1"})]), sim_time=13)
    return kb


def test_fold_by_hand_trace(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    assert set(kb.known_hosts) == {"attacker", "web1", "web2", "db1", "db2", "db3"}
    assert kb.known_hosts["db2"] is None  # known from the credential file only
    assert kb.known_hosts["db1"] == "s1"
    assert kb.known_subnets == {"s0": True, "s1": None}
    assert set(kb.harvested_credentials) == {"cred-dbs"}
    assert kb.sessions == {("attacker", "root"), ("web2", "user"), ("db1", "user")}
    assert set(kb.known_data) == {"data1"}
    assert kb.exfiltrated == {"data1"}
    assert kb.known_vulns == {
        "web1": {"CVE-2017-5638": "remote_code_execution"},
        "web2": {"CVE-2017-5638": "remote_code_execution"},
    }


def test_record_is_idempotent_per_fact(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    twice = result(scan("attacker", "s0"), [host_discovered("web1", "s0"), host_discovered("web1", "s0")])
    kb.record(twice, sim_time=2)
    assert list(kb.known_hosts).count("web1") == 1
    before = kb.facts_snapshot()
    kb.record(result(scan("attacker", "s0"), [host_discovered("web1", "s0")]), sim_time=4)
    assert kb.facts_snapshot() == before
    assert len(kb.event_log) == 5  # 2 bootstrap + 2 + 1: the log keeps every event


def test_session_event_adds_session(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    kb.record(result(lateral_move("web2"), [session("web2", "s0")]), sim_time=3)
    assert ("web2", "user") in kb.sessions


def test_exfiltrated_requires_known_data(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    bad = result(TaskInvocation.make("ExfiltrateData", asset="data1"), [(kn.DATA_EXFILTRATED, {"asset": "data1"})])
    with pytest.raises(ConsistencyError):
        kb.record(bad, sim_time=1)


def test_privilege_escalated_requires_session(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    bad = result(TaskInvocation.make("EscalatePrivilege", host="web1"), [(kn.PRIVILEGE_ESCALATED, {"host": "web1"})])
    with pytest.raises(ConsistencyError):
        kb.record(bad, sim_time=1)


def test_sim_time_must_not_decrease(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    kb.record(result(scan("attacker", "s0"), [host_discovered("web1", "s0")]), sim_time=5)
    with pytest.raises(ConsistencyError):
        kb.record(result(scan("attacker", "s0"), []), sim_time=4)


# -- queries -----------------------------------------------------------------

def test_query_hosts_on_network_after_scan(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    out = kb.query(Query.make("hosts_on_network", subnet="s0"))
    assert out["result"] == ["attacker", "web1", "web2"]


def test_query_infected_hosts_fresh(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    assert kb.query(Query.make("infected_hosts"))["result"] == ["attacker"]


def test_query_known_vulns(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    out = kb.query(Query.make("known_vulns", host="web1"))
    assert {v["id"] for v in out["result"]} == {"CVE-2017-5638"}


def test_query_external_networks(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    assert kb.query(Query.make("external_networks"))["result"] == ["s0"]


def test_query_known_data_unexfiltrated_filter(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    assert kb.query(Query.make("known_data", unexfiltrated_only="false"))["result"] == [
        {"asset": "data1", "host": "db1", "requires_root": False}
    ]
    assert kb.query(Query.make("known_data", unexfiltrated_only="true"))["result"] == []


def test_query_goal_progress(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    progress = kb.query(Query.make("goal_progress"))["result"]
    assert [g["satisfied"] for g in progress] == [True, False, False]


def test_query_sessions(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    assert kb.query(Query.make("sessions", host="web2"))["result"] == ["user"]


def test_query_unknown_parameters(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    with pytest.raises(QueryError):
        kb.query(Query.make("hosts_on_network", subnet="s9"))
    with pytest.raises(QueryError):
        kb.query(Query.make("known_vulns", host="web1"))  # not yet known
    with pytest.raises(QueryError):
        kb.query(Query(kind="everything", params=()))


# -- soundness / replay --------------------------------------------------------

def test_replay_reproduces_facts(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    rebuilt = KnowledgeBase.replay(kb.event_log, goals=eq_mini.goals)
    assert rebuilt.facts_snapshot() == kb.facts_snapshot()
    assert [r.to_json() for r in rebuilt.event_log] == [r.to_json() for r in kb.event_log]


def test_event_json_round_trip(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    for record in kb.event_log:
        assert EventRecord.from_json(record.to_json()).to_json() == record.to_json()


def _fact_sets(kb):
    snap = kb.facts_snapshot()
    return {
        "hosts": set(snap["known_hosts"]),
        "subnets": set(snap["known_subnets"]),
        "vulns": {(h, v) for h, vs in snap["known_vulns"].items() for v in vs},
        "creds": set(snap["harvested_credentials"]),
        "data": set(snap["known_data"]),
        "sessions": set(snap["sessions"]),
        "exfiltrated": set(snap["exfiltrated"]),
    }


def test_monotonicity_over_log_prefixes(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    log = kb.event_log
    previous = None
    for cut in range(len(log) + 1):
        facts = _fact_sets(KnowledgeBase.replay(log[:cut], goals=eq_mini.goals))
        if previous is not None:
            for key in facts:
                assert previous[key] <= facts[key]
        previous = facts


# -- observations ---------------------------------------------------------------

def test_observation_fresh_kb(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    obs = render_observation(kb)
    assert obs.fact_counts["credentials"] == 0
    assert obs.fact_counts["data_assets"] == 0
    assert obs.infected == ["attacker"]
    text = obs.to_text()
    assert "0/3 satisfied" in text


def test_observation_includes_task_error_verbatim(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    failed = TaskResult(
        invocation=lateral_move("db1"),
        status=FAILED,
        events=[(kn.TASK_ERROR, {"message": "no path to target"})],
        error="no path to target",
    )
    obs = render_observation(kb, [failed])
    assert "no path to target" in obs.to_text()


def test_observation_respects_cap(eq_mini):
    kb = folded_eq_mini_kb(eq_mini)
    many = [
        TaskResult(invocation=scan("attacker", "s0"), events=[(kn.TASK_ERROR, {"message": "x" * 50})])
        for _ in range(100)
    ]
    obs = render_observation(kb, many, cap=800)
    assert len(obs.to_text()) <= 800


def test_observation_capped_on_large_network():
    """Fifty known hosts and 48 goals still fit the default 8000-char cap."""
    from redsim.scenarios import load_bundled
    from redsim.taskengine import ImplantRegistry, TaskEngine
    from redsim.tasks import find_information, lateral_move

    env = load_bundled("equifax-48")
    kb = KnowledgeBase.bootstrap(env)
    engine = TaskEngine(env, ImplantRegistry(env.attacker_host))
    clock = 0
    tasks = [scan("attacker", "s0"), lateral_move("web2"), find_information("web2")]
    tasks += [lateral_move(f"db{i:03d}") for i in range(1, 49)]
    results = []
    for invocation in tasks:
        result = engine.execute(invocation, kb)
        clock += result.duration
        kb.record(result, clock)
        results.append(result)
    assert len(kb.known_hosts) >= 50
    obs = render_observation(kb, results[-5:], budget={"minutes_left": 10, "steps_left": 3})
    assert len(obs.to_text()) <= obs.cap
