from __future__ import annotations

from dataclasses import replace

import pytest

from redsim import attackgraph as ag
from redsim.generator import GenParams, generate
from redsim.knowledge import KnowledgeBase
from redsim.netmodel import Goal, GOAL_EXFILTRATE, GOAL_ROOT, InputError
from redsim.taskengine import ImplantRegistry, TaskEngine
from redsim.tasks import exfiltrate_data, find_information, lateral_move, scan

from oracle import enumerate_minimal_paths


def stage(env, *tasks):
    kb = KnowledgeBase.bootstrap(env)
    engine = TaskEngine(env, ImplantRegistry(env.attacker_host))
    clock = 0
    for invocation in tasks:
        result = engine.execute(invocation, kb)
        clock += result.duration
        kb.record(result, clock)
    return kb


# -- build -------------------------------------------------------------------

def test_fresh_kb_only_enabled_action_is_external_scan(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    assert [a.id for a in graph.enabled_actions()] == ["scan:attacker:s0"]


def test_ground_truth_contains_cred_moves(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    cred_moves = [a.id for a in graph.actions if a.kind == "lateral_move_cred"]
    assert cred_moves == [
        "lateral_move_cred:db1:cred-dbs",
        "lateral_move_cred:db2:cred-dbs",
        "lateral_move_cred:db3:cred-dbs",
    ]


def test_empty_fact_set_builds_empty_graph(eq_mini):
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=KnowledgeBase())
    assert graph.initial == frozenset()
    assert graph.actions == ()


def test_build_unknown_mode(eq_mini):
    with pytest.raises(InputError):
        ag.build(eq_mini, "psychic")
    with pytest.raises(InputError):
        ag.build(eq_mini, ag.KNOWLEDGE)


# -- get_possible_attack_paths ---------------------------------------------------

def test_shortest_path_to_db1_ground_truth(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    paths = ag.get_possible_attack_paths(graph, "db1")
    assert paths[0].action_ids == (
        "scan:attacker:s0",
        "lateral_move_vuln:web2:CVE-2017-5638",
        "find_info:web2:user",
        "lateral_move_cred:db1:cred-dbs",
    )
    assert len(paths) == 1  # web1 leads nowhere, so no alternate minimal path


def test_target_attacker_yields_single_empty_path(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    paths = ag.get_possible_attack_paths(graph, "attacker")
    assert len(paths) == 1 and paths[0].actions == ()


def test_knowledge_mode_before_scan_has_no_paths(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    assert ag.get_possible_attack_paths(graph, "db1") == []


def test_unknown_target_is_input_error(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    with pytest.raises(InputError):
        ag.get_possible_attack_paths(graph, "mainframe99")


def test_paths_sorted_and_bounded(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    goal = Goal(kind=GOAL_EXFILTRATE, target="data1")
    paths = ag.get_possible_attack_paths(graph, goal)
    lengths = [len(p) for p in paths]
    assert lengths == sorted(lengths)
    assert ag.get_possible_attack_paths(graph, goal, max_depth=3) == []


def test_path_states_replay(eq_mini):
    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    for path in ag.get_possible_attack_paths(graph, Goal(kind=GOAL_EXFILTRATE, target="data2")):
        assert len(path.states) == len(path.actions) + 1
        state = path.states[0]
        for action, after in zip(path.actions, path.states[1:]):
            assert graph.enabled(action, state)
            state = graph.apply(action, state)
            assert state == after


# -- goal_reachable -----------------------------------------------------------------

def test_goal_reachable_with_witness(eq_mini):
    ok, witness = ag.goal_reachable(eq_mini, Goal(kind=GOAL_EXFILTRATE, target="data2"))
    assert ok and len(witness.actions) == 6


def test_goal_unreachable_without_credential_file(eq_mini):
    hosts = tuple(
        replace(h, stored_credentials=()) if h.id == "web2" else h for h in eq_mini.hosts
    )
    env = replace(eq_mini, hosts=hosts)
    for asset in ("data1", "data2", "data3"):
        ok, witness = ag.goal_reachable(env, Goal(kind=GOAL_EXFILTRATE, target=asset))
        assert not ok and witness is None


def test_goal_on_attacker_host_trivial(eq_mini):
    ok, witness = ag.goal_reachable(eq_mini, Goal(kind=GOAL_ROOT, target="attacker"))
    assert ok and witness.actions == ()


# -- oracle equivalence ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["eq-mini", "chain-4", "star-mini", "dumbbell-mini"])
def test_oracle_equivalence_bundled(name):
    from redsim.scenarios import load_bundled

    env = load_bundled(name)
    graph = ag.build(env, ag.GROUND_TRUTH)
    for goal in env.goals:
        target = graph.target_predicate(goal)
        assert enumerate_minimal_paths(graph, target, 12) == {
            p.action_ids for p in ag.get_possible_attack_paths(graph, goal, 12)
        }


def test_oracle_equivalence_small_random_envs():
    for seed in (21, 22, 23):
        kind = "root_access" if seed % 2 else "exfiltrate"
        env = generate(GenParams(subnet_count_range=(2, 3), hosts_per_subnet_range=(2, 4), goal_kind=kind, seed=seed))
        graph = ag.build(env, ag.GROUND_TRUTH)
        for goal in env.goals:
            target = graph.target_predicate(goal)
            assert enumerate_minimal_paths(graph, target, 12) == {
                p.action_ids for p in ag.get_possible_attack_paths(graph, goal, 12)
            }


# -- knowledge-vs-truth properties ----------------------------------------------------

def aligned_truth_paths(env, kb, target):
    """Ground-truth path set searched from the kb's initial state."""
    kg = ag.build(env, ag.KNOWLEDGE, kb=kb)
    gt = ag.build(env, ag.GROUND_TRUTH)
    aligned = ag.AttackGraph(
        env=env, mode=gt.mode, initial=kg.initial, actions=gt.actions, known_hosts=gt.known_hosts
    )
    return (
        {p.action_ids for p in ag.get_possible_attack_paths(kg, target)},
        {p.action_ids for p in ag.get_possible_attack_paths(aligned, target)},
    )


def test_knowledge_paths_subset_of_truth(eq_mini):
    kb = stage(
        eq_mini,
        scan("attacker", "s0"),
        lateral_move("web2"),
        find_information("web2"),
    )
    for target in ("db1", "web1"):
        knowledge_paths, truth_paths = aligned_truth_paths(eq_mini, kb, target)
        assert knowledge_paths <= truth_paths


def test_adding_facts_keeps_paths_valid(eq_mini):
    """Previously returned paths stay replayable as the kb grows."""
    kb1 = stage(eq_mini, scan("attacker", "s0"), lateral_move("web2"), find_information("web2"))
    g1 = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb1)
    old_paths = ag.get_possible_attack_paths(g1, "db1")
    assert old_paths
    kb2 = stage(
        eq_mini,
        scan("attacker", "s0"),
        lateral_move("web2"),
        find_information("web2"),
        scan("web2", "s1"),
        lateral_move("db2"),
    )
    g2 = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb2)
    actions2 = {a.id: a for a in g2.actions}
    for path in old_paths:
        state = g2.initial
        for action in path.actions:
            live = actions2.get(action.id, action)
            assert g2.enabled(live, state), (path.action_ids, action.id)
            state = g2.apply(live, state)


# -- recommend_next_actions -------------------------------------------------------------

def test_recommend_fresh_kb_is_scan(eq_mini):
    kb = KnowledgeBase.bootstrap(eq_mini)
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    assert [a.id for a in ag.recommend_next_actions(graph, kb.goals)] == ["scan:attacker:s0"]


def test_recommend_post_scan_ranks_both_webs(eq_mini):
    kb = stage(eq_mini, scan("attacker", "s0"))
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    recs = [a.id for a in ag.recommend_next_actions(graph, kb.goals)]
    assert recs == [
        "lateral_move_vuln:web1:CVE-2017-5638",
        "lateral_move_vuln:web2:CVE-2017-5638",
    ]


def test_recommend_all_goals_satisfied_is_empty(eq_mini):
    kb = stage(
        eq_mini,
        scan("attacker", "s0"),
        lateral_move("web2"),
        find_information("web2"),
        lateral_move("db1"),
        lateral_move("db2"),
        lateral_move("db3"),
        find_information("db1"),
        find_information("db2"),
        find_information("db3"),
        exfiltrate_data("data1"),
        exfiltrate_data("data2"),
        exfiltrate_data("data3"),
    )
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    assert ag.recommend_next_actions(graph, kb.goals) == []


def test_recommend_concrete_paths_outrank_exploration(eq_mini):
    kb = stage(
        eq_mini,
        scan("attacker", "s0"),
        lateral_move("web2"),
        find_information("web2"),
        lateral_move("db1"),
        find_information("db1"),
    )
    graph = ag.build(eq_mini, ag.KNOWLEDGE, kb=kb)
    recs = ag.recommend_next_actions(graph, kb.goals)
    assert recs[0].id == "exfiltrate:data1"


def naive_minimal_paths(graph, target_pred, max_depth):
    """Third opinion: plain breadth-first over *all* orderings, no canonical
    reduction, no relevance restriction. Only viable on tiny inputs."""
    actions = [a for a in graph.actions if not a.speculative]
    complete = []
    frontier = [(graph.initial, ())]
    for _ in range(max_depth):
        nxt = []
        for state, seq in frontier:
            for action in actions:
                if not (action.effects - state) or not graph.enabled(action, state):
                    continue
                new_state = state | action.effects
                new_seq = seq + (action,)
                if target_pred in new_state:
                    complete.append(new_seq)
                else:
                    nxt.append((new_state, new_seq))
        frontier = nxt
    minimal = set()
    for seq in complete:
        if all(
            _replay_ok(graph, seq[:i] + seq[i + 1:], target_pred) is False
            for i in range(len(seq))
        ):
            minimal.add(tuple(a.id for a in seq))
    return minimal


def _replay_ok(graph, seq, target_pred):
    state = graph.initial
    for action in seq:
        if not graph.enabled(action, state):
            return False
        state = graph.apply(action, state)
    return target_pred in state


def test_naive_enumerator_agrees_on_tiny_scenarios(chain4, chain6_mini):
    """Guards the canonical-order reduction both fast enumerators share."""
    for env, bound in ((chain4, 9), (chain6_mini, 10)):
        graph = ag.build(env, ag.GROUND_TRUTH)
        for goal in env.goals:
            target = graph.target_predicate(goal)
            naive = naive_minimal_paths(graph, target, bound)
            fast = {p.action_ids for p in ag.get_possible_attack_paths(graph, goal, bound)}
            assert naive == fast, (env.name, goal.id, naive ^ fast)


def test_all_minimal_paths_replay_in_engine(eq_mini):
    """Cross-module executability: every returned path runs end to end."""
    from redsim.knowledge import KnowledgeBase
    from redsim.taskengine import ImplantRegistry, TaskEngine

    graph = ag.build(eq_mini, ag.GROUND_TRUTH)
    for goal in eq_mini.goals:
        for path in ag.get_possible_attack_paths(graph, goal):
            kb = KnowledgeBase.bootstrap(eq_mini)
            engine = TaskEngine(eq_mini, ImplantRegistry(eq_mini.attacker_host))
            clock = 0
            for action in path.actions:
                result = engine.execute(action.task, kb)
                assert result.ok, (goal.id, action.id, result.error)
                clock += result.duration
                kb.record(result, clock)
            assert kb.goal_satisfied(goal)


def test_recommend_escalation_probe_is_last_resort(chain6_mini):
    kb = stage(
        chain6_mini,
        scan("attacker", "s0"),
        scan("attacker", "s1"),
        lateral_move("m1"),
        find_information("m1"),
        lateral_move("m2"),
        find_information("m2"),
        scan("m1", "s0"),
        scan("m1", "s1"),
        scan("m1", "s2"),
        scan("m2", "s0"),
        scan("m2", "s1"),
        scan("m2", "s2"),
        scan("attacker", "s2"),
    )
    graph = ag.build(chain6_mini, ag.KNOWLEDGE, kb=kb)
    recs = [a.id for a in ag.recommend_next_actions(graph, kb.goals)]
    assert recs == ["escalate_privilege:m1", "escalate_privilege:m2"]
