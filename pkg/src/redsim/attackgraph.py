"""Dynamic attack-graph service over predicate states.

States are finite predicate sets (never enumerated explicitly) and actions
are precondition/effect rules instantiated from either ground truth or the
current knowledge base. Effects only ever add predicates, which makes the
domain monotone: reachability reduces to a fixpoint closure, and an action
whose effects add nothing to a state can never belong to a minimal path.

Predicates:
    ("accessed", host, privilege)     ("cred", credential_id)
    ("vuln", host, vuln_id)           ("scanned", subnet, source_host)
    ("data", asset_id)                ("exfiltrated", asset_id)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .netmodel import (
    Environment,
    Goal,
    GOAL_EXFILTRATE,
    GOAL_ROOT,
    InputError,
    PRIVESC,
    RCE,
    ROOT,
    USER,
    hop_chain,
    reachable,
    reachable_any,
)
from .tasks import (
    TaskInvocation,
    escalate_privilege as escalate_task,
    exfiltrate_data as exfiltrate_task,
    find_information as find_info_task,
    lateral_move as lateral_task,
    scan as scan_task,
)
from .knowledge import KnowledgeBase

Predicate = tuple
GROUND_TRUTH = "ground_truth"
KNOWLEDGE = "knowledge"

DEFAULT_DEPTH = 12


def accessed(host: str, privilege: str = USER) -> Predicate:
    return ("accessed", host, privilege)


def cred_known(cred_id: str) -> Predicate:
    return ("cred", cred_id)


def vuln_known(host: str, vuln_id: str) -> Predicate:
    return ("vuln", host, vuln_id)


def subnet_scanned(subnet: str, source: str) -> Predicate:
    return ("scanned", subnet, source)


def data_known(asset: str) -> Predicate:
    return ("data", asset)


def exfiltrated(asset: str) -> Predicate:
    return ("exfiltrated", asset)


@dataclass(frozen=True)
class AttackAction:
    """One edge schema: preconditions in, effects out.

    `requires` must all hold; `requires_any` (when present) needs at least
    one member. Exfiltration additionally needs an infected relay chain from
    `exfil_host` to the attacker, checked against the state's accessed set.
    Speculative actions model try-and-see exploration (unsearched hosts,
    unscanned subnets, untried escalations); they are offered by
    recommend_next_actions but excluded from path search, and they are the
    only actions allowed an empty effect set.
    """

    id: str
    kind: str
    task: TaskInvocation
    requires: frozenset = frozenset()
    requires_any: Optional[frozenset] = None
    effects: frozenset = frozenset()
    exfil_host: Optional[str] = None
    speculative: bool = False


@dataclass(frozen=True)
class AttackPath:
    """Action sequence with the state trajectory it induces (s0 ... sn)."""

    actions: tuple[AttackAction, ...]
    states: tuple[frozenset, ...]

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def action_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.actions)

    def to_payload(self) -> dict:
        return {
            "length": len(self.actions),
            "actions": [{"id": a.id, "task": a.task.to_payload()} for a in self.actions],
        }


@dataclass
class AttackGraph:
    """Immutable snapshot of states/actions built from one fact set."""

    env: Environment
    mode: str
    initial: frozenset
    actions: tuple[AttackAction, ...]
    known_hosts: frozenset = frozenset()
    _closure_cache: dict = field(default_factory=dict, repr=False)

    @property
    def path_actions(self) -> tuple[AttackAction, ...]:
        return tuple(a for a in self.actions if not a.speculative)

    def enabled(self, action: AttackAction, state: frozenset) -> bool:
        if not action.requires <= state:
            return False
        if action.requires_any is not None and not (action.requires_any & state):
            return False
        if action.exfil_host is not None and self._relay_chain(state, action.exfil_host) is None:
            return False
        return True

    def _relay_chain(self, state: frozenset, start: str) -> Optional[list[str]]:
        infected = {p[1] for p in state if p[0] == "accessed"}
        return hop_chain(self.env, infected, start, self.env.attacker_host)

    def apply(self, action: AttackAction, state: frozenset) -> frozenset:
        return state | action.effects

    def enabled_actions(self, state: Optional[frozenset] = None) -> list[AttackAction]:
        state = self.initial if state is None else state
        return [a for a in self.actions if self.enabled(a, state)]

    # -- targets -------------------------------------------------------------

    def target_predicate(self, target: Union[str, Goal]) -> Predicate:
        if isinstance(target, Goal):
            if target.kind == GOAL_EXFILTRATE:
                return exfiltrated(target.target)
            if target.kind == GOAL_ROOT:
                return accessed(target.target, ROOT)
            raise InputError(f"unknown goal kind {target.kind!r}")
        if target not in self.known_hosts:
            raise InputError(f"unknown target {target!r}")
        return accessed(target, USER)

    def satisfied(self, state: frozenset, target: Union[str, Goal]) -> bool:
        return self.target_predicate(target) in state

    # -- closure -------------------------------------------------------------

    def closure_layers(self, state: frozenset) -> dict:
        """Predicate -> first closure layer (0 = already in state).

        The layer index is an admissible lower bound on the number of
        sequential actions needed to make the predicate true.
        """
        cached = self._closure_cache.get(state)
        if cached is not None:
            return cached
        layers: dict = {p: 0 for p in state}
        current = set(state)
        pending = list(self.path_actions)
        depth = 0
        while True:
            depth += 1
            frozen = frozenset(current)
            fringe: set = set()
            still: list[AttackAction] = []
            for action in pending:
                new = action.effects - current
                if not new:
                    continue  # exhausted: monotone effects can never help again
                if self.enabled(action, frozen):
                    fringe |= new
                else:
                    still.append(action)
            if not fringe:
                break
            for p in fringe:
                layers.setdefault(p, depth)
            current |= fringe
            pending = still
        self._closure_cache[state] = layers
        return layers

    def distance_bound(self, state: frozenset, target_pred: Predicate) -> Optional[int]:
        """Lower bound on actions to reach target_pred, or None if unreachable."""
        return self.closure_layers(state).get(target_pred)


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------


def _lateral_sources(env: Environment, hosts: Iterable[str], target: str, protocol: str) -> frozenset:
    return frozenset(
        accessed(src, USER) for src in hosts if src != target and reachable(env, src, target, protocol)
    )


def _build_ground_truth(env: Environment) -> AttackGraph:
    attacker = env.attacker_host
    initial = frozenset({accessed(attacker, ROOT), accessed(attacker, USER)})
    host_ids = sorted(env.hosts_by_id)
    actions: list[AttackAction] = []

    # Scans that would discover at least one exploitable service vuln.
    for source in host_ids:
        for subnet in sorted(env.subnets_by_id):
            effects = {subnet_scanned(subnet, source)}
            for hid in sorted(env.subnet(subnet).hosts):
                if not reachable_any(env, source, hid):
                    continue
                for svc in env.host(hid).services:
                    if svc.vuln:
                        effects.add(vuln_known(hid, svc.vuln))
            if len(effects) > 1:
                actions.append(
                    AttackAction(
                        id=f"scan:{source}:{subnet}",
                        kind="scan",
                        task=scan_task(source, subnet),
                        requires=frozenset({accessed(source, USER)}),
                        effects=frozenset(effects),
                    )
                )

    for hid in host_ids:
        host = env.host(hid)
        if hid != attacker:
            for svc in sorted(host.services, key=lambda s: s.port):
                if not svc.vuln:
                    continue
                sources = _lateral_sources(env, host_ids, hid, svc.protocol)
                if sources:
                    actions.append(
                        AttackAction(
                            id=f"lateral_move_vuln:{hid}:{svc.vuln}",
                            kind="lateral_move_vuln",
                            task=lateral_task(hid, method=f"vuln:{svc.vuln}"),
                            requires=frozenset({vuln_known(hid, svc.vuln)}),
                            requires_any=sources,
                            effects=frozenset({accessed(hid, USER)}),
                        )
                    )
            if host.privesc_vulns:
                effects = {accessed(hid, ROOT)}
                effects |= {vuln_known(hid, v) for v in host.privesc_vulns}
                actions.append(
                    AttackAction(
                        id=f"escalate_privilege:{hid}",
                        kind="escalate_privilege",
                        task=escalate_task(hid),
                        requires=frozenset({accessed(hid, USER)}),
                        effects=frozenset(effects),
                    )
                )
            user_loot = _loot_effects(host, root_level=False)
            all_loot = _loot_effects(host, root_level=True)
            if user_loot:
                actions.append(
                    AttackAction(
                        id=f"find_info:{hid}:{USER}",
                        kind="find_info",
                        task=find_info_task(hid),
                        requires=frozenset({accessed(hid, USER)}),
                        effects=user_loot,
                    )
                )
            if all_loot and all_loot != user_loot:
                actions.append(
                    AttackAction(
                        id=f"find_info:{hid}:{ROOT}",
                        kind="find_info",
                        task=find_info_task(hid),
                        requires=frozenset({accessed(hid, ROOT)}),
                        effects=all_loot,
                    )
                )
        for cred in host.stored_credentials:
            for target in cred.targets:
                if target == attacker:
                    continue
                sources = _lateral_sources(env, host_ids, target, "ssh")
                if sources:
                    actions.append(
                        AttackAction(
                            id=f"lateral_move_cred:{target}:{cred.id}",
                            kind="lateral_move_cred",
                            task=lateral_task(target, method=f"cred:{cred.id}"),
                            requires=frozenset({cred_known(cred.id)}),
                            requires_any=sources,
                            effects=frozenset({accessed(target, USER)}),
                        )
                    )
        for asset in host.data_assets:
            priv = ROOT if asset.requires_root else USER
            actions.append(
                AttackAction(
                    id=f"exfiltrate:{asset.id}",
                    kind="exfiltrate",
                    task=exfiltrate_task(asset.id),
                    requires=frozenset({data_known(asset.id), accessed(hid, priv)}),
                    effects=frozenset({exfiltrated(asset.id)}),
                    exfil_host=hid,
                )
            )

    actions = [a for a in actions if not a.effects <= initial]
    actions.sort(key=lambda a: a.id)
    return AttackGraph(
        env=env,
        mode=GROUND_TRUTH,
        initial=initial,
        actions=tuple(actions),
        known_hosts=frozenset(host_ids),
    )


def _loot_effects(host, root_level: bool) -> frozenset:
    effects = set()
    for cred in host.stored_credentials:
        if root_level or not cred.requires_root_to_read:
            effects.add(cred_known(cred.id))
    for asset in host.data_assets:
        if root_level or not asset.requires_root:
            effects.add(data_known(asset.id))
    return frozenset(effects)


def _build_knowledge(env: Environment, kb: "KnowledgeBase") -> AttackGraph:
    attacker = env.attacker_host
    initial: set = set()
    for host, priv in kb.sessions:
        initial.add(accessed(host, priv))
        if priv == ROOT:
            initial.add(accessed(host, USER))
    for cred_id in kb.harvested_credentials:
        initial.add(cred_known(cred_id))
    for host, vulns in kb.known_vulns.items():
        for vuln_id in vulns:
            initial.add(vuln_known(host, vuln_id))
    for asset in kb.known_data:
        initial.add(data_known(asset))
    for source, subnet in kb.scanned_pairs:
        initial.add(subnet_scanned(subnet, source))
    for asset in kb.exfiltrated:
        initial.add(exfiltrated(asset))

    known_hosts = sorted(kb.known_hosts)
    actions: list[AttackAction] = []

    # Exploration: scans of not-yet-scanned (source, subnet) pairs.
    for source in known_hosts:
        for subnet in sorted(kb.known_subnets):
            if (source, subnet) in kb.scanned_pairs:
                continue
            actions.append(
                AttackAction(
                    id=f"scan:{source}:{subnet}",
                    kind="scan",
                    task=scan_task(source, subnet),
                    requires=frozenset({accessed(source, USER)}),
                    effects=frozenset({subnet_scanned(subnet, source)}),
                    speculative=True,
                )
            )

    # Lateral moves from known service vulns and harvested credentials.
    for target in known_hosts:
        if target == attacker or target not in env.hosts_by_id:
            continue
        seen_vulns: set[str] = set()
        for _, svc in sorted(kb.known_services.get(target, {}).items()):
            if not svc.vuln or svc.vuln in seen_vulns:
                continue
            seen_vulns.add(svc.vuln)
            sources = _lateral_sources(env, known_hosts, target, svc.protocol)
            if sources:
                actions.append(
                    AttackAction(
                        id=f"lateral_move_vuln:{target}:{svc.vuln}",
                        kind="lateral_move_vuln",
                        task=lateral_task(target, method=f"vuln:{svc.vuln}"),
                        requires=frozenset({vuln_known(target, svc.vuln)}),
                        requires_any=sources,
                        effects=frozenset({accessed(target, USER)}),
                    )
                )
    for cred_id, cred in sorted(kb.harvested_credentials.items()):
        for target in cred.targets:
            if target == attacker or target not in env.hosts_by_id:
                continue
            sources = _lateral_sources(env, known_hosts, target, "ssh")
            if sources:
                actions.append(
                    AttackAction(
                        id=f"lateral_move_cred:{target}:{cred_id}",
                        kind="lateral_move_cred",
                        task=lateral_task(target, method=f"cred:{cred_id}"),
                        requires=frozenset({cred_known(cred_id)}),
                        requires_any=sources,
                        effects=frozenset({accessed(target, USER)}),
                    )
                )

    # Privilege escalation. Justified when root is known to matter on the
    # host (a root_access goal or known root-gated data); otherwise an
    # exploration probe. Attempts are conclusive either way: local vulns
    # are static, so attempted hosts get no action at all.
    justified = {g.target for g in kb.goals if g.kind == GOAL_ROOT}
    justified |= {info.host for info in kb.known_data.values() if info.requires_root}
    justified |= {
        host for host, vulns in kb.known_vulns.items() if any(k == PRIVESC for k in vulns.values())
    }
    candidates = set(known_hosts) | {g.target for g in kb.goals if g.kind == GOAL_ROOT}
    for host in sorted(candidates):
        if host == attacker or host in kb.escalation_attempted:
            continue
        if (host, ROOT) in kb.sessions:
            continue
        actions.append(
            AttackAction(
                id=f"escalate_privilege:{host}",
                kind="escalate_privilege",
                task=escalate_task(host),
                requires=frozenset({accessed(host, USER)}),
                effects=frozenset({accessed(host, ROOT)}),
                speculative=host not in justified,
            )
        )

    # Exploration: find_information on hosts not yet searched at a privilege.
    for host in known_hosts:
        if host == attacker:
            continue
        for priv in (USER, ROOT):
            if (host, priv) in kb.searched:
                continue
            actions.append(
                AttackAction(
                    id=f"find_info:{host}:{priv}",
                    kind="find_info",
                    task=find_info_task(host),
                    requires=frozenset({accessed(host, priv)}),
                    effects=frozenset(),
                    speculative=True,
                )
            )

    for asset, info in sorted(kb.known_data.items()):
        priv = ROOT if info.requires_root else USER
        actions.append(
            AttackAction(
                id=f"exfiltrate:{asset}",
                kind="exfiltrate",
                task=exfiltrate_task(asset),
                requires=frozenset({data_known(asset), accessed(info.host, priv)}),
                effects=frozenset({exfiltrated(asset)}),
                exfil_host=info.host,
            )
        )

    frozen_initial = frozenset(initial)
    actions = [a for a in actions if a.speculative or not a.effects <= frozen_initial]
    actions.sort(key=lambda a: a.id)
    return AttackGraph(
        env=env,
        mode=KNOWLEDGE,
        initial=frozen_initial,
        actions=tuple(actions),
        known_hosts=frozenset(env.hosts_by_id),
    )


def build(env: Environment, mode: str = GROUND_TRUTH, kb: Optional["KnowledgeBase"] = None) -> AttackGraph:
    """Instantiate the attack graph from ground truth or the knowledge base.

    Knowledge mode restricts hosts, services, vulns, credentials and data to
    what the kb holds; the environment still supplies reachability rules and
    the goal list (the simulator's stand-in for the attacker's own network
    awareness).
    """
    if mode == GROUND_TRUTH:
        return _build_ground_truth(env)
    if mode == KNOWLEDGE:
        if kb is None:
            raise InputError("knowledge mode requires a knowledge base")
        return _build_knowledge(env, kb)
    raise InputError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Path search
# ---------------------------------------------------------------------------


def _replay(graph: AttackGraph, actions: Iterable[AttackAction], target_pred: Predicate) -> Optional[tuple]:
    """States induced by the sequence, or None if a precondition breaks."""
    state = graph.initial
    states = [state]
    for action in actions:
        if not graph.enabled(action, state):
            return None
        state = graph.apply(action, state)
        states.append(state)
    if target_pred not in state:
        return None
    return tuple(states)


def _is_minimal(graph: AttackGraph, actions: tuple[AttackAction, ...], target_pred: Predicate) -> bool:
    for i in range(len(actions)):
        if _replay(graph, actions[:i] + actions[i + 1:], target_pred) is not None:
            return False
    return True


def _relevant_actions(actions: Iterable[AttackAction], target_pred: Predicate) -> tuple[AttackAction, ...]:
    """Backward relevance: keep actions whose effects can feed the target.

    A minimal path only contains actions some later step consumes, so the
    needed-predicate set regresses from the target through preconditions.
    Once any exfiltration action is relevant, every accessed predicate is
    potentially needed (relay chains may route through any infected host).
    """
    actions = list(actions)
    needed: set = {target_pred}
    relevant: dict[str, AttackAction] = {}
    relay_mode = False
    changed = True
    while changed:
        changed = False
        for action in actions:
            if action.id in relevant:
                continue
            useful = bool(action.effects & needed)
            if not useful and relay_mode:
                useful = any(p[0] == "accessed" for p in action.effects)
            if not useful:
                continue
            relevant[action.id] = action
            needed |= action.requires
            if action.requires_any is not None:
                needed |= action.requires_any
            if action.exfil_host is not None and not relay_mode:
                relay_mode = True
            changed = True
    return tuple(sorted(relevant.values(), key=lambda a: a.id))


def get_possible_attack_paths(
    graph: AttackGraph, target: Union[str, Goal], max_depth: int = DEFAULT_DEPTH
) -> list[AttackPath]:
    """All minimal paths (no single action removable) to the target.

    Effects only ever add predicates, so enabled actions stay enabled and
    commute; every achievable action set is therefore reached by a single
    canonical ordering (actions explored in id order unless freshly
    enabled). The search enumerates candidate sets that way -- pruned by
    the closure-layer distance bound -- then expands each set into every
    valid ordering and keeps the orderings with no removable action.
    Sorted by length, then by the lexicographic action-id sequence.
    """
    target_pred = graph.target_predicate(target)
    if target_pred in graph.initial:
        return [AttackPath(actions=(), states=(graph.initial,))]
    if graph.distance_bound(graph.initial, target_pred) is None:
        return []

    searchable = _relevant_actions(graph.path_actions, target_pred)
    candidate_sets: set[frozenset[str]] = set()
    by_id = {a.id: a for a in searchable}

    def dfs(state: frozenset, prefix: tuple[AttackAction, ...], prev_state: Optional[frozenset]) -> None:
        remaining = max_depth - len(prefix)
        last_id = prefix[-1].id if prefix else ""
        for action in searchable:
            if not graph.enabled(action, state):
                continue
            # Canonical ordering: an action sorting before its predecessor
            # is only explored here if the predecessor just enabled it.
            if prefix and action.id < last_id and prev_state is not None and graph.enabled(action, prev_state):
                continue
            new_state = graph.apply(action, state)
            if new_state == state:
                continue
            if target_pred in new_state:
                candidate_sets.add(frozenset(a.id for a in prefix) | {action.id})
                continue
            bound = graph.distance_bound(new_state, target_pred)
            if bound is None or bound > remaining - 1:
                continue
            dfs(new_state, prefix + (action,), state)

    dfs(graph.initial, (), None)

    sequences: set[tuple[str, ...]] = set()

    def orderings(state: frozenset, unused: frozenset, seq: tuple[AttackAction, ...]) -> None:
        if target_pred in state:
            if not unused:
                sequences.add(tuple(a.id for a in seq))
            return
        for action_id in sorted(unused):
            action = by_id[action_id]
            if graph.enabled(action, state):
                orderings(graph.apply(action, state), unused - {action_id}, seq + (action,))

    for action_set in candidate_sets:
        orderings(graph.initial, frozenset(action_set), ())

    minimal = []
    for ids in sequences:
        seq = tuple(by_id[i] for i in ids)
        if _is_minimal(graph, seq, target_pred):
            minimal.append(seq)
    minimal.sort(key=lambda seq: (len(seq), tuple(a.id for a in seq)))
    return [AttackPath(actions=seq, states=_replay(graph, seq, target_pred)) for seq in minimal]


def shortest_witness(
    graph: AttackGraph, target: Union[str, Goal], max_depth: int = DEFAULT_DEPTH
) -> Optional[AttackPath]:
    """Lexicographically-first shortest path to the target, or None.

    Iterative deepening with the closure-layer lower bound for pruning;
    expansion order is sorted action id, so the result is deterministic.
    """
    target_pred = graph.target_predicate(target)
    if target_pred in graph.initial:
        return AttackPath(actions=(), states=(graph.initial,))
    start_bound = graph.distance_bound(graph.initial, target_pred)
    if start_bound is None:
        return None

    def dfs(state: frozenset, prefix: tuple[AttackAction, ...], limit: int) -> Optional[tuple[AttackAction, ...]]:
        for action in graph.path_actions:
            if not graph.enabled(action, state):
                continue
            new_state = graph.apply(action, state)
            if new_state == state:
                continue
            if target_pred in new_state:
                return prefix + (action,)
            if len(prefix) + 1 >= limit:
                continue
            bound = graph.distance_bound(new_state, target_pred)
            if bound is None or len(prefix) + 1 + bound > limit:
                continue
            result = dfs(new_state, prefix + (action,), limit)
            if result is not None:
                return result
        return None

    for limit in range(max(1, start_bound), max_depth + 1):
        seq = dfs(graph.initial, (), limit)
        if seq is not None:
            states = _replay(graph, seq, target_pred)
            return AttackPath(actions=seq, states=states)
    return None


def _extract_witness(graph: AttackGraph, target_pred: Predicate) -> Optional[tuple[AttackAction, ...]]:
    """Fast valid (not necessarily shortest) plan via layered extraction.

    In a monotone domain the closure layers double as a relaxed planning
    graph, and backward extraction always yields an executable plan.
    """
    layers = graph.closure_layers(graph.initial)
    if target_pred not in layers:
        return None
    closure_preds = frozenset(layers)
    accessed_hosts = {p[1] for p in closure_preds if p[0] == "accessed"}

    # Earliest supporting action per predicate (ties: lexicographic id).
    support: dict = {}
    state = set(graph.initial)
    pending = list(graph.path_actions)
    while True:
        frozen = frozenset(state)
        fringe: dict = {}
        for action in pending:
            if graph.enabled(action, frozen):
                for p in action.effects - state:
                    if p not in fringe or action.id < fringe[p].id:
                        fringe[p] = action
        if not fringe:
            break
        for p, action in fringe.items():
            support.setdefault(p, action)
        state |= set(fringe)

    chosen: dict[str, AttackAction] = {}
    needed = [target_pred]
    while needed:
        pred = needed.pop()
        if pred in graph.initial:
            continue
        action = support.get(pred)
        if action is None:
            return None
        if action.id in chosen:
            continue
        chosen[action.id] = action
        needed.extend(action.requires)
        if action.requires_any is not None:
            # Pick the earliest-layer satisfiable disjunct, ties lexicographic.
            options = sorted(
                (p for p in action.requires_any if p in layers), key=lambda p: (layers[p], p)
            )
            if not options:
                return None
            needed.append(options[0])
        if action.exfil_host is not None:
            chain = hop_chain(graph.env, accessed_hosts, action.exfil_host, graph.env.attacker_host)
            if chain is None:
                return None
            needed.extend(accessed(h, USER) for h in chain)

    # Schedule the chosen set greedily: always run the lexicographically
    # first action that is enabled now. The support closure makes some
    # remaining action enabled at every step; bail out to the exact search
    # if that ever fails to hold.
    seq: tuple[AttackAction, ...] = ()
    state = graph.initial
    remaining = dict(chosen)
    while remaining:
        pick = None
        for action_id in sorted(remaining):
            if graph.enabled(remaining[action_id], state):
                pick = remaining.pop(action_id)
                break
        if pick is None:
            return None
        seq = seq + (pick,)
        state = graph.apply(pick, state)
    if _replay(graph, seq, target_pred) is None:
        return None
    # Drop any single removable action until fixpoint: minimal witness.
    shrinking = True
    while shrinking:
        shrinking = False
        for i in range(len(seq)):
            candidate = seq[:i] + seq[i + 1:]
            if _replay(graph, candidate, target_pred) is not None:
                seq = candidate
                shrinking = True
                break
    return seq


def goal_reachable(
    env: Environment,
    goal: Goal,
    max_depth: int = DEFAULT_DEPTH,
    graph: Optional[AttackGraph] = None,
) -> tuple[bool, Optional[AttackPath]]:
    """Ground-truth reachability of one goal, with a witness path when true."""
    if graph is None:
        graph = build(env, GROUND_TRUTH)
    target_pred = graph.target_predicate(goal)
    if target_pred in graph.initial:
        return True, AttackPath(actions=(), states=(graph.initial,))
    if graph.distance_bound(graph.initial, target_pred) is None:
        return False, None
    seq = _extract_witness(graph, target_pred)
    if seq is not None and len(seq) <= max_depth:
        states = _replay(graph, seq, target_pred)
        return True, AttackPath(actions=seq, states=states)
    # Extraction only over-lengthens or (defensively) fails; the bounded
    # exact search settles it either way.
    witness = shortest_witness(graph, goal, max_depth)
    if witness is None:
        return False, None
    return True, witness


# ---------------------------------------------------------------------------
# Recommendations
# ---------------------------------------------------------------------------


def recommend_next_actions(
    graph: AttackGraph, goals: Iterable[Goal], max_depth: int = DEFAULT_DEPTH
) -> list[AttackAction]:
    """Ranked next actions toward the unsatisfied goals.

    Tier 1: the first action of each unsatisfied goal's shortest known path,
    ranked by (path length, goal id, action id) and deduplicated. When no
    complete path is known yet, tier 2 falls back to enabled actions that
    still gain something new (unscanned scans, unsearched find_information,
    productive lateral moves), ranked by action id. Speculative privilege
    escalation probes come last, only once nothing else remains: trying
    root everywhere is how root-gated loot is found, but it should never
    preempt cheaper discovery. Empty iff every goal is satisfied or nothing
    remains to try.
    """
    goals = sorted(goals, key=lambda g: g.id)
    unsatisfied = [g for g in goals if graph.target_predicate(g) not in graph.initial]
    if not unsatisfied:
        return []

    ranked: list[tuple[int, str, str, AttackAction]] = []
    for goal in unsatisfied:
        witness = shortest_witness(graph, goal, max_depth)
        if witness is None or not witness.actions:
            continue
        first = witness.actions[0]
        ranked.append((len(witness.actions), goal.id, first.id, first))
    if ranked:
        ranked.sort(key=lambda item: item[:3])
        out: list[AttackAction] = []
        seen: set[str] = set()
        for _, _, action_id, action in ranked:
            if action_id not in seen:
                seen.add(action_id)
                out.append(action)
        return out

    fallback: list[AttackAction] = []
    probes: list[AttackAction] = []
    for action in graph.enabled_actions():
        if not action.speculative and action.effects <= graph.initial:
            continue
        if action.speculative and action.kind == "escalate_privilege":
            probes.append(action)
        else:
            fallback.append(action)
    return fallback if fallback else probes
