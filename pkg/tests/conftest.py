from __future__ import annotations

import pytest

from redsim.knowledge import KnowledgeBase
from redsim.netmodel import (
    Credential,
    DataAsset,
    Environment,
    Goal,
    GOAL_EXFILTRATE,
    GOAL_ROOT,
    Host,
    ReachabilityRule,
    Service,
    Subnet,
)
from redsim.scenarios import load_bundled
from redsim.taskengine import ImplantRegistry, TaskEngine


@pytest.fixture(scope="session")
def eq_mini() -> Environment:
    return load_bundled("eq-mini")


@pytest.fixture(scope="session")
def chain4() -> Environment:
    return load_bundled("chain-4")


def make_stage(env: Environment, tasks) -> tuple[KnowledgeBase, TaskEngine]:
    """Fresh kb/engine advanced through the given invocations."""
    kb = KnowledgeBase.bootstrap(env)
    engine = TaskEngine(env, ImplantRegistry(env.attacker_host))
    clock = 0
    for invocation in tasks:
        result = engine.execute(invocation, kb)
        clock += result.duration
        kb.record(result, clock)
    return kb, engine


@pytest.fixture()
def eq_stage():
    """Stage builder bound to eq-mini."""

    def stage(env, tasks):
        return make_stage(env, tasks)

    return stage


@pytest.fixture(scope="session")
def chain6_mini() -> Environment:
    """Chain variant where data is root-gated and hosts carry privesc vulns."""
    ssh = Service(protocol="ssh", port=22, banner="OpenSSH 7.4")
    return Environment(
        name="chain6-mini",
        attacker_host="attacker",
        subnets=(
            Subnet(id="s0", external=True, hosts=("attacker",)),
            Subnet(id="s1", external=False, hosts=("m1",)),
            Subnet(id="s2", external=False, hosts=("m2",)),
        ),
        hosts=(
            Host(id="attacker", subnet="s0", is_attacker=True),
            Host(
                id="m1",
                subnet="s1",
                services=(Service(protocol="http", port=80, vuln="CVE-2017-5638", banner="Struts2"), ssh),
                stored_credentials=(Credential(id="cred-m2", stored_on="m1", targets=("m2",)),),
                data_assets=(DataAsset(id="data1", host="m1", requires_root=True),),
                privesc_vulns=("CVE-2021-3156",),
            ),
            Host(
                id="m2",
                subnet="s2",
                services=(ssh,),
                data_assets=(DataAsset(id="data2", host="m2", requires_root=True),),
                privesc_vulns=("CVE-2099-2001",),
            ),
        ),
        reachability=(
            ReachabilityRule(src_subnet="s0", dst_subnet="s1", protocol="*"),
            ReachabilityRule(src_subnet="s1", dst_subnet="s0", protocol="*"),
            ReachabilityRule(src_subnet="s1", dst_subnet="s2", protocol="*"),
            ReachabilityRule(src_subnet="s2", dst_subnet="s1", protocol="*"),
        ),
        goals=(
            Goal(kind=GOAL_EXFILTRATE, target="data1"),
            Goal(kind=GOAL_EXFILTRATE, target="data2"),
        ),
    )
