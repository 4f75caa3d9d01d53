"""Bundled scenarios shipped as package data.

eq-mini        Equifax-shaped: two external web servers behind an all-allow
               external subnet, one holding plaintext credentials to three
               firewalled database hosts.
chain-4        Four subnet layers; each chain host stores credentials to the
               next and holds critical data.
star-mini      One external subnet; every host carries a remote code
               execution vuln and critical data.
dumbbell-mini  Two webservers, each with credentials to a unique database in
               a second subnet.
equifax-48     Full-scale Equifax replica: 48 database hosts reached through
               credentials found on one of two vulnerable web servers.
"""

from __future__ import annotations

import json
from importlib import resources

from .netmodel import Environment, load_scenario

BUNDLED = ("eq-mini", "chain-4", "star-mini", "dumbbell-mini", "equifax-48")


def _read(filename: str) -> str:
    ref = resources.files(__package__).joinpath("scenarios", filename)
    return ref.read_text(encoding="utf-8")


def load_bundled(name: str) -> Environment:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; have {', '.join(BUNDLED)}")
    return load_scenario(_read(f"{name}.json"))


def bundled_reference(name: str) -> dict:
    """The hand-built reference solution document for a bundled scenario."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; have {', '.join(BUNDLED)}")
    return json.loads(_read(f"{name}.ref.json"))


def scenario_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; have {', '.join(BUNDLED)}")
    return _read(f"{name}.json")
