"""redsim: deterministic multi-host red-team exercise simulator."""

from .netmodel import (
    Credential,
    DataAsset,
    Environment,
    Goal,
    GOAL_EXFILTRATE,
    GOAL_ROOT,
    Host,
    ReachabilityRule,
    ScenarioError,
    Service,
    Subnet,
    Vulnerability,
    load_scenario,
    reachable,
    serialize_scenario,
    validate,
)
from .generator import GenParams, format_name, generate, plant_attack_paths, verify
from .knowledge import KnowledgeBase, Observation, Query, render_observation
from .attackgraph import AttackGraph, build, get_possible_attack_paths, goal_reachable, recommend_next_actions
from .taskengine import EngineConfig, ImplantRegistry, TaskEngine
from .planner import OnboardingDoc, PlannerStep, RandomPlanner, ReferencePlanner, build_onboarding
from .orchestrator import (
    ExerciseConfig,
    MetricsReport,
    ReferenceSolution,
    TrialRecord,
    reliability,
    run_exercise,
    run_trial,
    success,
    tag_tasks,
    total_acquisition,
)
from .scenarios import BUNDLED, load_bundled

__version__ = "0.1.0"
