"""keyorder: key-dependency partial orders for protocol verification.

A toolkit around multiset-rewriting protocol models: extract the partial
order of cryptographic keys, rank prover goals along its linear
extension, generate synthetic key-chain benchmarks, and validate models
with a bounded Dolev-Yao executor.
"""

__version__ = "0.1.0"

from .deps import (
    CyclicDependencyError,
    KeyClassDag,
    build_class_dag,
    collect_key_nodes,
    emit_dot,
    extract,
    extract_edges,
    linearize,
    transitive_reduction,
    unify_equivalent_keys,
)
from .executor import (
    ExecConfig,
    SearchBounds,
    SearchProperty,
    StuckScenario,
    check_agreement,
    check_replay_restriction,
    check_secrecy,
    parse_scenario,
    run_scenario,
    search_attack,
)
from .knowledge import KnowledgeSet, closure
from .model import Model, ModelError, SpkSyntaxError, parse_model, parse_term, serialize, validate
from .oracle import GoalLine, OracleConfig, classify_goal, rank_goals, serve
from .synth import ChainSpec, generate_chain_model
from .terms import Role, Signature, key_positions, normalize, substitute, unify

__all__ = [
    "ChainSpec",
    "CyclicDependencyError",
    "ExecConfig",
    "GoalLine",
    "KeyClassDag",
    "KnowledgeSet",
    "Model",
    "ModelError",
    "OracleConfig",
    "Role",
    "SearchBounds",
    "SearchProperty",
    "Signature",
    "SpkSyntaxError",
    "StuckScenario",
    "build_class_dag",
    "check_agreement",
    "check_replay_restriction",
    "check_secrecy",
    "classify_goal",
    "closure",
    "collect_key_nodes",
    "emit_dot",
    "extract",
    "extract_edges",
    "generate_chain_model",
    "key_positions",
    "linearize",
    "normalize",
    "parse_model",
    "parse_scenario",
    "parse_term",
    "rank_goals",
    "run_scenario",
    "search_attack",
    "serialize",
    "serve",
    "substitute",
    "transitive_reduction",
    "unify",
    "unify_equivalent_keys",
    "validate",
]
