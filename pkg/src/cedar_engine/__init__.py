"""Authorization policy engine.

A policy language with hierarchical entities, schema-based validation, sound
policy slicing, and a symbolic compiler to SMT-LIB for policy-set equivalence
analysis with concrete counterexamples.

The pieces compose like this::

    from cedar_engine import (
        parse_policies, parse_schema, load_entities, load_request,
        PolicySet, authorize, validate, analyze_equivalence,
    )

    policies = PolicySet.from_policies(parse_policies(open("app.cedar").read()))
    store = load_entities(open("entities.json").read())
    request = load_request(open("request.json").read())
    decision = authorize(policies, store, request)
"""

from .ast import EntityRef, Policy, link, toexp
from .authorizer import Decision, PolicySet, Verdict, authorize, build_index, slice_policies
from .entities import EntityStore, Request, load_entities, load_request, merge_action_hierarchy
from .evaluator import EvalError, evaluate, evaluate_policy
from .parser import ParseError, parse_expr, parse_policies, parse_schema, render_policy
from .smt_backend import SolverConfig, print_script, run_solver
from .symcc import analyze_equivalence, compile_expr, encode_types, wf_constraints
from .validator import RequestEnv, Schema, environments, typecheck, validate

__version__ = "0.1.0"

__all__ = [
    "Decision",
    "EntityRef",
    "EntityStore",
    "EvalError",
    "ParseError",
    "Policy",
    "PolicySet",
    "Request",
    "RequestEnv",
    "Schema",
    "SolverConfig",
    "Verdict",
    "analyze_equivalence",
    "authorize",
    "build_index",
    "compile_expr",
    "encode_types",
    "environments",
    "evaluate",
    "evaluate_policy",
    "link",
    "load_entities",
    "load_request",
    "merge_action_hierarchy",
    "parse_expr",
    "parse_policies",
    "parse_schema",
    "print_script",
    "render_policy",
    "run_solver",
    "slice_policies",
    "toexp",
    "typecheck",
    "validate",
    "wf_constraints",
]
