"""Generator determinism, conformance, enumeration, and the differential run."""

import random

import pytest

from cedar_engine.ast import EntityRef, VBool, VEntity
from cedar_engine.entities import Request
from cedar_engine.evaluator import EvalError, evaluate
from cedar_engine.parser import parse_expr, parse_schema
from cedar_engine.testkit import (
    BoundTooLarge,
    GenConfig,
    bfs_ancestors,
    enumerate_conforming,
    enumerate_stores,
    gen_conforming,
    gen_expr,
    gen_policies,
    gen_request,
    gen_store,
    reference_evaluate,
)

from conftest import FIG_SCHEMA
from test_symcc import TEAM_SCHEMA


def test_generators_deterministic():
    cfg = GenConfig(seed=77)
    assert gen_store(cfg).entries == gen_store(cfg).entries
    s = gen_store(cfg)
    assert gen_request(cfg, s) == gen_request(cfg, s)
    assert gen_policies(cfg) == gen_policies(cfg)


def test_thousand_stores_respect_dag_invariants():
    for seed in range(1000):
        store = gen_store(GenConfig(seed))
        for r in store.refs():
            ancestors = store.ancestors_of(r)
            assert r not in ancestors
            for b in ancestors:
                assert store.ancestors_of(b) <= ancestors | {b}


def test_conforming_store_attribute_types(fig_schema):
    for seed in range(200):
        store, request = gen_conforming(GenConfig(seed), fig_schema)
        for ref in store.refs():
            if ref.entity_type != "List":
                continue
            data = store.get(ref)
            for attr, want in (("owner", "User"), ("readers", "Team"), ("editors", "Team")):
                got = data.attrs.get(attr)
                assert isinstance(got, VEntity) and got.ref.entity_type == want
                assert got.ref in store  # referenced entities are defined
        # Request matches an environment with all entities present.
        assert request.principal in store and request.resource in store


def test_conforming_parents_respect_allowed_types(fig_schema):
    for seed in range(100):
        store, _ = gen_conforming(GenConfig(seed), fig_schema)
        for ref in store.refs():
            allowed = fig_schema.entity(ref.entity_type).parents
            for anc in store.ancestors_of(ref):
                assert anc.entity_type in allowed


def test_differential_agreement_100k():
    mismatches = 0
    for seed in range(25000):
        cfg = GenConfig(seed)
        store = gen_store(cfg)
        request = gen_request(cfg, store)
        rng = random.Random(seed ^ 0xD1FF)
        refs = sorted(store.refs(), key=str) + [EntityRef("E1", "absent")]
        for k in range(4):
            expr = gen_expr(rng, rng.randint(0, 3), refs)
            try:
                got = ("ok", evaluate(expr, store, request))
            except EvalError as err:
                got = ("err", err.kind.value)
            if got != reference_evaluate(expr, store, request):
                mismatches += 1
    assert mismatches == 0


def test_enumeration_count_matches_combinatorics(fig_schema):
    # Hand count at one id per type: Application fixed; User chooses any
    # subset of {team, app} (4); Team any subset of {app} (2); List any subset
    # of {app} (2) with its three entity attributes forced: 16 stores, and
    # each store carries one CreateList and one GetList request: 32 pairs.
    stores = list(enumerate_stores(fig_schema, 1))
    assert len(stores) == 16
    pairs = list(enumerate_conforming(fig_schema, 1))
    assert len(pairs) == 32


def test_enumeration_bound_zero_empty(fig_schema):
    assert list(enumerate_conforming(fig_schema, 0)) == []


def test_enumeration_guard(fig_schema):
    with pytest.raises(BoundTooLarge):
        list(enumerate_stores(fig_schema, 3, ceiling=1000))


def test_cycle_expression_false_on_every_enumerated_store():
    schema = parse_schema(TEAM_SCHEMA)
    expr = parse_expr('Team::"A" in Team::"B" && Team::"B" in Team::"A"')
    dummy = Request(EntityRef("User", "u"), EntityRef("Action", "a"), EntityRef("T", "t"))
    count = 0
    for store in enumerate_stores(schema, 2, ids={"Team": ["A", "B"]}, types=["Team"]):
        count += 1
        assert evaluate(expr, store, dummy) == VBool(False)
    assert count == 3  # no edge, A below B, B below A


def test_bfs_oracle_matches_direct_ancestors():
    for seed in range(150):
        store = gen_store(GenConfig(seed))
        for r in store.refs():
            assert bfs_ancestors(store, r) == store.ancestors_of(r)
