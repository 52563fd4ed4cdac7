"""Indexing, slicing, and the authorization combine rules."""

import random

from cedar_engine.ast import EntityRef, Effect, vrecord
from cedar_engine.authorizer import (
    ANY_KEY,
    PolicySet,
    Verdict,
    authorize,
    build_index,
    slice_policies,
)
from cedar_engine.entities import EMPTY_STORE, Request, build_store
from cedar_engine.evaluator import PolicyEvalStatus, evaluate_policy
from cedar_engine.parser import parse_policies
from cedar_engine.testkit import GenConfig, gen_policies, gen_request, gen_store, gen_template_links


def pset(src: str) -> PolicySet:
    return PolicySet.from_policies(parse_policies(src))


def test_index_keys(tinytodo_policies):
    ps = PolicySet.from_policies(tinytodo_policies)
    index = build_index(ps)
    buckets = {pid: key for key, pids in index.buckets.items() for pid in pids}
    assert buckets["policy0"] == (ANY_KEY, EntityRef("Application", "TinyTodo"))
    assert buckets["policy1"] == (ANY_KEY, ANY_KEY)
    assert buckets["policy2"] == (EntityRef("Team", "admin"), EntityRef("Application", "TinyTodo"))
    assert buckets["policy4"] == (EntityRef("Team", "interns"), EntityRef("Application", "TinyTodo"))


def test_index_unconstrained_policy():
    ps = pset("permit(principal, action, resource);")
    index = build_index(ps)
    assert index.buckets == {(ANY_KEY, ANY_KEY): frozenset({"policy0"})}


def test_every_policy_in_exactly_one_bucket(tinytodo_policies):
    index = build_index(PolicySet.from_policies(tinytodo_policies))
    seen = [pid for pids in index.buckets.values() for pid in pids]
    assert sorted(seen) == sorted(p.id for p in tinytodo_policies)


def test_slice_empty_index():
    index = build_index(PolicySet.from_policies([]))
    req = Request(EntityRef("U", "u"), EntityRef("Action", "a"), EntityRef("R", "r"), vrecord({}))
    assert slice_policies(index, EMPTY_STORE, req) == frozenset()


def test_intern_keyed_policy_sliced_by_ancestry():
    ps = pset('forbid(principal in Team::"interns", action, resource);')
    index = build_index(ps)
    store = build_store(
        [
            (EntityRef("User", "aaron"), vrecord({}), [EntityRef("Team", "interns")]),
            (EntityRef("User", "andrew"), vrecord({}), []),
            (EntityRef("Team", "interns"), vrecord({}), []),
        ]
    )
    resource = EntityRef("R", "r")
    req_a = Request(EntityRef("User", "aaron"), EntityRef("Action", "x"), resource, vrecord({}))
    req_b = Request(EntityRef("User", "andrew"), EntityRef("Action", "x"), resource, vrecord({}))
    assert slice_policies(index, store, req_a) == frozenset({"policy0"})
    assert slice_policies(index, store, req_b) == frozenset()


def test_slice_is_superset_of_satisfied(tinytodo_policies, tinytodo_store):
    ps = PolicySet.from_policies(tinytodo_policies)
    index = build_index(ps)
    request = Request(
        EntityRef("User", "aaron"),
        EntityRef("Action", "GetList"),
        EntityRef("List", "0"),
        vrecord({}),
    )
    selected = slice_policies(index, tinytodo_store, request)
    for p in ps.closed_policies:
        out = evaluate_policy(p, tinytodo_store, request)
        if out.status is PolicyEvalStatus.SATISFIED:
            assert p.id in selected


def test_deny_overrides_and_reports_forbid(tinytodo_policies, tinytodo_store):
    ps = PolicySet.from_policies(tinytodo_policies)
    request = Request(
        EntityRef("User", "aaron"),
        EntityRef("Action", "CreateList"),
        EntityRef("Application", "TinyTodo"),
        vrecord({}),
    )
    decision = authorize(ps, tinytodo_store, request)
    assert decision.verdict is Verdict.DENY
    assert decision.determining == frozenset({"policy4"})


def test_default_deny_on_empty_set():
    req = Request(EntityRef("U", "u"), EntityRef("Action", "a"), EntityRef("R", "r"), vrecord({}))
    decision = authorize(PolicySet.from_policies([]), EMPTY_STORE, req)
    assert decision.verdict is Verdict.DENY
    assert decision.determining == frozenset()


def test_allow_via_create_policy(tinytodo_policies, tinytodo_store):
    ps = PolicySet.from_policies(tinytodo_policies)
    request = Request(
        EntityRef("User", "andrew"),
        EntityRef("Action", "CreateList"),
        EntityRef("Application", "TinyTodo"),
        vrecord({}),
    )
    decision = authorize(ps, tinytodo_store, request)
    assert decision.verdict is Verdict.ALLOW
    assert decision.determining == frozenset({"policy0"})


def test_errored_policies_reported_not_fatal(tinytodo_store):
    ps = pset(
        """
        permit(principal, action, resource) when { resource.nope == 1 };
        permit(principal, action, resource);
        """
    )
    request = Request(
        EntityRef("User", "aaron"),
        EntityRef("Action", "GetList"),
        EntityRef("List", "0"),
        vrecord({}),
    )
    decision = authorize(ps, tinytodo_store, request)
    assert decision.verdict is Verdict.ALLOW
    assert decision.determining == frozenset({"policy1"})
    assert [pid for pid, _ in decision.errors] == ["policy0"]


def _combined_properties(ps, store, request):
    outcomes = {p.id: evaluate_policy(p, store, request) for p in ps.closed_policies}
    sat_permits = {
        pid
        for pid, out in outcomes.items()
        if out.status is PolicyEvalStatus.SATISFIED and ps.by_id(pid).effect is Effect.PERMIT
    }
    sat_forbids = {
        pid
        for pid, out in outcomes.items()
        if out.status is PolicyEvalStatus.SATISFIED and ps.by_id(pid).effect is Effect.FORBID
    }
    decision = authorize(ps, store, request)
    if sat_forbids:
        assert decision.verdict is Verdict.DENY  # forbid trumps permit
    if not sat_permits:
        assert decision.verdict is Verdict.DENY  # default deny
    if decision.verdict is Verdict.ALLOW:
        assert sat_permits and decision.determining == frozenset(sat_permits)
    return decision


def test_semantics_properties_sample():
    for seed in range(400):
        cfg = GenConfig(seed)
        ps = PolicySet.from_policies(gen_policies(cfg))
        store = gen_store(cfg)
        request = gen_request(cfg, store)
        decision = _combined_properties(ps, store, request)
        # Order independence.
        rng = random.Random(seed)
        shuffled = list(ps.closed_policies)
        rng.shuffle(shuffled)
        other = authorize(PolicySet(tuple(shuffled), (), ()), store, request)
        assert other.verdict == decision.verdict
        assert other.determining == decision.determining
        # Sound slicing.
        unsliced = authorize(ps, store, request, use_slicing=False)
        assert unsliced.verdict == decision.verdict
        assert unsliced.determining == decision.determining


def test_sound_slicing_with_template_links():
    for seed in range(150):
        cfg = GenConfig(seed)
        store = gen_store(cfg)
        template, links = gen_template_links(cfg, store, probability=0.08)
        ps = PolicySet.from_policies(gen_policies(cfg) + [template], links=links)
        request = gen_request(cfg, store)
        sliced = authorize(ps, store, request, use_slicing=True)
        unsliced = authorize(ps, store, request, use_slicing=False)
        assert sliced.verdict == unsliced.verdict
        assert sliced.determining == unsliced.determining
