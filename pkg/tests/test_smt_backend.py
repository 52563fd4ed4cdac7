"""Script printing, the solver driver, and model parsing."""

import sys
import time

import pytest

from cedar_engine.parser import parse_expr, parse_schema
from cedar_engine.smt_backend import (
    Model,
    ModelEvaluator,
    SolverConfig,
    SolverUnavailable,
    parse_sexprs,
    print_script,
    run_solver,
    selector_table,
)
from cedar_engine.symcc import compile_expr, encode_types, is_true_term, wf_constraints
from cedar_engine.terms import InternalSortError, TConst, TEq, BOOL_S, SData
from cedar_engine.validator import environments

from test_symcc import TEAM_SCHEMA, get_env


def team_setup(with_wf: bool):
    schema = parse_schema(TEAM_SCHEMA)
    env = get_env(schema, "GetList")
    senv = encode_types(schema, [env])
    expr = parse_expr('Team::"A" in Team::"B" && Team::"B" in Team::"A"')
    fp = []
    compiled = compile_expr(expr, env, schema, senv, footprint=fp)
    asserts = []
    if with_wf:
        asserts += wf_constraints(expr, env, schema, senv)
    asserts.append(is_true_term(compiled))
    return senv, asserts


def test_print_script_declarations(fig_schema):
    env = get_env(fig_schema, "GetList")
    senv = encode_types(fig_schema, [env])
    script = print_script(senv, [])
    assert script.startswith("(set-logic ALL)\n(set-option :produce-models true)\n")
    assert "(declare-fun listAttrs (List) ListRecord)" in script
    assert script.rstrip().endswith("(check-sat)")
    assert "(assert" not in script  # zero assertions: declarations only


def test_print_script_worked_example_assertions():
    senv, asserts = team_setup(with_wf=True)
    script = print_script(senv, asserts[:-1])
    assert '(assert (not (set.member (Team "A") (teamInTeam (Team "A")))))' in script
    assert '(assert (not (set.member (Team "B") (teamInTeam (Team "B")))))' in script
    assert (
        '(assert (=> (set.member (Team "B") (teamInTeam (Team "A"))) '
        '(set.subset (teamInTeam (Team "B")) (teamInTeam (Team "A")))))'
    ) in script


def test_print_script_byte_stable():
    a = print_script(*_roundtrip_args())
    b = print_script(*_roundtrip_args())
    assert a == b


def test_print_script_stable_across_processes():
    import subprocess

    helper = (
        "from cedar_engine.parser import parse_schema, parse_expr\n"
        "from cedar_engine.symcc import encode_types, compile_expr, wf_constraints, is_true_term\n"
        "from cedar_engine.smt_backend import print_script\n"
        "from cedar_engine.validator import environments\n"
        f"schema = parse_schema('''{TEAM_SCHEMA}''')\n"
        "env = environments(schema)[0]\n"
        "senv = encode_types(schema, [env])\n"
        "expr = parse_expr('Team::\"A\" in Team::\"B\" && Team::\"B\" in Team::\"A\"')\n"
        "asserts = wf_constraints(expr, env, schema, senv)\n"
        "asserts.append(is_true_term(compile_expr(expr, env, schema, senv)))\n"
        "import sys; sys.stdout.write(print_script(senv, asserts))\n"
    )
    runs = {
        subprocess.run(
            [sys.executable, "-c", helper], capture_output=True, text=True, check=True
        ).stdout
        for _ in range(2)
    }
    assert len(runs) == 1
    assert runs.pop() == print_script(*_roundtrip_args())


def test_emitted_scripts_are_quantifier_free():
    senv, asserts = team_setup(with_wf=True)
    script = print_script(senv, asserts)
    assert "forall" not in script and "exists" not in script


def _roundtrip_args():
    senv, asserts = team_setup(with_wf=True)
    return senv, asserts


def test_print_script_rejects_ill_sorted():
    senv, _ = team_setup(with_wf=False)
    bad = TEq(TConst("principal", SData("User")), TConst("resource", SData("Application")))
    with pytest.raises(InternalSortError):
        print_script(senv, [bad])
    with pytest.raises(InternalSortError):
        print_script(senv, [TConst("mystery", BOOL_S)])


def test_run_solver_contradiction():
    script = "(set-logic ALL)\n(assert false)\n(check-sat)\n"
    outcome = run_solver(SolverConfig.bundled(), script)
    assert outcome.kind == "unsat"


def test_run_solver_trivial_sat_with_model():
    script = (
        "(set-logic ALL)\n(set-option :produce-models true)\n"
        "(declare-const p Bool)\n(assert p)\n(check-sat)\n"
    )
    outcome = run_solver(SolverConfig.bundled(), script)
    assert outcome.kind == "sat"
    ev = ModelEvaluator(outcome.model)
    assert ev.eval_sexpr("p") is True


def test_cycle_claim_needs_grounding():
    # With well-formedness assertions the cyclic membership is refuted...
    senv, asserts = team_setup(with_wf=True)
    assert run_solver(SolverConfig.bundled(), print_script(senv, asserts)).kind == "unsat"
    # ...without them the solver produces a model with a two-team cycle.
    senv, asserts = team_setup(with_wf=False)
    outcome = run_solver(SolverConfig.bundled(), print_script(senv, asserts))
    assert outcome.kind == "sat"
    ev = ModelEvaluator(outcome.model, selector_table(senv))
    assert ev.eval_sexpr('(set.member (Team "B") (teamInTeam (Team "A")))') is True
    assert ev.eval_sexpr('(set.member (Team "A") (teamInTeam (Team "B")))') is True


def test_solver_unavailable():
    with pytest.raises(SolverUnavailable):
        run_solver(SolverConfig(("/nonexistent/solver-binary",)), "(check-sat)\n")


def test_solver_timeout_reaps_child():
    config = SolverConfig((sys.executable, "-c", "import time; time.sleep(30)"), timeout_ms=300)
    start = time.time()
    outcome = run_solver(config, "(check-sat)\n")
    assert outcome.kind == "timeout"
    assert time.time() - start < 5


def test_model_parsing_shapes():
    text = """
    (
    (define-fun principal () User (User "aaron"))
    (define-fun userInTeam ((x!0 User)) (Set Team)
      (ite (= x!0 (User "aaron"))
           (set.union (set.singleton (Team "interns")) (set.singleton (Team "1")))
           (as set.empty (Set Team))))
    (define-fun flag () Bool true)
    (define-fun opt () (Option Bool) (as none (Option Bool)))
    )
    """
    model = Model.parse(text)
    ev = ModelEvaluator(model)
    assert ev.eval_sexpr("principal") == ("dt", "User", (("string", "aaron"),))
    got = ev.apply("userInTeam", [("dt", "User", (("string", "aaron"),))])
    assert got == (
        "set",
        frozenset(
            {("dt", "Team", (("string", "interns"),)), ("dt", "Team", (("string", "1"),))}
        ),
    )
    assert ev.apply("userInTeam", [("dt", "User", (("string", "bob"),))]) == ("set", frozenset())
    assert ev.eval_sexpr("opt") == ("none",)


def test_sexpr_tokenizer_strings_and_comments():
    got = parse_sexprs('(a "x""y" 12 ; comment\n (b))')
    assert got == [["a", ("string", 'x"y'), 12, ["b"]]]


def test_awkward_entity_ids_round_trip_through_solver():
    # Quotes inside entity ids must survive printing, solving, and model
    # parsing unchanged.
    script = (
        "(set-logic ALL)\n(set-option :produce-models true)\n"
        "(declare-datatype T ((T (eid String))))\n"
        "(declare-const x T)\n"
        '(assert (= x (T "a""b c")))\n'
        "(check-sat)\n"
    )
    outcome = run_solver(SolverConfig.bundled(), script)
    assert outcome.kind == "sat"
    ev = ModelEvaluator(outcome.model)
    assert ev.eval_sexpr("x") == ("dt", "T", (("string", 'a"b c'),))

    from cedar_engine.ast import EntityRef, VEntity
    from cedar_engine.terms import TSome
    from cedar_engine.symcc import encode_types, compile_expr
    from cedar_engine.parser import parse_schema
    from cedar_engine.validator import environments
    from cedar_engine.ast import EBinop, ELit, EVar

    schema = parse_schema(
        "entity T;\naction a appliesTo { principal: [T], resource: [T] };"
    )
    env = environments(schema)[0]
    senv = encode_types(schema, [env])
    weird = EntityRef("T", 'a"b c')
    expr = EBinop("==", EVar("principal"), ELit(VEntity(weird)))
    compiled = compile_expr(expr, env, schema, senv)
    script = print_script(senv, [__import__("cedar_engine.symcc", fromlist=["is_true_term"]).is_true_term(compiled)])
    outcome = run_solver(SolverConfig.bundled(), script)
    assert outcome.kind == "sat"
    ev = ModelEvaluator(outcome.model)
    assert ev.eval_sexpr("principal") == ("dt", "T", (("string", 'a"b c'),))


def test_solver_config_precedence(monkeypatch):
    monkeypatch.setenv("SOLVER_BIN", "/opt/solvers/cvc5")
    config = SolverConfig.default()
    assert config.argv[0] == "/opt/solvers/cvc5"
    assert "--lang" in config.argv
    monkeypatch.delenv("SOLVER_BIN")
    config = SolverConfig.default()
    assert config.argv[0] in (sys.executable,) or "cvc5" in config.argv[0]
