import os

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")


def pytest_addoption(parser):
    parser.addoption(
        "--gen-seed",
        type=int,
        default=0,
        help="offset added to every generator seed (replay a different shard)",
    )


@pytest.fixture(scope="session")
def gen_seed(request) -> int:
    return request.config.getoption("--gen-seed")


def fixture_path(*parts) -> str:
    return os.path.join(FIXTURES, *parts)


def read_fixture(*parts) -> str:
    with open(fixture_path(*parts), "r", encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def tinytodo_schema():
    from cedar_engine.parser import parse_schema

    return parse_schema(read_fixture("tinytodo", "tinytodo.cedarschema"))


@pytest.fixture(scope="session")
def tinytodo_policies():
    from cedar_engine.parser import parse_policies

    return parse_policies(read_fixture("tinytodo", "policies.cedar"))


@pytest.fixture(scope="session")
def tinytodo_store():
    from cedar_engine.entities import load_entities

    return load_entities(read_fixture("tinytodo", "entities.json"))


# The compact four-entity-type schema from the overview figure: no name or
# task attributes, exactly two actions.
FIG_SCHEMA = """
entity Application;
entity Team, User in [Team, Application];
entity List in [Application] { readers: Team, editors: Team, owner: User };
action CreateList appliesTo { principal: [User], resource: [Application] };
action GetList appliesTo { principal: [User], resource: [List] };
"""


@pytest.fixture(scope="session")
def fig_schema():
    from cedar_engine.parser import parse_schema

    return parse_schema(FIG_SCHEMA)
