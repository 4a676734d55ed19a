import pytest
from pathlib import Path

from hmpst import Component, parse_type

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fixture_text(rel: str) -> str:
    return (FIXTURES / rel).read_text(encoding="utf-8")


def fixture_type(rel: str):
    return parse_type(fixture_text(rel))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def company():
    """The company corpus: coordination type plus the three components."""
    return {
        "gdagger": fixture_type("company/gdagger.hmpst"),
        "str": Component(fixture_type("company/str.hmpst"), frozenset({"d", "ad"})),
        "sales": Component(fixture_type("company/sales.hmpst"), frozenset({"s", "w"})),
        "fin": Component(fixture_type("company/fin.hmpst"), frozenset({"f1", "f2"})),
    }


@pytest.fixture(scope="session")
def oauth():
    return {
        "gdagger": fixture_type("oauth/standard/gdagger.hmpst"),
        "gdagger_op": fixture_type("oauth/optimised/gdagger.hmpst"),
        "auth": Component(
            fixture_type("oauth/standard/auth.hmpst"), frozenset({"oa", "ow"})
        ),
        "res": Component(
            fixture_type("oauth/standard/res.hmpst"), frozenset({"ua", "res"})
        ),
    }


@pytest.fixture(scope="session")
def parallel():
    return {
        "gdagger": fixture_type("parallel/gdagger.hmpst"),
        "left": Component(fixture_type("parallel/left.hmpst"), frozenset({"p", "q"})),
        "right": Component(fixture_type("parallel/right.hmpst"), frozenset({"r", "s"})),
    }
