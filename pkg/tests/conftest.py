import pytest

from schemabench.contracts import default_contract_pack
from schemabench.sandbox.generate import generate_pack


@pytest.fixture(scope="session")
def contracts():
    return default_contract_pack()


@pytest.fixture(scope="session")
def by_name(contracts):
    return {c.name: c for c in contracts}


@pytest.fixture(scope="session")
def pack():
    """The 8-task reduced pack: two seeds per family."""
    return generate_pack()
