import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ltlacpc.automata import loads_dra  # noqa: E402
from ltlacpc.casestudy import build_scenario, shipped_dra  # noqa: E402
from ltlacpc.graph import accepting_mecs  # noqa: E402
from ltlacpc.mdp import loads_mdp  # noqa: E402
from ltlacpc.product import build_product  # noqa: E402


def data_text(name):
    return resources.files("ltlacpc.data").joinpath(name).read_text()


@pytest.fixture(scope="session")
def fig4_mdp():
    return loads_mdp(data_text("fig4.mdp"))


@pytest.fixture(scope="session")
def fig4_dra():
    return loads_dra(data_text("fig4.dra"))


@pytest.fixture(scope="session")
def fig4_product(fig4_mdp, fig4_dra):
    return build_product(fig4_mdp, fig4_dra)


@pytest.fixture(scope="session")
def scenario():
    return build_scenario()


@pytest.fixture(scope="session")
def case_product(scenario):
    return build_product(scenario.composed, shipped_dra(), scenario.pi_label)


@pytest.fixture(scope="session")
def case_amec(case_product):
    (c,) = accepting_mecs(case_product)
    return c
