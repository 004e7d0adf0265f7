import pytest

from aceflow import fem
from aceflow.mesh import Labeling, build_structured_mesh


@pytest.fixture(scope="session")
def cavity8():
    fe = fem.build_fe_system(build_structured_mesh(8), "cavity")
    return fe, fem.assemble_static_operators(fe)


@pytest.fixture(scope="session")
def mms8():
    fe = fem.build_fe_system(build_structured_mesh(8, Labeling.MMS), "mms")
    return fe, fem.assemble_static_operators(fe)


# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[key])
