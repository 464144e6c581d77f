import numpy as np
import pytest

from fsisolve.assembly import build_problem, rest_state
from fsisolve.bench import boundary_conditions, geometry_for, material_for, setup_case
from fsisolve.config import RunConfig
from fsisolve.mesh import build_case


def perturbed_state(prob, rng, d=1e-6, u=1e-2, p=10.0):
    """Rest state plus random noise of the given magnitude per field (an admissible state)."""
    x = rest_state(prob)
    lay = prob.layout
    for f, s in (("ds", d), ("df", d), ("us", u), ("uf", u), ("ps", p), ("pf", p)):
        idx = lay[f]
        x[idx] += s * rng.uniform(-1, 1, idx.size)
    return x


def field_scaled(prob, rng, d=1e-6, u=1e-2, p=10.0):
    return perturbed_state(prob, rng, d, u, p) - rest_state(prob)


@pytest.fixture(scope="session")
def channel_cfg():
    return RunConfig(case="channel", levels=1)


@pytest.fixture(scope="session")
def channel_problem(channel_cfg):
    geo = geometry_for(channel_cfg)
    return build_problem(build_case(geo), material_for(channel_cfg), boundary_conditions(channel_cfg))


@pytest.fixture(scope="session")
def channel_setup2():
    return setup_case(RunConfig(case="channel", levels=2))


# one "CRITERION n: PASS/FAIL ..." line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
