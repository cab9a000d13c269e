import numpy as np
import pytest

from sepsing.geometry import build_partition
from sepsing.scenarios import (
    build_disk_system,
    build_lens_system,
    build_trefoil_system,
)
from sepsing.transforms import build_quadrature
from sepsing.decomposition import assemble_remainder, plan_decomposition


@pytest.fixture(scope="session")
def disk_system():
    return build_disk_system()


@pytest.fixture(scope="session")
def lens_system():
    return build_lens_system("mobius")


@pytest.fixture(scope="session")
def lens_squared_system():
    return build_lens_system("squared")


@pytest.fixture(scope="session")
def trefoil_system():
    return build_trefoil_system()


@pytest.fixture(scope="session")
def circle_rule(disk_system):
    return build_quadrature(disk_system.boundary, base_panels=8)


@pytest.fixture(scope="session")
def lens_rule(lens_system):
    return build_quadrature(lens_system.boundary, base_panels=8,
                            corner_grading_depth=10)


@pytest.fixture(scope="session")
def lens_plan(lens_system, lens_rule):
    part = build_partition(lens_system, 0.25)
    return plan_decomposition(lens_system, part, lens_rule)


@pytest.fixture(scope="session")
def lens_remainder(lens_plan):
    return assemble_remainder(lens_plan)


@pytest.fixture(scope="session")
def squared_plan(lens_squared_system):
    rule = build_quadrature(lens_squared_system.boundary, base_panels=8,
                            corner_grading_depth=10)
    part = build_partition(lens_squared_system, 0.25)
    return plan_decomposition(lens_squared_system, part, rule)


@pytest.fixture(scope="session")
def squared_remainder(squared_plan):
    return assemble_remainder(squared_plan)


@pytest.fixture(scope="session")
def trefoil_plan(trefoil_system):
    rule = build_quadrature(trefoil_system.boundary, base_panels=6,
                            corner_grading_depth=10)
    part = build_partition(trefoil_system, 0.25)
    return plan_decomposition(trefoil_system, part, rule)


@pytest.fixture(scope="session")
def trefoil_remainder(trefoil_plan):
    return assemble_remainder(trefoil_plan)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
