# Copyright (c) 2025 HHG-Stokes contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from pathlib import Path

import numpy as np
import pytest

from hhgstokes.modules.cost.cost_model import DiscretizationKind
from hhgstokes.modules.mesh.macro_mesh import build_primitive_graph, generate_unit_cube, load_mesh
from hhgstokes.modules.operators.stencil_ops import StokesOperator

MESH_DIR = Path(__file__).resolve().parent.parent / "example" / "meshes"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow benchmark tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def mesh_dir():
    return MESH_DIR


@pytest.fixture(scope="session")
def single_tet():
    return load_mesh(MESH_DIR / "single_tet.hhgmesh")


@pytest.fixture(scope="session")
def two_tets():
    return load_mesh(MESH_DIR / "two_tets.hhgmesh")


@pytest.fixture(scope="session")
def outflow_mesh():
    return load_mesh(MESH_DIR / "two_tets_outflow.hhgmesh")


@pytest.fixture(scope="session")
def cube():
    return generate_unit_cube()


@pytest.fixture(scope="session")
def tet_graph(single_tet):
    return build_primitive_graph(single_tet)


@pytest.fixture(scope="session")
def two_tet_graph(two_tets):
    return build_primitive_graph(two_tets)


@pytest.fixture(scope="session")
def outflow_graph(outflow_mesh):
    return build_primitive_graph(outflow_mesh)


@pytest.fixture(scope="session")
def cube_graph(cube):
    return build_primitive_graph(cube)


@pytest.fixture(scope="session")
def operator_cache():
    return {}


@pytest.fixture
def make_operator(operator_cache):
    """Operators are expensive to set up; share them across the session (read-only use)."""

    def make(graph, level, kind):
        key = (id(graph), level, str(kind))
        if key not in operator_cache:
            operator_cache[key] = StokesOperator(graph, level, DiscretizationKind.parse(kind))
        return operator_cache[key]

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
