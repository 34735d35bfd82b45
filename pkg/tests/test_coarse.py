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

import numpy as np
import pytest

from hhgstokes.modules.cost.cost_model import DiscretizationKind
from hhgstokes.modules.operators.stencil_ops import apply_stokes, export_assembled, pressure_mean
from hhgstokes.modules.solver.coarse import CoarseSolveError, CoarseSolver, LDLFactor, coarse_solve

KINDS = [DiscretizationKind.P1P1, DiscretizationKind.P2P1]


def test_ldl_on_an_indefinite_matrix(rng):
    a = rng.standard_normal((12, 12))
    sym = a + a.T
    sym[:4, :4] = 0.0
    b = rng.standard_normal(12)
    factor = LDLFactor.factorize(sym)
    np.testing.assert_allclose(factor.solve(b), np.linalg.solve(sym, b), rtol=1e-9)
    assert sorted(factor.perm.tolist()) == list(range(12))


def test_ldl_detects_singularity():
    singular = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(CoarseSolveError):
        LDLFactor.factorize(singular)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("mesh, level", [("outflow_graph", 0), ("cube_graph", 0), ("cube_graph", 1)])
def test_residual_of_the_coarse_solve(make_operator, request, kind, mesh, level, rng):
    graph = request.getfixturevalue(mesh)
    op = make_operator(graph, level, kind)
    solver = CoarseSolver(op)
    assert solver.fully_dirichlet == graph.fully_dirichlet
    mat = export_assembled(op)
    exact = rng.standard_normal(mat.shape[0])
    b = op.new_vector("b").set_flat(mat @ exact)
    x = coarse_solve(solver, b)
    np.testing.assert_allclose(mat @ x.flat(), b.flat(), atol=1e-9)
    np.testing.assert_allclose(x.flat()[solver.pinned], 0.0, atol=1e-12)


def test_constant_pressure_without_free_velocities(make_operator, outflow_graph):
    # every P1 velocity dof of the two-cell mesh is fixed on level 1
    op = make_operator(outflow_graph, 1, DiscretizationKind.P1P1)
    assert not op.free_u.any()
    assert CoarseSolver(op).bordered


@pytest.mark.parametrize("kind", KINDS)
def test_fully_dirichlet_fixes_the_mean(make_operator, cube_graph, kind, rng):
    op = make_operator(cube_graph, 1, kind)
    solver = CoarseSolver(op)
    assert solver.fully_dirichlet
    x_true = op.new_vector("x")
    x_true.set_flat(rng.standard_normal(len(x_true.flat())))
    b = op.new_vector("b")
    apply_stokes(op, x_true, b)
    x = solver.solve(b)
    assert pressure_mean(op, x.p) == pytest.approx(0.0, abs=1e-12)
    r = op.new_vector("r")
    apply_stokes(op, x, r)
    np.testing.assert_allclose(r.flat(), b.flat(), atol=1e-9)
