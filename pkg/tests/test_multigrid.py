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

from hhgstokes.models.benchmark import cube_exact_solution
from hhgstokes.models.hierarchy import LevelHierarchy
from hhgstokes.models.multigrid import (
    ROBUST_PARAMS,
    ConvergenceError,
    CycleTrace,
    fmg,
    solve_to_residual,
    variable_v_cycle,
)
from hhgstokes.modules.cost.cost_model import DiscretizationKind, compare_measured
from hhgstokes.modules.mesh.refinement import LevelError
from hhgstokes.modules.operators.stencil_ops import assemble_rhs, pressure_mean, residual_norms
from hhgstokes.modules.solver.params import SolverParams


def _setup(graph, kind, level):
    hierarchy = LevelHierarchy(graph, kind, level)
    problem = cube_exact_solution()
    rhs = [assemble_rhs(op, problem.forcing, problem.boundary) for op in hierarchy.operators]
    return hierarchy, rhs


@pytest.fixture(scope="module")
def p1_cube(cube_graph):
    hierarchy, rhs = _setup(cube_graph, DiscretizationKind.P1P1, 3)
    return hierarchy, rhs, hierarchy.estimate_omega(iterations=30)


@pytest.fixture(scope="module")
def p2_cube(cube_graph):
    hierarchy, rhs = _setup(cube_graph, DiscretizationKind.P2P1, 2)
    return hierarchy, rhs, hierarchy.estimate_omega(iterations=30)


def test_fmg_schedule(p2_cube):
    hierarchy, rhs, omega_inv = p2_cube
    trace = CycleTrace()
    fmg(hierarchy, SolverParams.parse("1,2,1,2,F,1", omega_inv), rhs, trace)
    assert trace.levels("fmg_interpolate") == [1, 2]
    # one initial solve plus one per V-cycle
    assert trace.levels("coarse") == [0] * 5
    assert trace.smoothing_counts(2) == [1, 2, 1, 2]
    assert trace.smoothing_counts(1) == [1, 2, 1, 2, 2, 3, 2, 3]
    assert trace.levels("restrict") == [1, 1, 2, 1, 2, 1]


def test_v_cycle_order(p2_cube):
    hierarchy, rhs, omega_inv = p2_cube
    trace = CycleTrace()
    x = hierarchy.fine.new_vector("x")
    variable_v_cycle(hierarchy, 2, 2, SolverParams.parse("0,1,2,1,F,1", omega_inv), x, rhs[2], trace)
    assert [(e, lvl) for e, lvl, _ in trace.events] == [
        ("pre", 2),
        ("restrict", 2),
        ("pre", 1),
        ("restrict", 1),
        ("coarse", 0),
        ("prolongate", 1),
        ("post", 1),
        ("prolongate", 2),
        ("post", 2),
    ]
    assert trace.smoothing_counts(1) == [2, 3]


def test_cycles_reduce_the_residual(p2_cube):
    hierarchy, rhs, omega_inv = p2_cube
    params = ROBUST_PARAMS.with_omega(omega_inv)
    x = fmg(hierarchy, params, rhs)
    start = residual_norms(hierarchy.fine, x, rhs[2])
    for _ in range(4):
        variable_v_cycle(hierarchy, 2, 2, params, x, rhs[2])
    end = residual_norms(hierarchy.fine, x, rhs[2])
    assert end[0] < 0.1 * start[0]
    assert end[1] < 0.1 * start[1]
    assert pressure_mean(hierarchy.fine, x.p) == pytest.approx(0.0, abs=1e-12)


def test_measured_work_matches_the_prediction(p1_cube):
    hierarchy, rhs, omega_inv = p1_cube
    hierarchy.ledger.reset()
    hierarchy.ledger.predicted.clear()
    fmg(hierarchy, SolverParams.parse("2,1,1,2,S,1", omega_inv), rhs)
    report = {row["phase"]: row for row in compare_measured(hierarchy.ledger, tolerance=1e-9)}
    assert report["smooth"]["status"] == "pass"
    assert report["residual"]["status"] == "pass"
    assert hierarchy.ledger.measured("coarse", part="interface") == 0
    assert hierarchy.ledger.measured("transfer", part="interface") > 0


def test_fmg_input_checks(p2_cube):
    hierarchy, rhs, _ = p2_cube
    with pytest.raises(ValueError):
        fmg(hierarchy, SolverParams.parse("1,1,1,1,F,1"), rhs)
    with pytest.raises(LevelError):
        fmg(hierarchy, SolverParams.parse("1,1,1,1,F,1", 0.5), rhs[:-1])
    with pytest.raises(LevelError):
        variable_v_cycle(hierarchy, 1, 2, ROBUST_PARAMS.with_omega(0.5), hierarchy.fine.new_vector(), rhs[2])


def test_cycle_cap(p2_cube):
    hierarchy, rhs, omega_inv = p2_cube
    with pytest.raises(ConvergenceError) as info:
        solve_to_residual(hierarchy, rhs[2], 1e-30, omega_inv=omega_inv, max_cycles=2)
    assert len(info.value.history) == 3
    with pytest.raises(ValueError):
        solve_to_residual(hierarchy, rhs[2], 0.0, omega_inv=omega_inv)
    with pytest.raises(ValueError):
        solve_to_residual(hierarchy, rhs[2], 1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("kind, level", [(DiscretizationKind.P1P1, 4), (DiscretizationKind.P2P1, 3)])
def test_reference_solve_converges(cube_graph, kind, level):
    hierarchy, rhs = _setup(cube_graph, kind, level)
    omega_inv = hierarchy.estimate_omega()
    x, history = solve_to_residual(hierarchy, rhs[-1], 1e-10, omega_inv=omega_inv, max_cycles=60)
    assert max(history[-1]) < 1e-10
    assert len(history) < 40
    norms = np.array(history)
    assert np.all(np.isfinite(norms))


@pytest.mark.slow
def test_cycle_rate_is_level_independent(cube_graph):
    rates = []
    for level in (3, 4):
        hierarchy, rhs = _setup(cube_graph, DiscretizationKind.P1P1, level)
        omega_inv = hierarchy.estimate_omega()
        with pytest.raises(ConvergenceError) as info:
            solve_to_residual(hierarchy, rhs[-1], 1e-30, omega_inv=omega_inv, max_cycles=6)
        norms = [max(entry) for entry in info.value.history]
        rates.append((norms[6] / norms[2]) ** 0.25)
    assert rates[1] == pytest.approx(rates[0], rel=0.25)
    assert max(rates) < 1.0
