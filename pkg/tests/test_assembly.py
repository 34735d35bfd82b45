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

from hhgstokes.modules.mesh.dof_layout import build_dof_layout
from hhgstokes.modules.mesh.refinement import MicroCellType
from hhgstokes.modules.operators.assembly import (
    assemble,
    block_locals,
    cell_class_matrices,
    element_matvec,
    element_quadratic_form,
    mask_matrix,
)


def _linear(points):
    return 1.0 + points[:, 0] - 2.0 * points[:, 1] + 0.5 * points[:, 2]


@pytest.fixture(scope="module")
def cube_p2(cube_graph):
    return build_dof_layout(cube_graph, 2, 2), build_dof_layout(cube_graph, 2, 1), cell_class_matrices(cube_graph, 2, 2)


def test_class_matrices_per_level(tet_graph):
    assert set(cell_class_matrices(tet_graph, 0, 1)) == {(0, int(MicroCellType.UP))}
    assert len(cell_class_matrices(tet_graph, 2, 2)) == len(MicroCellType)


def test_class_volumes_add_up(cube_graph):
    mats = cell_class_matrices(cube_graph, 2, 1)
    layout = build_dof_layout(cube_graph, 2, 1)
    total = sum(mats[(c, kind)].amap.volume * (stop - start) for c, kind, start, stop in layout.element_blocks)
    assert total == pytest.approx(1.0)


def test_matvec_matches_assembly(cube_p2, rng):
    lu, lp, mats = cube_p2
    x = rng.standard_normal(lu.num_dofs)
    for block, rows, cols in (("A", lu, lu), ("B1", lp, lu), ("BT2", lu, lp), ("M_p", lp, lp)):
        local = block_locals(mats, block)
        src = x if cols is lu else x[: lp.num_dofs]
        mat = assemble(rows, cols, local)
        np.testing.assert_allclose(mat @ src, element_matvec(rows, cols, local, src), atol=1e-12)


def test_quadratic_form(cube_p2, rng):
    lu, _, mats = cube_p2
    x = rng.standard_normal(lu.num_dofs)
    local = block_locals(mats, "A")
    assert element_quadratic_form(lu, local, x) == pytest.approx(x @ (assemble(lu, lu, local) @ x))


def test_stiffness_annihilates_linears(cube_p2):
    lu, _, mats = cube_p2
    A = assemble(lu, lu, block_locals(mats, "A"))
    np.testing.assert_allclose((A @ _linear(lu.points))[lu.free], 0.0, atol=1e-11)


def test_masses_integrate_one(cube_p2):
    lu, lp, mats = cube_p2
    for block, layout in (("M_u", lu), ("M_p", lp)):
        ones = np.ones(layout.num_dofs)
        assert ones @ element_matvec(layout, layout, block_locals(mats, block), ones) == pytest.approx(1.0)


def test_divergence_transpose(cube_p2):
    lu, lp, mats = cube_p2
    B = assemble(lp, lu, block_locals(mats, "B0"))
    BT = assemble(lu, lp, block_locals(mats, "BT0"))
    assert abs(B - BT.T).max() < 1e-14


def test_unknown_block(cube_p2):
    with pytest.raises(KeyError):
        block_locals(cube_p2[2], "D")


def test_element_subset(cube_p2):
    lu, _, mats = cube_p2
    local = block_locals(mats, "A")
    keep = np.zeros(len(lu.elements), dtype=bool)
    keep[: len(keep) // 2] = True
    full = assemble(lu, lu, local)
    parts = assemble(lu, lu, local, keep) + assemble(lu, lu, local, ~keep)
    assert abs(full - parts).max() < 1e-13


def test_mask_matrix(cube_p2):
    lu, _, mats = cube_p2
    A = assemble(lu, lu, block_locals(mats, "A"))
    masked = mask_matrix(A, lu.free, lu.free)
    coo = masked.tocoo()
    assert lu.free[coo.row].all() and lu.free[coo.col].all()
    assert masked.has_sorted_indices
