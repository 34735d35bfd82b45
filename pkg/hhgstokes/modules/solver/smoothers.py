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
"""
Description:
    Point smoothers of the velocity Laplacian and the inexact Uzawa smoother
    of the Stokes system. Gauss-Seidel visits the free velocity dofs class by
    class (macro vertices, edges, faces, then the interior of every
    macro-cell); cell interiors are relaxed with the constant stencils group
    by group in lexicographic order, interface classes on their sparse rows.
    The backward sweep reverses every ordering.
"""

import logging
from typing import Optional, Union

import numpy as np

from hhgstokes.modules.operators.grid_function import GridFunction, StokesVector
from hhgstokes.modules.operators.stencil_ops import StokesOperator, apply_block
from hhgstokes.modules.solver.kernels import csr_gauss_seidel, stencil_gauss_seidel
from hhgstokes.modules.solver.params import AHatVariant, SolverParams

logger = logging.getLogger(__name__)

FORWARD = "forward"
BACKWARD = "backward"


def _interface_phase(op: StokesOperator, cls, x: np.ndarray, rhs: np.ndarray, reverse: bool) -> None:
    local_rhs = rhs[cls.rows] - cls.off_block @ x
    local_x = x[cls.rows].copy()
    csr_gauss_seidel(cls.diag_block.indptr, cls.diag_block.indices, cls.diag_block.data, local_x, local_rhs, reverse)
    x[cls.rows] = local_x
    op.record(interface=2 * (cls.diag_block.nnz + cls.off_block.nnz))


def _cell_phase(op: StokesOperator, u: GridFunction, rhs: np.ndarray, reverse: bool) -> None:
    cells = range(op.graph.mesh.num_cells)
    for cell in reversed(cells) if reverse else cells:
        closure = op.closure_of(u, cell)
        groups = op.interior_rows["u"][cell]
        flops = 0
        for rows in reversed(groups) if reverse else groups:
            st = op.stencils[cell]["A"][rows.group]
            stencil_gauss_seidel(
                closure, np.ascontiguousarray(rhs[rows.ids]), rows.coords, st.offsets, st.weights, st.center, reverse
            )
            flops += 2 * st.size * len(rows.ids)
        u.store_closure(cell, closure)
        op.record(interior=flops)


def gauss_seidel(
    op: StokesOperator,
    u: GridFunction,
    rhs: Union[GridFunction, np.ndarray],
    direction: str = FORWARD,
) -> None:
    """
    One in-place Gauss-Seidel sweep on A u = rhs for one velocity component.

    Args:
        op (StokesOperator): level operator.
        u (GridFunction): velocity component, Dirichlet values are never touched.
        rhs: right-hand side on the velocity layout (Dirichlet rows ignored).
        direction (str): ``forward`` or ``backward``.
    """
    assert direction in (FORWARD, BACKWARD), f"unknown sweep direction '{direction}'"
    if u.layout is not op.layout_u:
        raise ValueError(f"{u!r} is not a velocity component of level {op.level}")
    rhs = rhs.values if isinstance(rhs, GridFunction) else np.asarray(rhs, dtype=np.float64)
    reverse = direction == BACKWARD
    x = u.data
    if reverse and op.uses_stencils:
        u.ghost_update()
        _cell_phase(op, u, rhs, reverse=True)
    for cls in reversed(op.gs_classes) if reverse else op.gs_classes:
        _interface_phase(op, cls, x, rhs, reverse)
    u.ghost_update()
    if not reverse and op.uses_stencils:
        _cell_phase(op, u, rhs, reverse=False)


def symmetric_gauss_seidel(op: StokesOperator, u: GridFunction, rhs: Union[GridFunction, np.ndarray]) -> None:
    gauss_seidel(op, u, rhs, FORWARD)
    gauss_seidel(op, u, rhs, BACKWARD)


def uzawa_smooth(
    op: StokesOperator,
    x: StokesVector,
    b: StokesVector,
    params: SolverParams,
    schur_diagonal: np.ndarray,
    omega_inv: Optional[float] = None,
) -> None:
    """
    One inexact Uzawa iteration.

    The velocity is relaxed on A u = f - B^T p with ``xi`` forward (or
    symmetric) Gauss-Seidel sweeps per component, then the pressure is
    corrected with p <- p - (omega_inv D)^-1 (g - B u + C p).
    """
    omega_inv = params.omega_inv if omega_inv is None else omega_inv
    if omega_inv is None or not omega_inv > 0:
        raise ValueError(f"Schur relaxation omega_inv must be positive, got {omega_inv}")

    rhs = GridFunction(op.layout_u, "rhs")
    for d in range(3):
        apply_block(op, f"BT{d}", x.p, rhs)
        rhs.data[:] = b.u[d].values - rhs.values
        for _ in range(params.xi):
            gauss_seidel(op, x.u[d], rhs, FORWARD)
            if params.a_hat == AHatVariant.SYMMETRIC:
                gauss_seidel(op, x.u[d], rhs, BACKWARD)

    r_p = GridFunction(op.layout_p, "r_p")
    for d in range(3):
        apply_block(op, f"B{d}", x.u[d], r_p, accumulate=d > 0)
    if op.kind.stabilized:
        cp = GridFunction(op.layout_p, "cp")
        apply_block(op, "C", x.p, cp)
        residual_p = b.p.values - r_p.values + cp.values
    else:
        residual_p = b.p.values - r_p.values
    x.p.data[:] -= residual_p / (omega_inv * schur_diagonal)
