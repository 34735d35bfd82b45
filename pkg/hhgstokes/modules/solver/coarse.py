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
    Direct solve of the coarsest level. The assembled saddle-point matrix is
    factored once with a symmetric indefinite (Bunch-Kaufman) LDL^T
    factorization. Pressure rows without any coupling are pinned. When the
    constant pressure lies in the kernel (always for fully Dirichlet
    problems) the system is bordered with the mass-weighted mean constraint.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from hhgstokes.modules.operators.grid_function import StokesVector
from hhgstokes.modules.operators.stencil_ops import StokesOperator, export_assembled, project_pressure_mean_zero

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-13
NULL_SPACE_TOLERANCE = 1e-12


class CoarseSolveError(RuntimeError):
    """Singular coarse factorization."""


@dataclass
class LDLFactor:
    """scipy's LDL^T factors with the row permutation that makes L triangular."""

    lower: np.ndarray
    block_diag: np.ndarray
    perm: np.ndarray

    @classmethod
    def factorize(cls, matrix: np.ndarray) -> "LDLFactor":
        matrix = np.asarray(matrix, dtype=np.float64)
        lu, d, perm = la.ldl(matrix, lower=True)
        scale = max(float(np.abs(matrix).max()), 1.0)
        i = 0
        n = len(d)
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                det = d[i, i] * d[i + 1, i + 1] - d[i + 1, i] * d[i, i + 1]
                if abs(det) <= (PIVOT_TOLERANCE * scale) ** 2:
                    raise CoarseSolveError(f"singular 2x2 pivot at position {i} (det {det:.3e})")
                i += 2
            else:
                if abs(d[i, i]) <= PIVOT_TOLERANCE * scale:
                    raise CoarseSolveError(f"singular pivot at position {i} ({d[i, i]:.3e})")
                i += 1
        return cls(lower=lu[perm], block_diag=d, perm=perm)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        y = la.solve_triangular(self.lower, rhs[self.perm], lower=True, unit_diagonal=True)
        z = la.solve_banded((1, 1), _banded(self.block_diag), y)
        w = la.solve_triangular(self.lower.T, z, lower=False, unit_diagonal=True)
        x = np.empty_like(w)
        x[self.perm] = w
        return x


def _banded(d: np.ndarray) -> np.ndarray:
    n = len(d)
    ab = np.zeros((3, n))
    ab[1] = np.diag(d)
    ab[0, 1:] = np.diag(d, 1)
    ab[2, :-1] = np.diag(d, -1)
    return ab


class CoarseSolver:
    """
    Factored coarsest-level system.

    Args:
        op (StokesOperator): operator of level 0 (any level works, sizes permitting).
        fully_dirichlet (bool, optional): fix the pressure mean by bordering;
            defaults to the boundary classification of the mesh.
    """

    def __init__(self, op: StokesOperator, fully_dirichlet: Optional[bool] = None):
        self.op = op
        self.fully_dirichlet = op.graph.fully_dirichlet if fully_dirichlet is None else fully_dirichlet
        matrix = export_assembled(op, cap=None).toarray()
        self.n_u = 3 * op.layout_u.num_dofs
        n = matrix.shape[0]

        pressure_rows = np.arange(self.n_u, n)
        empty = ~np.any(matrix[pressure_rows] != 0.0, axis=1)
        self.pinned = pressure_rows[empty]
        constant = np.zeros(n)
        constant[pressure_rows[~empty]] = 1.0
        scale = max(float(np.abs(matrix).max()), 1.0)
        # without free velocities near an outflow boundary C alone can leave the constant undetermined
        self.bordered = self.fully_dirichlet or (
            constant.any() and float(np.abs(matrix @ constant).max()) <= NULL_SPACE_TOLERANCE * scale
        )
        matrix[self.pinned, self.pinned] = 1.0
        if len(self.pinned):
            logger.debug(f"Coarse solve pins {len(self.pinned)} uncoupled pressure dofs")

        if self.bordered:
            border = np.zeros(n)
            border[self.n_u :] = op.pressure_mass
            border[self.pinned] = 0.0
            matrix = np.block([[matrix, border[:, None]], [border[None, :], np.zeros((1, 1))]])
        self.matrix = matrix
        try:
            self.factor = LDLFactor.factorize(matrix)
        except CoarseSolveError as e:
            raise CoarseSolveError(f"coarse factorization failed (pressure null space not removed?): {e}") from e
        logger.debug(f"Coarse system of size {matrix.shape[0]} factored")

    def solve_flat(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.array(rhs, dtype=np.float64)
        rhs[self.pinned] = 0.0
        if self.bordered:
            rhs = np.append(rhs, 0.0)
        x = self.factor.solve(rhs)
        return x[: len(x) - 1] if self.bordered else x

    def solve(self, b: StokesVector, x: Optional[StokesVector] = None) -> StokesVector:
        """Solves the coarse system for ``b``; the pressure mean is zero for fully Dirichlet problems."""
        x = x if x is not None else self.op.new_vector("x")
        x.set_flat(self.solve_flat(b.flat()))
        if self.fully_dirichlet:
            project_pressure_mean_zero(self.op, x.p)
        return x


def coarse_solve(solver: CoarseSolver, b: StokesVector) -> StokesVector:
    return solver.solve(b)
