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
    The level hierarchy of one problem: a Stokes operator per level 0..L,
    prolongation matrices between adjacent levels for the velocity and the
    pressure space, the factored coarse system and the Schur diagonals the
    smoother relaxes the pressure with.
"""

import logging
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from hhgstokes.modules.cost.cost_model import DiscretizationKind, WorkLedger
from hhgstokes.modules.mesh.macro_mesh import PrimitiveGraph
from hhgstokes.modules.mesh.refinement import LevelError
from hhgstokes.modules.operators.grid_function import StokesVector
from hhgstokes.modules.operators.stencil_ops import StokesOperator, pspg_diagonal
from hhgstokes.modules.solver.coarse import CoarseSolver
from hhgstokes.modules.solver.omega import estimate_omega
from hhgstokes.modules.solver.transfer import prolongate, prolongation_matrix, restrict

logger = logging.getLogger(__name__)

SCHUR_DIAGONALS = ("pspg", "lumped_mass")


class LevelHierarchy:
    """
    Operators and transfers of levels 0..max_level on one macro mesh.

    Args:
        graph (PrimitiveGraph): macro primitives.
        kind (DiscretizationKind): discretization.
        max_level (int): finest level L.
        schur_diagonal (str): ``pspg`` (default) or ``lumped_mass``.
        ledger (WorkLedger, optional): shared flop ledger; one is created
            with the finest level as reference if omitted.
    """

    def __init__(
        self,
        graph: PrimitiveGraph,
        kind: DiscretizationKind,
        max_level: int,
        schur_diagonal: str = "pspg",
        ledger: Optional[WorkLedger] = None,
    ):
        if max_level < 0:
            raise LevelError(f"max_level must be non-negative, got {max_level}")
        if schur_diagonal not in SCHUR_DIAGONALS:
            raise ValueError(f"unknown Schur diagonal '{schur_diagonal}', expected one of {SCHUR_DIAGONALS}")
        self.graph = graph
        self.kind = DiscretizationKind.parse(kind)
        self.max_level = int(max_level)
        self.schur_diagonal = schur_diagonal
        self.fully_dirichlet = graph.fully_dirichlet
        self.ledger = ledger if ledger is not None else WorkLedger(self.kind, self.max_level, graph.mesh.num_cells)

        self.operators: List[StokesOperator] = [
            StokesOperator(graph, level, self.kind, self.ledger) for level in range(self.max_level + 1)
        ]
        # prolong_u[l] maps level l-1 to level l; entry 0 is unused
        self.prolong_u: List[Optional[sp.csr_matrix]] = [None]
        self.prolong_p: List[Optional[sp.csr_matrix]] = [None]
        for level in range(1, self.max_level + 1):
            coarse, fine = self.operators[level - 1], self.operators[level]
            self.prolong_u.append(prolongation_matrix(coarse.layout_u, fine.layout_u))
            self.prolong_p.append(prolongation_matrix(coarse.layout_p, fine.layout_p))

        self.coarse = CoarseSolver(self.operators[0], self.fully_dirichlet)
        self._diagonals: Dict[int, np.ndarray] = {}
        logger.info(
            f"Hierarchy {self.kind.value} levels 0..{self.max_level}: "
            + ", ".join(f"{op.level}:{3 * op.layout_u.num_dofs + op.layout_p.num_dofs}" for op in self.operators)
            + " unknowns"
        )

    def __len__(self) -> int:
        return len(self.operators)

    def __getitem__(self, level: int) -> StokesOperator:
        return self.operators[level]

    @property
    def fine(self) -> StokesOperator:
        return self.operators[-1]

    def schur_diagonal_of(self, level: int) -> np.ndarray:
        """Diagonal D of the pressure relaxation S_hat = omega^-1 D on ``level``."""
        if level not in self._diagonals:
            op = self.operators[level]
            diag = pspg_diagonal(op) if self.schur_diagonal == "pspg" else op.pressure_mass
            # pressure dofs without any coupling keep a unit diagonal
            self._diagonals[level] = np.where(diag > 0.0, diag, 1.0)
        return self._diagonals[level]

    def estimate_omega(self, level: Optional[int] = None, iterations: int = 100, seed: int = 0) -> float:
        """omega^-1 by power iteration on ``level`` (the finest level by default)."""
        level = self.max_level if level is None else level
        if not 1 <= level <= self.max_level:
            raise LevelError(f"omega estimate needs a level in 1..{self.max_level}, got {level}")
        omega_inv, _ = estimate_omega(self.operators[level], iterations, seed, self.fully_dirichlet)
        return omega_inv

    def prolongate(self, level: int, coarse: StokesVector, fine: StokesVector, add: bool = False) -> None:
        """Interpolates every component from ``level - 1`` to ``level``."""
        if not 1 <= level <= self.max_level:
            raise LevelError(f"no prolongation onto level {level}")
        for d in range(3):
            prolongate(self.prolong_u[level], coarse.u[d], fine.u[d], add)
        prolongate(self.prolong_p[level], coarse.p, fine.p, add)
        self.ledger.record(interface=6 * self.prolong_u[level].nnz + 2 * self.prolong_p[level].nnz)

    def restrict(self, level: int, fine: StokesVector, coarse: StokesVector) -> None:
        """Transposed interpolation from ``level`` to ``level - 1``."""
        if not 1 <= level <= self.max_level:
            raise LevelError(f"no restriction from level {level}")
        for d in range(3):
            restrict(self.prolong_u[level], fine.u[d], coarse.u[d])
        restrict(self.prolong_p[level], fine.p, coarse.p)
        self.ledger.record(interface=6 * self.prolong_u[level].nnz + 2 * self.prolong_p[level].nnz)
