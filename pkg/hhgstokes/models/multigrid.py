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
    Variable V-cycle, full multigrid and the residual-driven reference solve
    on a LevelHierarchy. The smoother is the inexact Uzawa iteration; level
    0 is solved directly. Flops are attributed to the ledger phases
    ``smooth``, ``residual``, ``transfer`` and ``coarse``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hhgstokes.models.hierarchy import LevelHierarchy
from hhgstokes.modules.cost.cost_model import fmg_phase_work
from hhgstokes.modules.mesh.refinement import LevelError
from hhgstokes.modules.operators.grid_function import StokesVector
from hhgstokes.modules.operators.stencil_ops import project_pressure_mean_zero, residual, residual_norms
from hhgstokes.modules.solver.params import AHatVariant, SolverParams
from hhgstokes.modules.solver.smoothers import uzawa_smooth

logger = logging.getLogger(__name__)

# used for reference solves: symmetric inner sweeps, two of them
ROBUST_PARAMS = SolverParams(nu_pre=2, nu_post=2, nu_inc=1, kappa=1, a_hat=AHatVariant.SYMMETRIC, xi=2)
MAX_CYCLES = 200


class ConvergenceError(RuntimeError):
    """The reference solve hit its cycle cap."""

    def __init__(self, message: str, history: Sequence[Tuple[float, float]]):
        super().__init__(message)
        self.history = list(history)


@dataclass
class CycleTrace:
    """Ordered record of what a cycle did: (event, level, count)."""

    events: List[Tuple[str, int, int]] = field(default_factory=list)

    def add(self, event: str, level: int, count: int = 1) -> None:
        self.events.append((event, level, count))

    def smoothing_counts(self, level: int) -> List[int]:
        return [count for event, lvl, count in self.events if event in ("pre", "post") and lvl == level]

    def levels(self, event: str) -> List[int]:
        return [lvl for ev, lvl, _ in self.events if ev == event]


def _phase(hierarchy: LevelHierarchy, name: str):
    return hierarchy.ledger.phase(name)


def smooth(hierarchy: LevelHierarchy, level: int, x: StokesVector, b: StokesVector, params: SolverParams, steps: int) -> None:
    op = hierarchy[level]
    diagonal = hierarchy.schur_diagonal_of(level)
    with _phase(hierarchy, "smooth"):
        for _ in range(steps):
            uzawa_smooth(op, x, b, params, diagonal)


def variable_v_cycle(
    hierarchy: LevelHierarchy,
    fine_level: int,
    level: int,
    params: SolverParams,
    x: StokesVector,
    b: StokesVector,
    trace: Optional[CycleTrace] = None,
) -> StokesVector:
    """
    One variable V-cycle on ``level`` inside a cycle started on ``fine_level``.

    Smoothing counts grow by ``nu_inc`` per level below ``fine_level``; the
    coarse defect problems start from zero.

    Args:
        hierarchy (LevelHierarchy): levels and transfers.
        fine_level (int): level the cycle was started on.
        level (int): current level.
        params (SolverParams): smoothing counts, variant and omega^-1.
        x (StokesVector): iterate on ``level``, updated in place.
        b (StokesVector): right-hand side on ``level``.
        trace (CycleTrace, optional): receives the sequence of operations.

    Returns:
        StokesVector: ``x``.
    """
    if not 0 <= level <= fine_level <= hierarchy.max_level:
        raise LevelError(f"invalid cycle levels {level} <= {fine_level} <= {hierarchy.max_level}")
    if level == 0:
        with _phase(hierarchy, "coarse"):
            hierarchy.coarse.solve(b, x)
        if trace is not None:
            trace.add("coarse", 0)
        return x

    op = hierarchy[level]
    pre, post = params.smoothing_steps(level, fine_level)

    smooth(hierarchy, level, x, b, params, pre)
    if trace is not None:
        trace.add("pre", level, pre)

    with _phase(hierarchy, "residual"):
        r = residual(op, x, b)
    coarse_op = hierarchy[level - 1]
    b_c = coarse_op.new_vector("b")
    x_c = coarse_op.new_vector("x")
    with _phase(hierarchy, "transfer"):
        hierarchy.restrict(level, r, b_c)
        for u in b_c.u:
            u.data[coarse_op.layout_u.dirichlet] = 0.0
    if trace is not None:
        trace.add("restrict", level)

    variable_v_cycle(hierarchy, fine_level, level - 1, params, x_c, b_c, trace)

    with _phase(hierarchy, "transfer"):
        hierarchy.prolongate(level, x_c, x, add=True)
    if trace is not None:
        trace.add("prolongate", level)

    smooth(hierarchy, level, x, b, params, post)
    if trace is not None:
        trace.add("post", level, post)

    if level == fine_level and hierarchy.fully_dirichlet:
        project_pressure_mean_zero(op, x.p)
    return x


def fmg_interpolate(hierarchy: LevelHierarchy, level: int, coarse: StokesVector, b: StokesVector) -> StokesVector:
    """Start value on ``level``: interpolated coarse solution with the boundary values of ``b``."""
    op = hierarchy[level]
    x = op.new_vector("x")
    with _phase(hierarchy, "transfer"):
        hierarchy.prolongate(level, coarse, x)
    dirichlet = op.layout_u.dirichlet
    for u, f in zip(x.u, b.u):
        u.data[dirichlet] = f.values[dirichlet]
    return x


def fmg(
    hierarchy: LevelHierarchy,
    params: SolverParams,
    rhs: Sequence[StokesVector],
    trace: Optional[CycleTrace] = None,
) -> StokesVector:
    """
    Full multigrid: direct solve on level 0, then kappa variable V-cycles on
    every finer level started from the interpolated coarser solution.

    Args:
        hierarchy (LevelHierarchy): levels and transfers.
        params (SolverParams): parameterization, omega^-1 must be set.
        rhs (Sequence[StokesVector]): right-hand side of every level 0..L.
        trace (CycleTrace, optional): receives the sequence of operations.

    Returns:
        StokesVector: the approximation on the finest level.
    """
    if len(rhs) != len(hierarchy):
        raise LevelError(f"need one right-hand side per level, got {len(rhs)} for {len(hierarchy)} levels")
    if params.omega_inv is None:
        raise ValueError("omega_inv must be set before running full multigrid")
    if hierarchy.max_level >= 2:
        for phase, work in fmg_phase_work(hierarchy.kind, params, hierarchy.max_level).items():
            hierarchy.ledger.predict(phase, work)

    x = hierarchy[0].new_vector("x")
    with _phase(hierarchy, "coarse"):
        hierarchy.coarse.solve(rhs[0], x)
    if trace is not None:
        trace.add("coarse", 0)
    for level in range(1, hierarchy.max_level + 1):
        x = fmg_interpolate(hierarchy, level, x, rhs[level])
        if trace is not None:
            trace.add("fmg_interpolate", level)
        for _ in range(params.kappa):
            variable_v_cycle(hierarchy, level, level, params, x, rhs[level], trace)
        logger.debug(f"FMG level {level} done")
    return x


def solve_to_residual(
    hierarchy: LevelHierarchy,
    b: StokesVector,
    epsilon: float,
    params: SolverParams = ROBUST_PARAMS,
    omega_inv: Optional[float] = None,
    x: Optional[StokesVector] = None,
    max_cycles: int = MAX_CYCLES,
) -> Tuple[StokesVector, List[Tuple[float, float]]]:
    """
    Variable V-cycles on the finest level until both block residual norms
    drop below ``epsilon``.

    Args:
        hierarchy (LevelHierarchy): levels and transfers.
        b (StokesVector): right-hand side on the finest level.
        epsilon (float): residual threshold for the velocity and the pressure block.
        params (SolverParams): cycle parameterization.
        omega_inv (float, optional): overrides the omega^-1 of ``params``.
        x (StokesVector, optional): start value, zero with the boundary values of ``b`` otherwise.
        max_cycles (int): cycle cap.

    Returns:
        Tuple[StokesVector, List[Tuple[float, float]]]: the solution and the
        residual norms before every cycle and after the last one.

    Raises:
        ConvergenceError: if the cap is reached.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if omega_inv is not None:
        params = params.with_omega(omega_inv)
    if params.omega_inv is None:
        raise ValueError("solve_to_residual needs omega_inv")
    op = hierarchy.fine
    if x is None:
        x = op.new_vector("x")
        dirichlet = op.layout_u.dirichlet
        for u, f in zip(x.u, b.u):
            u.data[dirichlet] = f.values[dirichlet]

    history: List[Tuple[float, float]] = []
    for cycle in range(max_cycles + 1):
        norms = residual_norms(op, x, b)
        history.append(norms)
        logger.debug(f"Reference cycle {cycle}: |r_u| = {norms[0]:.3e}, |r_p| = {norms[1]:.3e}")
        if norms[0] < epsilon and norms[1] < epsilon:
            return x, history
        if not np.all(np.isfinite(norms)):
            break
        if cycle < max_cycles:
            variable_v_cycle(hierarchy, hierarchy.max_level, hierarchy.max_level, params, x, b)
    raise ConvergenceError(f"residual {history[-1]} above {epsilon} after {len(history) - 1} cycles", history)
