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
    Estimate of the Schur relaxation scalar omega^-1: the largest eigenvalue
    of M_L^-1 (C + B A_s^-1 B^T), where A_s^-1 is one symmetric Gauss-Seidel
    sweep per velocity component from a zero start and M_L the lumped
    pressure mass. Plain power iteration in the M_L inner product.
"""

import logging
from contextlib import nullcontext
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from hhgstokes.modules.operators.grid_function import GridFunction
from hhgstokes.modules.operators.stencil_ops import StokesOperator, apply_block
from hhgstokes.modules.solver.smoothers import symmetric_gauss_seidel

logger = logging.getLogger(__name__)

POWER_ITERATIONS = 100
UNDERFLOW = 1e-200


class OmegaEstimateError(RuntimeError):
    """Power iteration broke down."""


def approximate_schur(op: StokesOperator, q: np.ndarray) -> np.ndarray:
    """(C + B A_s^-1 B^T) q for one pressure vector."""
    p = GridFunction(op.layout_p, "q", q)
    rhs = GridFunction(op.layout_u, "rhs")
    u = GridFunction(op.layout_u, "u")
    out = GridFunction(op.layout_p, "Sq")
    for d in range(3):
        apply_block(op, f"BT{d}", p, rhs)
        u.assign(0.0)
        symmetric_gauss_seidel(op, u, rhs)
        apply_block(op, f"B{d}", u, out, accumulate=d > 0)
    result = out.values.copy()
    if op.kind.stabilized:
        apply_block(op, "C", p, out)
        result += out.values
    return result


def estimate_omega(
    op: StokesOperator,
    iterations: int = POWER_ITERATIONS,
    seed: int = 0,
    fully_dirichlet: Optional[bool] = None,
    progress: bool = False,
) -> Tuple[float, List[float]]:
    """
    Power iteration for omega^-1 on one level.

    Args:
        op (StokesOperator): level operator, level >= 1.
        iterations (int): number of power iterations.
        seed (int): seed of the random start vector.
        fully_dirichlet (bool, optional): project out the constant pressure;
            defaults to the boundary classification of the mesh.
        progress (bool): show a tqdm bar.

    Returns:
        Tuple[float, List[float]]: the last Rayleigh quotient and the whole
        history of Rayleigh quotients.
    """
    assert op.level >= 1, f"omega estimate needs level >= 1, got {op.level}"
    assert iterations > 0, "at least one power iteration is needed"
    fully_dirichlet = op.graph.fully_dirichlet if fully_dirichlet is None else fully_dirichlet
    mass = op.pressure_mass

    def project(v: np.ndarray) -> np.ndarray:
        return v - float(mass @ v) / float(mass.sum()) if fully_dirichlet else v

    rng = np.random.default_rng(seed)
    v = project(rng.standard_normal(op.layout_p.num_dofs))
    history: List[float] = []
    steps = tqdm(range(iterations), desc="omega", disable=not progress)
    with op.ledger.phase("omega") if op.ledger is not None else nullcontext():
        for _ in steps:
            norm = float(np.sqrt(v @ (mass * v)))
            if not np.isfinite(norm) or norm < UNDERFLOW:
                raise OmegaEstimateError(f"power iterate vanished after {len(history)} iterations")
            v = v / norm
            kv = approximate_schur(op, v)
            history.append(float(v @ kv))
            v = project(kv / mass)

    omega_inv = abs(history[-1])
    logger.info(f"Estimated omega^-1 = {omega_inv:.6f} on level {op.level} ({op.kind.value}, {iterations} iterations)")
    return omega_inv, history
