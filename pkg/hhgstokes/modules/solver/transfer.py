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
    Grid transfers between adjacent levels. Prolongation evaluates the
    coarse finite element function at the fine nodes (linear or quadratic
    interpolation, element by element); restriction is its exact transpose.
"""

from functools import lru_cache
from itertools import product
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from hhgstokes.modules.fem.fem_local import Space, basis_values
from hhgstokes.modules.mesh.dof_layout import DofLayout
from hhgstokes.modules.mesh.refinement import LevelError, micro_cell_arrays
from hhgstokes.modules.operators.grid_function import GridFunction


@lru_cache(maxsize=None)
def _child_points(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integer barycentric numerators of the fine nodes inside one coarse element
    (denominator 2 * degree) and the coarse basis values there.
    """
    denom = 2 * degree
    betas = np.array([b for b in product(range(denom + 1), repeat=4) if sum(b) == denom], dtype=np.int64)
    lam = betas / denom
    weights = basis_values(Space(degree), lam[:, 1:])
    weights[np.abs(weights) < 1e-14] = 0.0
    betas.setflags(write=False)
    weights.setflags(write=False)
    return betas, weights


def prolongation_matrix(coarse: DofLayout, fine: DofLayout) -> sp.csr_matrix:
    """
    Interpolation from ``coarse`` to the next finer layout of the same degree.

    Returns:
        sp.csr_matrix: shape (fine dofs, coarse dofs).
    """
    if fine.level != coarse.level + 1 or fine.degree != coarse.degree or fine.graph is not coarse.graph:
        raise LevelError(
            f"prolongation needs adjacent levels of one space, got P{coarse.degree} level {coarse.level} "
            f"and P{fine.degree} level {fine.level}"
        )
    betas, weights = _child_points(coarse.degree)
    verts, _ = micro_cell_arrays(coarse.level)
    verts = np.asarray(verts)
    # fine lattice position of a child point: sum_i beta_i * coarse micro-vertex i
    positions = np.einsum("pv,evx->epx", betas, verts)
    per_cell = len(verts)

    fine_ids, elem_ids = [], []
    for c in range(fine.graph.mesh.num_cells):
        lat = fine.cell_lattice[c]
        fine_ids.append(lat[positions[..., 0], positions[..., 1], positions[..., 2]])
        elem_ids.append(np.arange(c * per_cell, (c + 1) * per_cell))
    fine_ids = np.concatenate(fine_ids, axis=0)
    elem_ids = np.concatenate(elem_ids)
    n_points = betas.shape[0]

    flat = fine_ids.ravel()
    rows, first = np.unique(flat, return_index=True)
    if len(rows) != fine.num_dofs:
        raise LevelError("prolongation does not cover every fine dof")
    elem = elem_ids[first // n_points]
    point = first % n_points
    cols = coarse.elements[elem]
    vals = weights[point]
    mat = sp.csr_matrix(
        (vals.ravel(), (np.repeat(rows, cols.shape[1]), cols.ravel())), shape=(fine.num_dofs, coarse.num_dofs)
    )
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def prolongate(P: sp.csr_matrix, coarse: GridFunction, fine: GridFunction, add: bool = False) -> None:
    """fine = P coarse (fine += P coarse with ``add``)."""
    if P.shape != (len(fine), len(coarse)):
        raise LevelError(f"prolongation of shape {P.shape} does not map {coarse!r} to {fine!r}")
    if add:
        fine.data[:] += P @ coarse.values
    else:
        fine.data[:] = P @ coarse.values


def restrict(P: sp.csr_matrix, fine: GridFunction, coarse: GridFunction) -> None:
    """coarse = P^T fine."""
    if P.shape != (len(fine), len(coarse)):
        raise LevelError(f"restriction of shape {P.shape[::-1]} does not map {fine!r} to {coarse!r}")
    coarse.data[:] = P.T @ fine.values
