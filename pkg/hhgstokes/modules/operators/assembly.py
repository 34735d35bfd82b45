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
Element-by-element operations on the micro-elements of a level. All
micro-elements of one congruence class inside one macro-cell share their
local matrices, so everything here loops over (macro-cell, class) blocks.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from hhgstokes.modules.fem.fem_local import (
    AffineMap,
    Space,
    local_divergence,
    local_mass,
    local_pspg,
    local_stiffness,
)
from hhgstokes.modules.mesh.dof_layout import DofLayout
from hhgstokes.modules.mesh.macro_mesh import PrimitiveGraph
from hhgstokes.modules.mesh.refinement import MicroCellType, micro_cell_arrays


@dataclass
class ClassMatrices:
    amap: AffineMap
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    M_u: np.ndarray
    M_p: np.ndarray


def macro_points(vertices: np.ndarray, lattice: np.ndarray, resolution: int) -> np.ndarray:
    """Physical images of lattice coordinates inside a macro-cell."""
    v = np.asarray(vertices, dtype=np.float64)
    return v[0] + (np.asarray(lattice, dtype=np.float64) / resolution) @ (v[1:] - v[0])


def cell_class_matrices(graph: PrimitiveGraph, level: int, velocity_degree: int) -> Dict[Tuple[int, int], ClassMatrices]:
    """Local matrices of every (macro-cell, micro-class) pair of ``level``."""
    verts, kinds = micro_cell_arrays(level)
    n = 2**level
    space_u = Space(velocity_degree)
    out = {}
    for c, cell in enumerate(graph.mesh.cells):
        macro = graph.mesh.vertices[cell]
        for kind in MicroCellType:
            hit = np.flatnonzero(kinds == int(kind))
            if len(hit) == 0:
                continue
            amap = AffineMap.from_vertices(macro_points(macro, verts[hit[0]], n))
            out[(c, int(kind))] = ClassMatrices(
                amap=amap,
                A=local_stiffness(space_u, amap).entries,
                B=local_divergence(amap, space_u).entries,
                C=local_pspg(amap).entries,
                M_u=local_mass(space_u, amap).entries,
                M_p=local_mass(Space.P1, amap).entries,
            )
    return out


def block_locals(mats: Dict[Tuple[int, int], ClassMatrices], block: str) -> Dict[Tuple[int, int], np.ndarray]:
    """
    Local matrices of one operator block keyed like ``mats``.

    ``block`` is one of A, B0..B2, BT0..BT2, C, M_u, M_p.
    """
    if block in ("A", "C", "M_u", "M_p"):
        return {key: getattr(m, block) for key, m in mats.items()}
    if block.startswith("BT"):
        d = int(block[2:])
        return {key: m.B[d].T for key, m in mats.items()}
    if block.startswith("B"):
        d = int(block[1:])
        return {key: m.B[d] for key, m in mats.items()}
    raise KeyError(f"unknown block '{block}'")


def element_matvec(
    row_layout: DofLayout,
    col_layout: DofLayout,
    local: Dict[Tuple[int, int], np.ndarray],
    x: np.ndarray,
) -> np.ndarray:
    """y = sum over elements of R_e^T K_e C_e x."""
    y = np.zeros(row_layout.num_dofs)
    for c, kind, start, stop in row_layout.element_blocks:
        K = local[(c, kind)]
        contrib = x[col_layout.elements[start:stop]] @ K.T
        y += np.bincount(row_layout.elements[start:stop].ravel(), weights=contrib.ravel(), minlength=len(y))
    return y


def element_quadratic_form(layout: DofLayout, local: Dict[Tuple[int, int], np.ndarray], x: np.ndarray) -> float:
    """x^T K x accumulated element by element."""
    total = 0.0
    for c, kind, start, stop in layout.element_blocks:
        X = x[layout.elements[start:stop]]
        total += float(np.einsum("ea,ab,eb->", X, local[(c, kind)], X))
    return total


def assemble(
    row_layout: DofLayout,
    col_layout: DofLayout,
    local: Dict[Tuple[int, int], np.ndarray],
    element_mask: Optional[np.ndarray] = None,
) -> sp.csr_matrix:
    """Sparse matrix of an element-wise operator, optionally from a subset of elements."""
    rows, cols, vals = [], [], []
    for c, kind, start, stop in row_layout.element_blocks:
        re = row_layout.elements[start:stop]
        ce = col_layout.elements[start:stop]
        if element_mask is not None:
            keep = element_mask[start:stop]
            re, ce = re[keep], ce[keep]
        if len(re) == 0:
            continue
        K = local[(c, kind)]
        rows.append(np.repeat(re, ce.shape[1], axis=1).ravel())
        cols.append(np.tile(ce, (1, re.shape[1])).ravel())
        vals.append(np.broadcast_to(K.ravel(), (len(re), K.size)).ravel())
    shape = (row_layout.num_dofs, col_layout.num_dofs)
    if not rows:
        return sp.csr_matrix(shape)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
    return mat.tocsr()


def mask_matrix(mat: sp.csr_matrix, rows: Optional[np.ndarray] = None, cols: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """Keeps only the selected rows/columns (boolean masks), dropping everything else."""
    out = mat
    if rows is not None:
        out = sp.diags(rows.astype(np.float64)) @ out
    if cols is not None:
        out = out @ sp.diags(cols.astype(np.float64))
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    out.sort_indices()
    return out
