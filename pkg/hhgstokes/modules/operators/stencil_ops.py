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
    The discrete Stokes operator of one level, applied matrix-free. Rows of
    dofs strictly inside a macro-cell use the constant group stencils of that
    cell; rows on macro faces, edges and vertices (and every row on levels
    below 2) use sparse rows assembled from the adjacent micro-elements.
    Dirichlet velocity dofs are eliminated symmetrically: identity rows in A,
    zero columns everywhere, the boundary data moved into the right-hand side.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from hhgstokes.modules.cost.cost_model import MIN_STENCIL_LEVEL, DiscretizationKind, WorkLedger
from hhgstokes.modules.fem.fem_local import Space, load_vectors, pspg_load_vectors
from hhgstokes.modules.mesh.dof_layout import P2_EDGE_PAIRS, DofLayout, build_dof_layout
from hhgstokes.modules.mesh.macro_mesh import PrimitiveGraph, PrimitiveKind
from hhgstokes.modules.mesh.refinement import DofGroup, LevelError, micro_cell_arrays, parity_groups
from hhgstokes.modules.operators.assembly import (
    ClassMatrices,
    assemble,
    block_locals,
    cell_class_matrices,
    element_matvec,
    macro_points,
    mask_matrix,
)
from hhgstokes.modules.operators.grid_function import GridFunction, SpaceMismatchError, StokesVector
from hhgstokes.modules.solver.kernels import stencil_apply
from hhgstokes.utils.constants import P1_REPRESENTATIVE_NODE, P2_REPRESENTATIVE_NODES

logger = logging.getLogger(__name__)

VELOCITY_BLOCKS = ("A", "BT0", "BT1", "BT2")
PRESSURE_BLOCKS = ("B0", "B1", "B2", "C")


class AssemblyError(RuntimeError):
    """Inconsistent operator data, e.g. a zero diagonal or an exceeded export cap."""


@dataclass
class GroupStencil:
    """One constant interior row of a block inside one macro-cell.

    Offsets are given on the finest lattice of the discretization (the
    velocity lattice); ``sources`` holds the dof group of each coupled dof.
    """

    block: str
    target: DofGroup
    cell: int
    offsets: np.ndarray
    weights: np.ndarray
    sources: np.ndarray

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def center(self) -> int:
        hit = np.flatnonzero(~self.offsets.any(axis=1))
        return int(hit[0]) if len(hit) else -1

    def count(self, source: DofGroup) -> int:
        return int(np.sum(self.sources == int(source)))

    def by_source(self) -> Dict[DofGroup, Tuple[np.ndarray, np.ndarray]]:
        out = {}
        for g in DofGroup:
            sel = self.sources == int(g)
            if sel.any():
                out[g] = (self.offsets[sel], self.weights[sel])
        return out


@dataclass
class InteriorRows:
    """Cell-owned rows of one group: fine-lattice coordinates and global ids."""

    group: DofGroup
    coords: np.ndarray
    ids: np.ndarray


@dataclass
class InterfaceClass:
    """Free velocity rows owned by one primitive kind, split into the block on
    these rows and the couplings to everything else."""

    kind: PrimitiveKind
    rows: np.ndarray
    diag_block: sp.csr_matrix
    off_block: sp.csr_matrix


@lru_cache(maxsize=32)
def _fine_nodes(level: int, degree: int, velocity_degree: int) -> np.ndarray:
    """Micro-element nodes on the finest lattice, shape (N, 4|10, 3)."""
    verts, _ = micro_cell_arrays(level)
    verts = np.asarray(verts)
    if degree == 1:
        nodes = velocity_degree * verts
    else:
        mids = [verts[:, a] + verts[:, b] for a, b in P2_EDGE_PAIRS]
        nodes = np.concatenate([2 * verts, np.stack(mids, axis=1)], axis=1)
    nodes.setflags(write=False)
    return nodes


class StokesOperator:
    """
    Block operator [A B^T; B -C] of one level.

    Args:
        graph (PrimitiveGraph): macro primitives.
        level (int): refinement level.
        kind (DiscretizationKind): P1P1 (stabilized) or P2P1 (Taylor-Hood).
        ledger (WorkLedger, optional): receives the flop counts of every application.
    """

    def __init__(
        self,
        graph: PrimitiveGraph,
        level: int,
        kind: DiscretizationKind,
        ledger: Optional[WorkLedger] = None,
    ):
        self.graph = graph
        self.level = int(level)
        self.kind = DiscretizationKind.parse(kind)
        self.ledger = ledger
        self.layout_u = build_dof_layout(graph, self.level, self.kind.velocity_degree)
        self.layout_p = build_dof_layout(graph, self.level, 1)
        self.resolution = self.layout_u.resolution
        self.pressure_stride = self.resolution // self.layout_p.resolution
        self.matrices: Dict[Tuple[int, int], ClassMatrices] = cell_class_matrices(
            graph, self.level, self.kind.velocity_degree
        )
        self.uses_stencils = self.level >= MIN_STENCIL_LEVEL
        self.blocks = VELOCITY_BLOCKS + PRESSURE_BLOCKS if self.kind.stabilized else VELOCITY_BLOCKS + PRESSURE_BLOCKS[:3]

        self.free_u = self.layout_u.free
        self.interior_u = self.layout_u.cell_interior if self.uses_stencils else np.zeros(self.layout_u.num_dofs, bool)
        self.interior_p = self.layout_p.cell_interior if self.uses_stencils else np.zeros(self.layout_p.num_dofs, bool)

        self.stencils: List[Dict[str, Dict[DofGroup, GroupStencil]]] = []
        self.interior_rows: Dict[str, List[List[InteriorRows]]] = {"u": [], "p": []}
        if self.uses_stencils:
            self._build_stencils()
        self.interface = self._build_interface()
        self.gs_classes = self._build_gs_classes()

        ones = np.ones(self.layout_p.num_dofs)
        self.pressure_mass = element_matvec(self.layout_p, self.layout_p, block_locals(self.matrices, "M_p"), ones)
        logger.debug(
            f"Operator {self.kind.value} level {self.level}: {self.layout_u.num_dofs} velocity dofs "
            f"per component, {self.layout_p.num_dofs} pressure dofs"
        )

    # ------------------------------------------------------------------ setup

    def _representative(self, space: str, group: DofGroup) -> np.ndarray:
        if space == "p":
            return self.pressure_stride * np.asarray(P1_REPRESENTATIVE_NODE)
        if self.kind.velocity_degree == 2:
            return np.asarray(P2_REPRESENTATIVE_NODES[DofGroup(group).name])
        return np.asarray(P1_REPRESENTATIVE_NODE)

    def compute_stencil(self, cell: int, block: str, target: DofGroup) -> GroupStencil:
        """Sums the local rows of all micro-elements around a representative interior dof."""
        _, kinds = micro_cell_arrays(self.level)
        row_space = "u" if block in VELOCITY_BLOCKS else "p"
        col_space = "p" if block.startswith("BT") or block == "C" else "u"
        degree = {"u": self.kind.velocity_degree, "p": 1}
        row_nodes = _fine_nodes(self.level, degree[row_space], self.kind.velocity_degree)
        col_nodes = _fine_nodes(self.level, degree[col_space], self.kind.velocity_degree)
        rep = self._representative(row_space, target)
        local = block_locals(self.matrices, block)

        acc: Dict[Tuple[int, int, int], float] = defaultdict(float)
        elems, rows = np.nonzero((row_nodes == rep).all(axis=2))
        for e, a in zip(elems, rows):
            K = local[(cell, int(kinds[e]))]
            for b in range(col_nodes.shape[1]):
                acc[tuple(int(v) for v in col_nodes[e, b] - rep)] += K[a, b]
        offsets = np.array(sorted(acc), dtype=np.int64).reshape(-1, 3)
        weights = np.array([acc[tuple(o)] for o in offsets.tolist()], dtype=np.float64)
        if degree[col_space] == 2:
            sources = parity_groups(offsets + rep)
        else:
            sources = np.zeros(len(offsets), dtype=np.int64)
        return GroupStencil(block, DofGroup(target), cell, offsets, weights, sources)

    def _build_stencils(self) -> None:
        for cell in range(self.graph.mesh.num_cells):
            rows = {}
            for space, layout, stride in (("u", self.layout_u, 1), ("p", self.layout_p, self.pressure_stride)):
                start, stop = layout.owned_range(PrimitiveKind.CELL, cell)
                coords = layout.cell_owned_coords[cell]
                rows[space] = []
                for group, sl in layout.group_slices(cell).items():
                    rows[space].append(
                        InteriorRows(group, np.ascontiguousarray(stride * coords[sl]), np.arange(start, stop)[sl])
                    )
                self.interior_rows[space].append(rows[space])
            stencils = {}
            for block in self.blocks:
                space = "u" if block in VELOCITY_BLOCKS else "p"
                stencils[block] = {r.group: self.compute_stencil(cell, block, r.group) for r in rows[space]}
            self.stencils.append(stencils)

    def _build_interface(self) -> Dict[str, sp.csr_matrix]:
        lu, lp = self.layout_u, self.layout_p
        if self.uses_stencils:
            boundary_u = ~self.interior_u[lu.elements].all(axis=1)
            boundary_p = ~self.interior_p[lp.elements].all(axis=1)
            element_mask = boundary_u | boundary_p
        else:
            element_mask = None
        rows_u = self.free_u & ~self.interior_u
        rows_p = ~self.interior_p
        out = {}
        for block in self.blocks:
            local = block_locals(self.matrices, block)
            if block == "A":
                mat = assemble(lu, lu, local, element_mask)
                out[block] = mask_matrix(mat, rows_u, self.free_u)
            elif block.startswith("BT"):
                out[block] = mask_matrix(assemble(lu, lp, local, element_mask), rows_u, None)
            elif block.startswith("B"):
                out[block] = mask_matrix(assemble(lp, lu, local, element_mask), rows_p, self.free_u)
            else:
                out[block] = mask_matrix(assemble(lp, lp, local, element_mask), rows_p, None)
        return out

    def _build_gs_classes(self) -> List[InterfaceClass]:
        lu = self.layout_u
        A = self.interface["A"]
        kinds = [PrimitiveKind.VERTEX, PrimitiveKind.EDGE, PrimitiveKind.FACE]
        if not self.uses_stencils:
            kinds.append(PrimitiveKind.CELL)
        classes = []
        for kind in kinds:
            rows = np.flatnonzero((lu.owner_kind == int(kind)) & self.free_u & ~self.interior_u)
            if len(rows) == 0:
                continue
            sub = A[rows]
            in_class = np.zeros(lu.num_dofs, dtype=bool)
            in_class[rows] = True
            diag_block = sp.csr_matrix(sub[:, rows])
            diag_block.sort_indices()
            if np.any(diag_block.diagonal() == 0.0):
                bad = rows[np.flatnonzero(diag_block.diagonal() == 0.0)[0]]
                raise AssemblyError(f"zero diagonal in A at velocity dof {bad} (level {self.level})")
            off_block = mask_matrix(sp.csr_matrix(sub), None, ~in_class)
            classes.append(InterfaceClass(kind, rows, diag_block, off_block))
        for cell_stencils in self.stencils:
            for group, st in cell_stencils["A"].items():
                if st.center < 0 or st.weights[st.center] == 0.0:
                    raise AssemblyError(f"zero diagonal in the {group.name} stencil of cell {st.cell}")
        return classes

    # ------------------------------------------------------------- utilities

    def record(self, interior: int = 0, interface: int = 0) -> None:
        if self.ledger is not None:
            self.ledger.record(interior, interface)

    def layout_of(self, block: str) -> Tuple[DofLayout, DofLayout]:
        """(row layout, column layout) of a block."""
        lu, lp = self.layout_u, self.layout_p
        if block == "A":
            return lu, lu
        if block.startswith("BT"):
            return lu, lp
        if block.startswith("B"):
            return lp, lu
        return lp, lp

    def new_vector(self, name: str = "") -> StokesVector:
        return StokesVector.zeros(self.layout_u, self.layout_p, name)

    def closure_of(self, gf: GridFunction, cell: int) -> np.ndarray:
        return gf.closure(cell, self.resolution, zero_dirichlet=gf.layout is self.layout_u)

    def apply_interior(self, block: str, cell: int, closure: np.ndarray, out: np.ndarray) -> None:
        """Adds the stencil rows of ``block`` in ``cell`` to the full-length ``out``."""
        space = "u" if block in VELOCITY_BLOCKS else "p"
        flops = 0
        for rows in self.interior_rows[space][cell]:
            st = self.stencils[cell][block][rows.group]
            tmp = np.empty(len(rows.ids))
            stencil_apply(closure, rows.coords, st.offsets, st.weights, tmp)
            out[rows.ids] += tmp
            flops += 2 * st.size * len(rows.ids)
        self.record(interior=flops)

    def apply_interface(self, block: str, x: np.ndarray) -> np.ndarray:
        mat = self.interface[block]
        self.record(interface=2 * mat.nnz)
        return mat @ x

    def dirichlet_values(self, gf: GridFunction) -> np.ndarray:
        return np.where(self.layout_u.dirichlet, gf.values, 0.0)


def _check_space(op: StokesOperator, gf: GridFunction, layout: DofLayout, what: str) -> None:
    if gf.layout is not layout:
        raise SpaceMismatchError(
            f"{what}: {gf!r} does not live on the {op.kind.value} level-{op.level} layout (P{layout.degree})"
        )


def assemble_stencils(graph: PrimitiveGraph, level: int, kind: DiscretizationKind, ledger: Optional[WorkLedger] = None) -> StokesOperator:
    """
    Builds the matrix-free operator of ``level``.

    Raises:
        LevelError: below level 2, where macro-cells have no interior stencil rows.
    """
    if level < MIN_STENCIL_LEVEL:
        raise LevelError(f"stencils need level >= {MIN_STENCIL_LEVEL}, got {level}")
    return StokesOperator(graph, level, kind, ledger)


def apply_block(
    op: StokesOperator,
    block: str,
    src: GridFunction,
    dst: GridFunction,
    accumulate: bool = False,
) -> None:
    """
    dst = block * src on all owned dofs (or dst += with ``accumulate``).

    ``block`` is one of A, B0, B1, B2, BT0, BT1, BT2, C. Dirichlet rows of A
    are identity rows, Dirichlet rows of B^T are zero.
    """
    if block not in op.blocks and block != "C":
        raise KeyError(f"unknown block '{block}'")
    row_layout, col_layout = op.layout_of(block)
    _check_space(op, src, col_layout, f"source of {block}")
    _check_space(op, dst, row_layout, f"destination of {block}")
    if block == "C" and not op.kind.stabilized:
        if not accumulate:
            dst.data[:] = 0.0
        return

    x = src.values
    if col_layout is op.layout_u:
        x = np.where(op.free_u, x, 0.0)
    y = op.apply_interface(block, x)
    if op.uses_stencils:
        for cell in range(op.graph.mesh.num_cells):
            op.apply_interior(block, cell, op.closure_of(src, cell), y)
    if block == "A":
        y[~op.free_u] = src.values[~op.free_u]
    if accumulate:
        dst.data[:] += y
    else:
        dst.data[:] = y


def apply_stokes(op: StokesOperator, x: StokesVector, y: StokesVector) -> None:
    """y = [A B^T; B -C] x, one work unit on the interior rows."""
    for gf in x.components:
        gf.ghost_update()
    lu, lp = op.layout_u, op.layout_p
    xu = [np.where(op.free_u, u.values, 0.0) for u in x.u]
    yu = [op.apply_interface("A", xu[d]) + op.apply_interface(f"BT{d}", x.p.values) for d in range(3)]
    yp = sum(op.apply_interface(f"B{d}", xu[d]) for d in range(3))
    if op.kind.stabilized:
        yp = yp - op.apply_interface("C", x.p.values)
    if op.uses_stencils:
        for cell in range(op.graph.mesh.num_cells):
            closure_p = op.closure_of(x.p, cell)
            for d in range(3):
                closure_u = op.closure_of(x.u[d], cell)
                op.apply_interior("A", cell, closure_u, yu[d])
                op.apply_interior(f"BT{d}", cell, closure_p, yu[d])
                op.apply_interior(f"B{d}", cell, closure_u, yp)
            if op.kind.stabilized:
                neg = np.zeros(lp.num_dofs)
                op.apply_interior("C", cell, closure_p, neg)
                yp -= neg
    for d in range(3):
        yu[d][~op.free_u] = x.u[d].values[~op.free_u]
        _check_space(op, y.u[d], lu, "velocity result")
        y.u[d].data[:] = yu[d]
    _check_space(op, y.p, lp, "pressure result")
    y.p.data[:] = yp


def residual(op: StokesOperator, x: StokesVector, b: StokesVector, r: Optional[StokesVector] = None) -> StokesVector:
    """r = b - A x; Dirichlet rows vanish when x carries the boundary values of b."""
    r = r if r is not None else op.new_vector("r")
    apply_stokes(op, x, r)
    for rc, bc in zip(r.components, b.components):
        rc.data[:] = bc.values - rc.values
    return r


def residual_norms(op: StokesOperator, x: StokesVector, b: StokesVector) -> Tuple[float, float]:
    """Euclidean norms of the velocity and pressure residual blocks."""
    r = residual(op, x, b)
    ru = float(np.sqrt(sum(float(u.values @ u.values) for u in r.u)))
    return ru, r.p.norm()


def project_pressure_mean_zero(op: StokesOperator, p: GridFunction) -> None:
    """p <- p - (1^T M p / 1^T M 1) 1 with the consistent pressure mass matrix."""
    _check_space(op, p, op.layout_p, "pressure")
    m = op.pressure_mass
    p.data[:] -= float(m @ p.values) / float(m.sum())


def pressure_mean(op: StokesOperator, p: GridFunction) -> float:
    return float(op.pressure_mass @ p.values) / float(op.pressure_mass.sum())


def _element_origins(op: StokesOperator, cell: int, start: int, stop: int, offset: int) -> np.ndarray:
    verts, _ = micro_cell_arrays(op.level)
    macro = op.graph.mesh.vertices[op.graph.mesh.cells[cell]]
    return macro_points(macro, np.asarray(verts)[start - offset : stop - offset, 0], 2**op.level)


def assemble_rhs(
    op: StokesOperator,
    forcing: Callable[[np.ndarray], np.ndarray],
    boundary: Callable[[np.ndarray], np.ndarray],
) -> StokesVector:
    """
    Right-hand side (f, g) with the Dirichlet data lifted out.

    Args:
        op (StokesOperator): level operator.
        forcing: vectorized body force, points (P, 3) -> (P, 3).
        boundary: vectorized velocity boundary data, points (P, 3) -> (P, 3).

    Returns:
        StokesVector: f holds the boundary values on Dirichlet rows.
    """
    lu, lp = op.layout_u, op.layout_p
    space_u = Space(op.kind.velocity_degree)
    f = np.zeros((3, lu.num_dofs))
    g = np.zeros(lp.num_dofs)
    per_cell = len(micro_cell_arrays(op.level)[1])
    for c, kind, start, stop in lu.element_blocks:
        mats = op.matrices[(c, kind)]
        offset = c * per_cell
        origins = _element_origins(op, c, start, stop, offset)
        loads = load_vectors(space_u, mats.amap, origins, forcing)
        idx = lu.elements[start:stop].ravel()
        for d in range(3):
            f[d] += np.bincount(idx, weights=loads[:, :, d].ravel(), minlength=lu.num_dofs)
        if op.kind.stabilized:
            pspg = pspg_load_vectors(mats.amap, origins, forcing)
            g -= np.bincount(lp.elements[start:stop].ravel(), weights=pspg.ravel(), minlength=lp.num_dofs)

    w = np.asarray(boundary(lu.points), dtype=np.float64).reshape(-1, 3).T
    w_d = np.where(lu.dirichlet, w, 0.0)
    stiff = block_locals(op.matrices, "A")
    for d in range(3):
        f[d] -= element_matvec(lu, lu, stiff, w_d[d])
        g -= element_matvec(lp, lu, block_locals(op.matrices, f"B{d}"), w_d[d])
        f[d][lu.dirichlet] = w_d[d][lu.dirichlet]
    if op.graph.fully_dirichlet:
        g -= g.mean()

    b = op.new_vector("b")
    for d in range(3):
        b.u[d].data[:] = f[d]
    b.p.data[:] = g
    return b


def assembled_block(op: StokesOperator, block: str) -> sp.csr_matrix:
    """Globally assembled block with the same Dirichlet convention as :func:`apply_block`."""
    row_layout, col_layout = op.layout_of(block)
    local = block_locals(op.matrices, block)
    mat = assemble(row_layout, col_layout, local)
    free = op.free_u
    if block == "A":
        mat = mask_matrix(mat, free, free) + sp.diags((~free).astype(np.float64))
    elif block.startswith("BT"):
        mat = mask_matrix(mat, free, None)
    elif block.startswith("B"):
        mat = mask_matrix(mat, None, free)
    return sp.csr_matrix(mat)


def export_assembled(op: StokesOperator, cap: Optional[int] = 3) -> sp.csr_matrix:
    """
    The full saddle-point matrix in unknown order (u0, u1, u2, p).

    Raises:
        AssemblyError: if the level exceeds ``cap`` (None disables the check).
    """
    if cap is not None and op.level > cap:
        raise AssemblyError(f"assembled export limited to level {cap}, operator is on level {op.level}")
    A = assembled_block(op, "A")
    nu, np_ = op.layout_u.num_dofs, op.layout_p.num_dofs
    zero = sp.csr_matrix((nu, nu))
    if op.kind.stabilized:
        C = assembled_block(op, "C")
    else:
        C = sp.csr_matrix((np_, np_))
    bt = [assembled_block(op, f"BT{d}") for d in range(3)]
    b = [assembled_block(op, f"B{d}") for d in range(3)]
    mat = sp.bmat(
        [
            [A, zero, zero, bt[0]],
            [zero, A, zero, bt[1]],
            [zero, zero, A, bt[2]],
            [b[0], b[1], b[2], -C],
        ],
        format="csr",
    )
    mat.sort_indices()
    return mat


def pspg_diagonal(op: StokesOperator) -> np.ndarray:
    """Diagonal of the stabilization matrix of the pressure space (also for P2P1)."""
    C = assemble(op.layout_p, op.layout_p, block_locals(op.matrices, "C"))
    return C.diagonal()
