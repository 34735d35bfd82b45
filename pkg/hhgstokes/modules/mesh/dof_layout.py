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
    Global numbering of the refined unknowns of one finite element space on
    one level. Every lattice node is owned by the lowest-dimensional macro
    primitive containing it; storage runs over vertices, edges, faces, then
    cells, and inside each primitive by dof group and lexicographic (k, j, i)
    order. The layout also records per-cell lattice maps, the micro-element
    connectivity and the ghost sets each primitive mirrors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from hhgstokes.modules.mesh.macro_mesh import PrimitiveGraph, PrimitiveKind
from hhgstokes.modules.mesh.refinement import (
    DofGroup,
    check_level,
    lattice_points,
    micro_cell_arrays,
    parity_groups,
)

logger = logging.getLogger(__name__)

# local P2 edge nodes follow this vertex pairing after the 4 vertex nodes
P2_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass
class GhostSet:
    """Neighbor-owned dofs a primitive mirrors, split by closure membership."""

    kind: PrimitiveKind
    index: int
    inward: np.ndarray
    outward: np.ndarray

    @property
    def size(self) -> int:
        return len(self.inward) + len(self.outward)


@dataclass
class DofLayout:
    graph: PrimitiveGraph
    level: int
    degree: int
    num_dofs: int
    owner_kind: np.ndarray
    owner_index: np.ndarray
    group: np.ndarray
    points: np.ndarray
    dirichlet: np.ndarray
    primitive_ranges: Dict[Tuple[int, int], Tuple[int, int]]
    cell_lattice: List[np.ndarray]
    cell_owned_coords: List[np.ndarray]
    cell_ghost_ids: List[np.ndarray]
    cell_ghost_coords: List[np.ndarray]
    elements: np.ndarray
    element_blocks: List[Tuple[int, int, int, int]]
    _incidence: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def resolution(self) -> int:
        """Lattice intervals per macro edge."""
        return self.degree * 2**self.level

    @property
    def nodes_per_element(self) -> int:
        return 4 if self.degree == 1 else 10

    @property
    def cell_interior(self) -> np.ndarray:
        return self.owner_kind == int(PrimitiveKind.CELL)

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet

    def owned_range(self, kind: PrimitiveKind, index: int) -> Tuple[int, int]:
        return self.primitive_ranges[(int(kind), int(index))]

    def owned(self, kind: PrimitiveKind, index: int) -> np.ndarray:
        start, stop = self.owned_range(kind, index)
        return np.arange(start, stop, dtype=np.int64)

    def group_slices(self, cell: int) -> Dict[DofGroup, slice]:
        """Per-group slices into the owned block of a macro-cell (relative to its start)."""
        start, stop = self.owned_range(PrimitiveKind.CELL, cell)
        groups = self.group[start:stop]
        slices = {}
        for g in DofGroup:
            hit = np.flatnonzero(groups == int(g))
            if len(hit):
                slices[g] = slice(int(hit[0]), int(hit[-1]) + 1)
        return slices

    def incidence(self) -> sp.csr_matrix:
        """Element-to-dof incidence, shape (num_elements, num_dofs)."""
        if self._incidence is None:
            ne, nl = self.elements.shape
            rows = np.repeat(np.arange(ne), nl)
            data = np.ones(ne * nl, dtype=np.int8)
            self._incidence = sp.csr_matrix((data, (rows, self.elements.ravel())), shape=(ne, self.num_dofs))
        return self._incidence

    def closure_primitives(self, kind: PrimitiveKind, index: int) -> List[Tuple[int, int]]:
        """The primitive itself plus all lower-dimensional primitives in its closure."""
        out = [(int(kind), int(index))]
        for k, ids in self.graph.lower_neighbors(kind, index).items():
            out.extend((int(k), int(i)) for i in ids)
        return out


def _element_nodes(level: int, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Micro-element node positions in the space lattice, shape (N, 4|10, 3), and class ids."""
    verts, kinds = micro_cell_arrays(level)
    if degree == 1:
        return np.array(verts), np.array(kinds)
    mids = [verts[:, a] + verts[:, b] for a, b in P2_EDGE_PAIRS]
    return np.concatenate([2 * verts, np.stack(mids, axis=1)], axis=1), np.array(kinds)


def build_dof_layout(graph: PrimitiveGraph, level: int, degree: int) -> DofLayout:
    """
    Numbers the unknowns of the degree-``degree`` Lagrange space on ``level``.

    Args:
        graph (PrimitiveGraph): the macro primitives.
        level (int): refinement level.
        degree (int): 1 (linear) or 2 (quadratic).

    Returns:
        DofLayout: the global numbering with ownership, lattice maps and elements.
    """
    level = check_level(level)
    assert degree in (1, 2), f"unsupported polynomial degree {degree}"
    mesh = graph.mesh
    m = degree * 2**level

    owner_kind, owner_index, groups, ranges = [], [], [], {}
    vertex_dof = np.arange(mesh.num_vertices, dtype=np.int64)
    next_id = mesh.num_vertices
    owner_kind.append(np.full(mesh.num_vertices, int(PrimitiveKind.VERTEX)))
    owner_index.append(np.arange(mesh.num_vertices))
    groups.append(np.zeros(mesh.num_vertices, dtype=np.int64))
    for v in range(mesh.num_vertices):
        ranges[(int(PrimitiveKind.VERTEX), v)] = (v, v + 1)

    def group_of(coords: np.ndarray) -> np.ndarray:
        if degree == 1:
            return np.zeros(len(coords), dtype=np.int64)
        padded = np.zeros((len(coords), 3), dtype=np.int64)
        padded[:, : coords.shape[1]] = coords
        return parity_groups(padded)

    def assign(kind: PrimitiveKind, index: int, coords: np.ndarray) -> np.ndarray:
        # coords are (i[, j[, k]]) local lattice coordinates, sorted by (group, k, j, i)
        nonlocal next_id
        g = group_of(coords)
        order = np.lexsort(tuple(coords[:, d] for d in range(coords.shape[1])) + (g,))
        ids = np.empty(len(coords), dtype=np.int64)
        ids[order] = np.arange(next_id, next_id + len(coords))
        ranges[(int(kind), int(index))] = (next_id, next_id + len(coords))
        owner_kind.append(np.full(len(coords), int(kind)))
        owner_index.append(np.full(len(coords), int(index)))
        groups.append(g[order])
        next_id += len(coords)
        return ids

    edge_dofs = []
    t = np.arange(1, m, dtype=np.int64)[:, None]
    for e in range(len(graph.edges)):
        table = np.full(m + 1, -1, dtype=np.int64)
        table[t[:, 0]] = assign(PrimitiveKind.EDGE, e, t)
        edge_dofs.append(table)

    face_dofs = []
    fc = np.array([(i, j) for j in range(1, m) for i in range(1, m - j)], dtype=np.int64).reshape(-1, 2)
    for f in range(len(graph.faces)):
        table = np.full((m + 1, m + 1), -1, dtype=np.int64)
        if len(fc):
            table[fc[:, 0], fc[:, 1]] = assign(PrimitiveKind.FACE, f, fc)
        else:
            ranges[(int(PrimitiveKind.FACE), f)] = (next_id, next_id)
        face_dofs.append(table)

    pts = lattice_points(m)
    weights = np.column_stack([m - pts.sum(axis=1), pts])
    inner = (weights > 0).all(axis=1)
    cell_dofs = []
    for c in range(mesh.num_cells):
        if inner.any():
            cell_dofs.append(assign(PrimitiveKind.CELL, c, pts[inner]))
        else:
            ranges[(int(PrimitiveKind.CELL), c)] = (next_id, next_id)
            cell_dofs.append(np.zeros(0, dtype=np.int64))

    num_dofs = next_id
    owner_kind = np.concatenate(owner_kind).astype(np.int64)
    owner_index = np.concatenate(owner_index).astype(np.int64)
    group = np.concatenate(groups).astype(np.int64)
    points = np.zeros((num_dofs, 3))
    positive = weights > 0
    count = positive.sum(axis=1)

    cell_lattice, cell_owned_coords, cell_ghost_ids, cell_ghost_coords = [], [], [], []
    for c, cell in enumerate(mesh.cells):
        cell = [int(v) for v in cell]
        ids = np.full(len(pts), -1, dtype=np.int64)
        ids[inner] = cell_dofs[c]
        for lv in range(4):
            ids[weights[:, lv] == m] = vertex_dof[cell[lv]]
        for le, (la, lb) in enumerate(P2_EDGE_PAIRS):
            mask = positive[:, la] & positive[:, lb] & (count == 2)
            e = graph.cell_edges[c, le]
            hi = int(graph.edges[e][1])
            ids[mask] = edge_dofs[e][weights[mask, cell.index(hi)]]
        for lf in range(4):
            mask = (count == 3) & (weights[:, lf] == 0)
            f = graph.cell_faces[c, lf]
            h = [int(v) for v in graph.faces[f]]
            ids[mask] = face_dofs[f][weights[mask, cell.index(h[1])], weights[mask, cell.index(h[2])]]
        assert (ids >= 0).all(), f"unnumbered lattice node in cell {c}"

        lattice = np.full((m + 1,) * 3, -1, dtype=np.int64)
        lattice[pts[:, 0], pts[:, 1], pts[:, 2]] = ids
        lattice.setflags(write=False)
        cell_lattice.append(lattice)

        verts = mesh.vertices[cell]
        points[ids] = verts[0] + (pts / m) @ (verts[1:] - verts[0])

        start, stop = ranges[(int(PrimitiveKind.CELL), c)]
        owned = np.empty((stop - start, 3), dtype=np.int64)
        owned[ids[inner] - start] = pts[inner]
        cell_owned_coords.append(owned)
        cell_ghost_ids.append(ids[~inner])
        cell_ghost_coords.append(pts[~inner])

    dirichlet_prim = {
        PrimitiveKind.VERTEX: np.array([graph.is_dirichlet(PrimitiveKind.VERTEX, v) for v in range(mesh.num_vertices)]),
        PrimitiveKind.EDGE: np.array([graph.is_dirichlet(PrimitiveKind.EDGE, e) for e in range(len(graph.edges))]),
        PrimitiveKind.FACE: np.array([graph.is_dirichlet(PrimitiveKind.FACE, f) for f in range(len(graph.faces))]),
    }
    dirichlet = np.zeros(num_dofs, dtype=bool)
    for kind, flags in dirichlet_prim.items():
        sel = owner_kind == int(kind)
        if flags.size:
            dirichlet[sel] = flags[owner_index[sel]]

    nodes, kinds = _element_nodes(level, degree)
    elements, element_blocks = [], []
    offset = 0
    for c in range(mesh.num_cells):
        lat = cell_lattice[c]
        el = lat[nodes[..., 0], nodes[..., 1], nodes[..., 2]]
        elements.append(el)
        for kind in np.unique(kinds):
            sel = np.flatnonzero(kinds == kind)
            element_blocks.append((c, int(kind), offset + int(sel[0]), offset + int(sel[-1]) + 1))
        offset += len(el)

    layout = DofLayout(
        graph=graph,
        level=level,
        degree=degree,
        num_dofs=num_dofs,
        owner_kind=owner_kind,
        owner_index=owner_index,
        group=group,
        points=points,
        dirichlet=dirichlet,
        primitive_ranges=ranges,
        cell_lattice=cell_lattice,
        cell_owned_coords=cell_owned_coords,
        cell_ghost_ids=cell_ghost_ids,
        cell_ghost_coords=cell_ghost_coords,
        elements=np.concatenate(elements, axis=0),
        element_blocks=element_blocks,
    )
    logger.debug(f"P{degree} layout on level {level}: {num_dofs} dofs, {int(dirichlet.sum())} Dirichlet")
    return layout


def ghost_layout(
    layout: DofLayout, kind: PrimitiveKind, group: Optional[DofGroup] = None
) -> Dict[int, GhostSet]:
    """
    Ghost sets of every primitive of ``kind``.

    A primitive mirrors every dof coupled to one of its owned rows (of
    ``group`` if given) through a shared micro-element and not owned by the
    primitive itself. ``inward`` ghosts belong to its own closure, ``outward``
    ghosts to neighbors outside of it.
    """
    kind = PrimitiveKind(kind)
    inc = layout.incidence()
    inc_t = inc.T.tocsr()
    out = {}
    for index in range(layout.graph.count(kind)):
        rows = layout.owned(kind, index)
        if group is not None:
            rows = rows[layout.group[rows] == int(group)]
        if len(rows) == 0:
            empty = np.zeros(0, dtype=np.int64)
            out[index] = GhostSet(kind, index, empty, empty)
            continue
        elems = np.unique(inc_t[rows].indices)
        cols = np.unique(inc[elems].indices)
        start, stop = layout.owned_range(kind, index)
        cols = cols[(cols < start) | (cols >= stop)]
        closure = set(layout.closure_primitives(kind, index))
        in_closure = np.array(
            [(int(k), int(i)) in closure for k, i in zip(layout.owner_kind[cols], layout.owner_index[cols])],
            dtype=bool,
        ).reshape(-1)
        out[index] = GhostSet(kind, index, cols[in_closure], cols[~in_closure])
    return out
