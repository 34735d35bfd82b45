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
    Structured uniform refinement of a single tetrahedron. A macro-cell refined
    ``level`` times carries a barycentric lattice of ``2**level`` intervals per
    edge. Vertex unknowns sit on lattice points, edge unknowns (quadratic
    elements) on the midpoints of the seven micro-edge orientations, and the
    8**level micro-cells fall into six congruence classes.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np


class LevelError(ValueError):
    """Raised for invalid, too coarse or mismatched refinement levels."""


class LatticeIndexError(ValueError):
    """Raised when a micro index lies outside the lattice of its group."""


class DofGroup(IntEnum):
    VERTEX = 0
    X = 1
    Y = 2
    Z = 3
    XY = 4
    XZ = 5
    YZ = 6
    XYZ = 7


EDGE_GROUPS = tuple(g for g in DofGroup if g != DofGroup.VERTEX)

# parity of a node in the doubled lattice identifies its group
GROUP_PARITY: Dict[DofGroup, Tuple[int, int, int]] = {
    DofGroup.VERTEX: (0, 0, 0),
    DofGroup.X: (1, 0, 0),
    DofGroup.Y: (0, 1, 0),
    DofGroup.Z: (0, 0, 1),
    DofGroup.XY: (1, 1, 0),
    DofGroup.XZ: (1, 0, 1),
    DofGroup.YZ: (0, 1, 1),
    DofGroup.XYZ: (1, 1, 1),
}

# micro-edge endpoints relative to the anchor (i, j, k) of an edge dof
GROUP_ENDPOINTS: Dict[DofGroup, Tuple[Tuple[int, int, int], Tuple[int, int, int]]] = {
    DofGroup.X: ((0, 0, 0), (1, 0, 0)),
    DofGroup.Y: ((0, 0, 0), (0, 1, 0)),
    DofGroup.Z: ((0, 0, 0), (0, 0, 1)),
    DofGroup.XY: ((1, 0, 0), (0, 1, 0)),
    DofGroup.XZ: ((1, 0, 0), (0, 0, 1)),
    DofGroup.YZ: ((0, 1, 0), (0, 0, 1)),
    DofGroup.XYZ: ((0, 1, 0), (1, 0, 1)),
}

# anchors satisfy i + j + k <= 2**level - margin
GROUP_MARGIN: Dict[DofGroup, int] = {g: 1 for g in EDGE_GROUPS}
GROUP_MARGIN[DofGroup.VERTEX] = 0
GROUP_MARGIN[DofGroup.XYZ] = 2


class MicroCellType(IntEnum):
    UP = 0
    DOWN = 1
    OCT_0 = 2
    OCT_1 = 3
    OCT_2 = 4
    OCT_3 = 5


# micro-vertex offsets from the anchor; the octahedron is split along the
# diagonal (0,1,0)-(1,0,1)
MICRO_CELL_OFFSETS: Dict[MicroCellType, Tuple[Tuple[int, int, int], ...]] = {
    MicroCellType.UP: ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
    MicroCellType.DOWN: ((0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)),
    MicroCellType.OCT_0: ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1)),
    MicroCellType.OCT_1: ((1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 1)),
    MicroCellType.OCT_2: ((0, 1, 0), (0, 0, 1), (1, 0, 1), (0, 1, 1)),
    MicroCellType.OCT_3: ((0, 1, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)),
}

MICRO_CELL_MARGIN: Dict[MicroCellType, int] = {
    MicroCellType.UP: 1,
    MicroCellType.DOWN: 3,
    MicroCellType.OCT_0: 2,
    MicroCellType.OCT_1: 2,
    MicroCellType.OCT_2: 2,
    MicroCellType.OCT_3: 2,
}


def n_tet(v: int) -> int:
    """Number of lattice points in a tetrahedron with ``v`` points per edge."""
    if v <= 0:
        return 0
    return (v + 2) * (v + 1) * v // 6


def check_level(level: int, minimum: int = 0) -> int:
    if not isinstance(level, (int, np.integer)) or level < minimum:
        raise LevelError(f"refinement level must be an integer >= {minimum}, got {level!r}")
    return int(level)


def group_dof_count(group: DofGroup, level: int, with_boundary: bool) -> int:
    """
    Number of unknowns of one dof group inside a macro-cell refined ``level`` times.

    Args:
        group (DofGroup): vertex group or one of the seven edge orientations.
        level (int): refinement level, at least 1 for edge groups.
        with_boundary (bool): include unknowns on the macro-cell boundary.

    Returns:
        int: the unknown count.
    """
    group = DofGroup(group)
    level = check_level(level, 0 if group == DofGroup.VERTEX else 1)
    n = 2**level
    if group == DofGroup.VERTEX:
        return n_tet(n + 1) if with_boundary else n_tet(n - 3)
    if group == DofGroup.XYZ:
        return n_tet(n - 1)
    return n_tet(n) if with_boundary else n_tet(n - 2)


def lattice_points(bound: int) -> np.ndarray:
    """All (i, j, k) >= 0 with i + j + k <= bound, in lexicographic (k, j, i) order."""
    if bound < 0:
        return np.zeros((0, 3), dtype=np.int64)
    pts = [
        (i, j, k)
        for k in range(bound + 1)
        for j in range(bound + 1 - k)
        for i in range(bound + 1 - k - j)
    ]
    return np.asarray(pts, dtype=np.int64).reshape(-1, 3)


def group_anchors(group: DofGroup, level: int) -> np.ndarray:
    """Anchors of all dofs of ``group`` in a macro-cell, boundary included."""
    level = check_level(level)
    return lattice_points(2**level - GROUP_MARGIN[DofGroup(group)])


def doubled_positions(group: DofGroup, anchors: np.ndarray) -> np.ndarray:
    """Positions in the doubled lattice: 2*anchor for vertices, endpoint sums for edges."""
    anchors = np.asarray(anchors, dtype=np.int64)
    group = DofGroup(group)
    if group == DofGroup.VERTEX:
        return 2 * anchors
    a, b = GROUP_ENDPOINTS[group]
    return 2 * anchors + np.asarray(a) + np.asarray(b)


def parity_groups(doubled: np.ndarray) -> np.ndarray:
    """Group id of each doubled-lattice position."""
    par = np.asarray(doubled, dtype=np.int64) % 2
    table = np.zeros((2, 2, 2), dtype=np.int64)
    for group, (px, py, pz) in GROUP_PARITY.items():
        table[px, py, pz] = int(group)
    return table[par[..., 0], par[..., 1], par[..., 2]]


@dataclass(frozen=True)
class MicroIndex:
    i: int
    j: int
    k: int
    group: DofGroup
    level: int

    def __post_init__(self):
        check_level(self.level, 0 if self.group == DofGroup.VERTEX else 1)
        bound = 2**self.level - GROUP_MARGIN[DofGroup(self.group)]
        if min(self.i, self.j, self.k) < 0 or self.i + self.j + self.k > bound:
            raise LatticeIndexError(
                f"index ({self.i}, {self.j}, {self.k}) outside the {DofGroup(self.group).name} "
                f"lattice of level {self.level} (i+j+k <= {bound})"
            )

    @property
    def anchor(self) -> Tuple[int, int, int]:
        return (self.i, self.j, self.k)

    def doubled(self) -> np.ndarray:
        return doubled_positions(self.group, np.asarray(self.anchor))

    def barycentric(self) -> np.ndarray:
        """Lattice coordinates scaled to the unit reference tetrahedron."""
        return self.doubled() / float(2 ** (self.level + 1))


@dataclass(frozen=True)
class MicroCell:
    kind: MicroCellType
    anchor: Tuple[int, int, int]
    level: int

    def vertices(self) -> np.ndarray:
        """Lattice coordinates of the four micro-vertices, shape (4, 3)."""
        offsets = np.asarray(MICRO_CELL_OFFSETS[self.kind], dtype=np.int64)
        return offsets + np.asarray(self.anchor, dtype=np.int64)

    def vertex_indices(self) -> List[MicroIndex]:
        return [MicroIndex(int(i), int(j), int(k), DofGroup.VERTEX, self.level) for i, j, k in self.vertices()]


def refine_micro_cells(level: int) -> List[MicroCell]:
    """All 8**level micro-cells of a macro-cell, ordered by class then anchor."""
    level = check_level(level)
    n = 2**level
    cells = []
    for kind in MicroCellType:
        for anchor in lattice_points(n - MICRO_CELL_MARGIN[kind]):
            cells.append(MicroCell(kind, tuple(int(a) for a in anchor), level))
    return cells


@lru_cache(maxsize=16)
def micro_cell_arrays(level: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized form of :func:`refine_micro_cells`.

    Returns:
        Tuple[np.ndarray, np.ndarray]: lattice vertices of shape (N, 4, 3) and
        class ids of shape (N,), grouped by class.
    """
    level = check_level(level)
    n = 2**level
    verts, kinds = [], []
    for kind in MicroCellType:
        anchors = lattice_points(n - MICRO_CELL_MARGIN[kind])
        offsets = np.asarray(MICRO_CELL_OFFSETS[kind], dtype=np.int64)
        verts.append(anchors[:, None, :] + offsets[None, :, :])
        kinds.append(np.full(len(anchors), int(kind), dtype=np.int64))
    v = np.concatenate(verts, axis=0)
    k = np.concatenate(kinds)
    v.setflags(write=False)
    k.setflags(write=False)
    return v, k


def micro_coords(cell_vertices: Sequence[Sequence[float]], idx: MicroIndex) -> np.ndarray:
    """
    Physical coordinates of a micro index inside a macro-cell.

    Args:
        cell_vertices: the four macro-cell vertices, shape (4, 3).
        idx (MicroIndex): a valid index; edge dofs map to micro-edge midpoints.

    Returns:
        np.ndarray: the point, shape (3,).
    """
    v = np.asarray(cell_vertices, dtype=np.float64)
    lam = idx.barycentric()
    return v[0] + (v[1:] - v[0]).T @ lam


def count_classes(level: int) -> Dict[MicroCellType, int]:
    _, kinds = micro_cell_arrays(level)
    return {kind: int(np.sum(kinds == int(kind))) for kind in MicroCellType}
