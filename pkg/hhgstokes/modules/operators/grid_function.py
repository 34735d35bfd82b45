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
    Coefficient vectors on one level. A GridFunction stores the unknowns of
    every primitive contiguously (per dof group, lexicographic inside a
    group) in one buffer, plus per macro-cell ghost buffers mirroring the
    neighbor-owned dofs of its closure. Writing through ``data`` marks the
    ghosts dirty; ``ghost_update`` refreshes them from their owners.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Union

import numpy as np

from hhgstokes.modules.mesh.dof_layout import DofLayout
from hhgstokes.modules.mesh.macro_mesh import PrimitiveKind
from hhgstokes.modules.mesh.refinement import DofGroup
from hhgstokes.modules.solver.kernels import fill_closure, gather_closure


class SpaceMismatchError(ValueError):
    """Raised when grid functions of different spaces or levels are combined."""


class GridFunction:
    def __init__(self, layout: DofLayout, name: str = "", values: Optional[np.ndarray] = None):
        self.layout = layout
        self.name = name
        if values is None:
            self._data = np.zeros(layout.num_dofs)
        else:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (layout.num_dofs,):
                raise SpaceMismatchError(
                    f"{name or 'grid function'}: expected {layout.num_dofs} values, got {values.shape}"
                )
            self._data = values.copy()
        self._ghosts = [np.zeros(len(ids)) for ids in layout.cell_ghost_ids]
        self._dirty = np.ones(len(layout.cell_ghost_ids), dtype=bool)

    def __len__(self) -> int:
        return self.layout.num_dofs

    def __repr__(self) -> str:
        return f"GridFunction({self.name!r}, P{self.degree}, level={self.level}, dofs={len(self)})"

    @property
    def level(self) -> int:
        return self.layout.level

    @property
    def degree(self) -> int:
        return self.layout.degree

    @property
    def data(self) -> np.ndarray:
        """Writable coefficients; any access invalidates the ghost buffers."""
        self._dirty[:] = True
        return self._data

    @property
    def values(self) -> np.ndarray:
        view = self._data.view()
        view.setflags(write=False)
        return view

    def is_dirty(self, cell: int) -> bool:
        return bool(self._dirty[cell])

    def ghosts(self, cell: int) -> np.ndarray:
        view = self._ghosts[cell].view()
        view.setflags(write=False)
        return view

    def ghost_update(self, cells: Optional[Iterable[int]] = None) -> None:
        cells = range(len(self._ghosts)) if cells is None else cells
        for c in cells:
            np.take(self._data, self.layout.cell_ghost_ids[c], out=self._ghosts[c])
            self._dirty[c] = False

    def check_compatible(self, other: "GridFunction") -> None:
        if other.layout is not self.layout:
            if other.level != self.level or other.degree != self.degree or len(other) != len(self):
                raise SpaceMismatchError(f"{self!r} and {other!r} live in different spaces")

    def primitive_view(self, kind: PrimitiveKind, index: int, group: Optional[DofGroup] = None) -> np.ndarray:
        start, stop = self.layout.owned_range(kind, index)
        view = self.data[start:stop]
        if group is None:
            return view
        hit = np.flatnonzero(self.layout.group[start:stop] == int(group))
        if len(hit) == 0:
            return view[0:0]
        return view[hit[0] : hit[-1] + 1]

    def closure(self, cell: int, resolution: int, zero_dirichlet: bool = True) -> np.ndarray:
        """
        Dense lattice array of one macro-cell on a lattice with ``resolution`` intervals.

        Args:
            cell (int): macro-cell index.
            resolution (int): multiple of the layout resolution.
            zero_dirichlet (bool): read Dirichlet dofs as zero (eliminated columns).

        Returns:
            np.ndarray: shape (resolution + 1,) * 3, zero off the space's nodes.
        """
        if self._dirty[cell]:
            self.ghost_update([cell])
        layout = self.layout
        stride = resolution // layout.resolution
        assert stride * layout.resolution == resolution, "closure resolution must refine the layout lattice"
        arr = np.zeros((resolution + 1,) * 3)
        start, stop = layout.owned_range(PrimitiveKind.CELL, cell)
        fill_closure(arr, layout.cell_owned_coords[cell], self._data[start:stop], stride)
        ghosts = self._ghosts[cell]
        if zero_dirichlet:
            ghosts = np.where(layout.dirichlet[layout.cell_ghost_ids[cell]], 0.0, ghosts)
        fill_closure(arr, layout.cell_ghost_coords[cell], ghosts, stride)
        return arr

    def store_closure(self, cell: int, closure: np.ndarray) -> None:
        """Copies the cell-owned values of ``closure`` back; ghosts of other cells stay valid."""
        layout = self.layout
        stride = (closure.shape[0] - 1) // layout.resolution
        start, stop = layout.owned_range(PrimitiveKind.CELL, cell)
        gather_closure(closure, layout.cell_owned_coords[cell], stride, self._data[start:stop])

    def copy(self, name: Optional[str] = None) -> "GridFunction":
        return GridFunction(self.layout, name if name is not None else self.name, self._data)

    def assign(self, other: Union["GridFunction", np.ndarray, float]) -> "GridFunction":
        if isinstance(other, GridFunction):
            self.check_compatible(other)
            other = other._data
        self.data[:] = other
        return self

    def axpy(self, alpha: float, other: "GridFunction") -> "GridFunction":
        self.check_compatible(other)
        self.data[:] += alpha * other._data
        return self

    def interpolate(self, field: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Nodal interpolation of a vectorized scalar field."""
        self.data[:] = np.asarray(field(self.layout.points), dtype=np.float64).reshape(-1)
        return self

    def dot(self, other: "GridFunction") -> float:
        self.check_compatible(other)
        return float(self._data @ other._data)

    def norm(self) -> float:
        return float(np.linalg.norm(self._data))


@dataclass
class StokesVector:
    """Three velocity components and the pressure of one level."""

    u: List[GridFunction]
    p: GridFunction

    @classmethod
    def zeros(cls, layout_u: DofLayout, layout_p: DofLayout, name: str = "") -> "StokesVector":
        return cls([GridFunction(layout_u, f"{name}u{d}") for d in range(3)], GridFunction(layout_p, f"{name}p"))

    @property
    def components(self) -> List[GridFunction]:
        return [*self.u, self.p]

    @property
    def level(self) -> int:
        return self.p.level

    def copy(self) -> "StokesVector":
        return StokesVector([u.copy() for u in self.u], self.p.copy())

    def assign(self, other: "StokesVector") -> "StokesVector":
        for mine, theirs in zip(self.components, other.components):
            mine.assign(theirs)
        return self

    def axpy(self, alpha: float, other: "StokesVector") -> "StokesVector":
        for mine, theirs in zip(self.components, other.components):
            mine.axpy(alpha, theirs)
        return self

    def fill(self, value: float = 0.0) -> "StokesVector":
        for gf in self.components:
            gf.data[:] = value
        return self

    def flat(self) -> np.ndarray:
        return np.concatenate([gf.values for gf in self.components])

    def set_flat(self, values: np.ndarray) -> "StokesVector":
        values = np.asarray(values, dtype=np.float64)
        expected = sum(len(gf) for gf in self.components)
        if values.shape != (expected,):
            raise SpaceMismatchError(f"expected {expected} values, got {values.shape}")
        offset = 0
        for gf in self.components:
            gf.data[:] = values[offset : offset + len(gf)]
            offset += len(gf)
        return self
