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
    Coarse tetrahedral meshes and the primitive graph built on top of them.
    A macro mesh is read from the line-oriented ``hhgmesh 1`` text format or
    generated (24-tetrahedron unit cube); every macro vertex, edge, face and
    cell then becomes one primitive owning the refined unknowns it contains.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MESH_HEADER = "hhgmesh 1"

# local edge and face numbering of a tetrahedron; face i is opposite vertex i
LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


class MeshParseError(ValueError):
    """Malformed mesh text."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MeshTopologyError(ValueError):
    """Dangling facet, inverted or degenerate cell, unknown vertex, non-manifold face."""


class BoundaryTag(str, Enum):
    DIRICHLET = "D"
    NEUMANN = "N"


class PrimitiveKind(IntEnum):
    VERTEX = 0
    EDGE = 1
    FACE = 2
    CELL = 3


def signed_volume(points: np.ndarray) -> float:
    p = np.asarray(points, dtype=np.float64)
    return float(np.linalg.det(np.stack([p[1] - p[0], p[2] - p[0], p[3] - p[0]])) / 6.0)


@dataclass
class MacroMesh:
    """
    Unstructured coarse mesh.

    ``boundary_facets`` holds (sorted vertex triple, tag) pairs. After
    :meth:`validate` every boundary face is listed; faces missing from the
    input default to Dirichlet.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: List[Tuple[Tuple[int, int, int], BoundaryTag]] = field(default_factory=list)
    cell_lines: Optional[List[int]] = field(default=None, repr=False)
    facet_lines: Optional[List[int]] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 4)
        self.boundary_facets = [
            (tuple(int(i) for i in tri), BoundaryTag(tag)) for tri, tag in self.boundary_facets
        ]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def scale(self) -> float:
        """Bounding-box diagonal length."""
        if self.num_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def cell_volumes(self) -> np.ndarray:
        p = self.vertices[self.cells]
        return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0

    def _where(self, lines: Optional[List[int]], i: int) -> str:
        if lines is not None and i < len(lines):
            return f" (line {lines[i]})"
        return ""

    def validate(self) -> "MacroMesh":
        """Checks the mesh invariants, completes the facet list and returns ``self``."""
        nv = self.num_vertices
        if self.num_cells == 0:
            raise MeshTopologyError("mesh has no cells")
        for c, cell in enumerate(self.cells):
            bad = [int(v) for v in cell if v < 0 or v >= nv]
            if bad:
                raise MeshTopologyError(
                    f"cell {c} references nonexistent vertex {bad[0]}{self._where(self.cell_lines, c)}"
                )
            if len(set(cell.tolist())) != 4:
                raise MeshTopologyError(f"cell {c} repeats a vertex{self._where(self.cell_lines, c)}")

        tol = 1e-14 * max(self.scale(), 1e-300) ** 3
        for c, vol in enumerate(self.cell_volumes()):
            if abs(vol) <= tol:
                raise MeshTopologyError(f"cell {c} is degenerate (volume {vol:.3e}){self._where(self.cell_lines, c)}")
            if vol < 0:
                raise MeshTopologyError(
                    f"cell {c} is inverted (negative orientation){self._where(self.cell_lines, c)}"
                )

        face_cells: Dict[Tuple[int, int, int], List[int]] = defaultdict(list)
        for c, cell in enumerate(self.cells):
            for lf in LOCAL_FACES:
                face_cells[tuple(sorted(int(cell[i]) for i in lf))].append(c)
        for face, owners in face_cells.items():
            if len(owners) > 2:
                raise MeshTopologyError(f"face {face} is shared by {len(owners)} cells {owners}")

        tagged: Dict[Tuple[int, int, int], BoundaryTag] = {}
        for f, (tri, tag) in enumerate(self.boundary_facets):
            where = self._where(self.facet_lines, f)
            bad = [v for v in tri if v < 0 or v >= nv]
            if bad:
                raise MeshTopologyError(f"facet {f} references nonexistent vertex {bad[0]}{where}")
            key = tuple(sorted(tri))
            if len(set(key)) != 3:
                raise MeshTopologyError(f"facet {f} repeats a vertex{where}")
            if len(face_cells.get(key, [])) != 1:
                raise MeshTopologyError(f"dangling facet {f} {key}: not a boundary face of the mesh{where}")
            if key in tagged:
                raise MeshTopologyError(f"facet {f} {key} listed twice{where}")
            tagged[key] = tag

        defaulted = 0
        for face, owners in sorted(face_cells.items()):
            if len(owners) == 1 and face not in tagged:
                tagged[face] = BoundaryTag.DIRICHLET
                defaulted += 1
        if defaulted:
            logger.debug(f"{defaulted} boundary faces default to Dirichlet")
        self.boundary_facets = list(tagged.items())

        used = np.zeros(nv, dtype=bool)
        used[self.cells.ravel()] = True
        if not used.all():
            raise MeshTopologyError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any cell")
        return self


def _parse_fields(tokens: List[str], count: int, kind, line_no: int, what: str):
    if len(tokens) != count:
        raise MeshParseError(f"'{what}' record expects {count} values, got {len(tokens)}", line_no)
    try:
        return [kind(t) for t in tokens]
    except ValueError:
        raise MeshParseError(f"'{what}' record has a non-numeric value: {' '.join(tokens)}", line_no)


def load_mesh(path: Union[str, Path], format: str = "hhgmesh") -> MacroMesh:
    """
    Reads a coarse mesh.

    Args:
        path: mesh file in the ``hhgmesh 1`` text format.
        format (str): mesh format id, only ``hhgmesh`` is known.

    Returns:
        MacroMesh: the validated mesh.
    """
    if format != "hhgmesh":
        raise MeshParseError(f"unsupported mesh format '{format}'")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file {path} not found")

    vertices, cells, facets = [], [], []
    cell_lines, facet_lines = [], []
    header_seen = False
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not header_seen:
                if " ".join(line.split()) != MESH_HEADER:
                    raise MeshParseError(f"expected header '{MESH_HEADER}', got '{line}'", line_no)
                header_seen = True
                continue
            tokens = line.split()
            record, values = tokens[0], tokens[1:]
            if record == "v":
                vertices.append(_parse_fields(values, 3, float, line_no, "v"))
            elif record == "c":
                cells.append(_parse_fields(values, 4, int, line_no, "c"))
                cell_lines.append(line_no)
            elif record == "bf":
                if len(values) != 4:
                    raise MeshParseError(f"'bf' record expects 4 values, got {len(values)}", line_no)
                tri = _parse_fields(values[:3], 3, int, line_no, "bf")
                try:
                    tag = BoundaryTag(values[3])
                except ValueError:
                    raise MeshParseError(f"unknown boundary tag '{values[3]}' (expected D or N)", line_no)
                facets.append((tuple(tri), tag))
                facet_lines.append(line_no)
            else:
                raise MeshParseError(f"unknown record type '{record}'", line_no)
    if not header_seen:
        raise MeshParseError(f"empty mesh file, expected header '{MESH_HEADER}'")

    mesh = MacroMesh(
        vertices=np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        cells=np.asarray(cells, dtype=np.int64).reshape(-1, 4),
        boundary_facets=facets,
        cell_lines=cell_lines,
        facet_lines=facet_lines,
    ).validate()
    logger.info(f"Loaded mesh {path}: {mesh.num_vertices} vertices, {mesh.num_cells} cells")
    return mesh


def write_mesh(mesh: MacroMesh, path: Union[str, Path]) -> None:
    """Writes ``mesh`` in the ``hhgmesh 1`` format with all boundary facets listed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MESH_HEADER}\n")
        for x, y, z in mesh.vertices:
            f.write(f"v {float(x):.17g} {float(y):.17g} {float(z):.17g}\n")
        for cell in mesh.cells:
            f.write("c " + " ".join(str(int(i)) for i in cell) + "\n")
        for tri, tag in mesh.boundary_facets:
            f.write("bf " + " ".join(str(int(i)) for i in tri) + f" {BoundaryTag(tag).value}\n")


def generate_unit_cube() -> MacroMesh:
    """
    The unit cube split into 24 tetrahedra through its center and face centers.

    Vertex numbering: corners ``i + 2j + 4k`` (0..7), face centers of
    x=0, x=1, y=0, y=1, z=0, z=1 (8..13), cube center (14).
    """
    corners = [(i, j, k) for k in (0, 1) for j in (0, 1) for i in (0, 1)]
    vertices = [tuple(float(c) for c in p) for p in corners]
    center = 14
    cells, facets = [], []
    for axis in range(3):
        b, c = [a for a in range(3) if a != axis]
        for side in (0, 1):
            fc = [0.5, 0.5, 0.5]
            fc[axis] = float(side)
            vertices.append(tuple(fc))
            fc_id = len(vertices) - 1
            ring = []
            for tb, tc in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = [0, 0, 0]
                p[axis], p[b], p[c] = side, tb, tc
                ring.append(p[0] + 2 * p[1] + 4 * p[2])
            for r in range(4):
                tri = (fc_id, ring[r], ring[(r + 1) % 4])
                facets.append((tuple(sorted(tri)), BoundaryTag.DIRICHLET))
                cells.append([center, *tri])
    vertices.append((0.5, 0.5, 0.5))
    pts = np.asarray(vertices, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    for cell in cells:
        if signed_volume(pts[cell]) < 0:
            cell[[2, 3]] = cell[[3, 2]]
    return MacroMesh(vertices=pts, cells=cells, boundary_facets=facets).validate()


@dataclass
class PrimitiveGraph:
    """
    Macro vertices, edges, faces and cells of a coarse mesh with adjacency.

    Edges and faces store sorted global vertex ids. ``cell_edges`` and
    ``cell_faces`` follow the local ``LOCAL_EDGES``/``LOCAL_FACES`` order of
    each cell's own vertex order.
    """

    mesh: MacroMesh
    edges: np.ndarray
    faces: np.ndarray
    cell_edges: np.ndarray
    cell_faces: np.ndarray
    face_edges: np.ndarray
    face_cells: List[List[int]]
    edge_faces: List[List[int]]
    edge_cells: List[List[int]]
    vertex_edges: List[List[int]]
    vertex_faces: List[List[int]]
    vertex_cells: List[List[int]]
    face_tags: List[Optional[BoundaryTag]]
    edge_tags: List[Optional[BoundaryTag]]
    vertex_tags: List[Optional[BoundaryTag]]
    edge_index: Dict[Tuple[int, int], int] = field(repr=False, default_factory=dict)
    face_index: Dict[Tuple[int, int, int], int] = field(repr=False, default_factory=dict)

    def count(self, kind: PrimitiveKind) -> int:
        return {
            PrimitiveKind.VERTEX: self.mesh.num_vertices,
            PrimitiveKind.EDGE: len(self.edges),
            PrimitiveKind.FACE: len(self.faces),
            PrimitiveKind.CELL: self.mesh.num_cells,
        }[PrimitiveKind(kind)]

    def primitive_vertices(self, kind: PrimitiveKind, index: int) -> Tuple[int, ...]:
        kind = PrimitiveKind(kind)
        if kind == PrimitiveKind.VERTEX:
            return (int(index),)
        if kind == PrimitiveKind.EDGE:
            return tuple(int(v) for v in self.edges[index])
        if kind == PrimitiveKind.FACE:
            return tuple(int(v) for v in self.faces[index])
        return tuple(int(v) for v in self.mesh.cells[index])

    def lower_neighbors(self, kind: PrimitiveKind, index: int) -> Dict[PrimitiveKind, List[int]]:
        kind = PrimitiveKind(kind)
        if kind == PrimitiveKind.CELL:
            return {
                PrimitiveKind.FACE: [int(f) for f in self.cell_faces[index]],
                PrimitiveKind.EDGE: [int(e) for e in self.cell_edges[index]],
                PrimitiveKind.VERTEX: list(self.primitive_vertices(kind, index)),
            }
        if kind == PrimitiveKind.FACE:
            return {
                PrimitiveKind.EDGE: [int(e) for e in self.face_edges[index]],
                PrimitiveKind.VERTEX: list(self.primitive_vertices(kind, index)),
            }
        if kind == PrimitiveKind.EDGE:
            return {PrimitiveKind.VERTEX: list(self.primitive_vertices(kind, index))}
        return {}

    def higher_neighbors(self, kind: PrimitiveKind, index: int) -> Dict[PrimitiveKind, List[int]]:
        kind = PrimitiveKind(kind)
        if kind == PrimitiveKind.VERTEX:
            return {
                PrimitiveKind.EDGE: self.vertex_edges[index],
                PrimitiveKind.FACE: self.vertex_faces[index],
                PrimitiveKind.CELL: self.vertex_cells[index],
            }
        if kind == PrimitiveKind.EDGE:
            return {PrimitiveKind.FACE: self.edge_faces[index], PrimitiveKind.CELL: self.edge_cells[index]}
        if kind == PrimitiveKind.FACE:
            return {PrimitiveKind.CELL: self.face_cells[index]}
        return {}

    def tag(self, kind: PrimitiveKind, index: int) -> Optional[BoundaryTag]:
        kind = PrimitiveKind(kind)
        if kind == PrimitiveKind.VERTEX:
            return self.vertex_tags[index]
        if kind == PrimitiveKind.EDGE:
            return self.edge_tags[index]
        if kind == PrimitiveKind.FACE:
            return self.face_tags[index]
        return None

    def is_boundary(self, kind: PrimitiveKind, index: int) -> bool:
        return self.tag(kind, index) is not None

    def is_dirichlet(self, kind: PrimitiveKind, index: int) -> bool:
        return self.tag(kind, index) == BoundaryTag.DIRICHLET

    @property
    def fully_dirichlet(self) -> bool:
        """True if no boundary face is Neumann, so the pressure is fixed up to a constant."""
        return all(t != BoundaryTag.NEUMANN for t in self.face_tags)

    def is_connected(self) -> bool:
        """Cells connected through shared faces."""
        seen = np.zeros(self.mesh.num_cells, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            c = stack.pop()
            for f in self.cell_faces[c]:
                for other in self.face_cells[f]:
                    if not seen[other]:
                        seen[other] = True
                        stack.append(other)
        return bool(seen.all())


def _merge_tag(current: Optional[BoundaryTag], new: BoundaryTag) -> BoundaryTag:
    # Dirichlet wins on shared closure
    if current == BoundaryTag.DIRICHLET or new == BoundaryTag.DIRICHLET:
        return BoundaryTag.DIRICHLET
    return new


def build_primitive_graph(mesh: MacroMesh) -> PrimitiveGraph:
    """
    Enumerates the macro primitives of ``mesh`` and their adjacency.

    Args:
        mesh (MacroMesh): a validated mesh.

    Returns:
        PrimitiveGraph: edges and faces numbered by first appearance in cell order.
    """
    nv, nc = mesh.num_vertices, mesh.num_cells
    edge_index: Dict[Tuple[int, int], int] = {}
    face_index: Dict[Tuple[int, int, int], int] = {}
    cell_edges = np.zeros((nc, 6), dtype=np.int64)
    cell_faces = np.zeros((nc, 4), dtype=np.int64)
    for c, cell in enumerate(mesh.cells):
        for le, (a, b) in enumerate(LOCAL_EDGES):
            key = tuple(sorted((int(cell[a]), int(cell[b]))))
            cell_edges[c, le] = edge_index.setdefault(key, len(edge_index))
        for lf, tri in enumerate(LOCAL_FACES):
            key = tuple(sorted(int(cell[i]) for i in tri))
            cell_faces[c, lf] = face_index.setdefault(key, len(face_index))

    edges = np.asarray(sorted(edge_index, key=edge_index.get), dtype=np.int64).reshape(-1, 2)
    faces = np.asarray(sorted(face_index, key=face_index.get), dtype=np.int64).reshape(-1, 3)
    face_edges = np.asarray(
        [[edge_index[(f[0], f[1])], edge_index[(f[0], f[2])], edge_index[(f[1], f[2])]] for f in faces.tolist()],
        dtype=np.int64,
    ).reshape(-1, 3)

    face_cells: List[List[int]] = [[] for _ in faces]
    edge_cells: List[List[int]] = [[] for _ in edges]
    vertex_cells: List[List[int]] = [[] for _ in range(nv)]
    for c in range(nc):
        for f in cell_faces[c]:
            face_cells[f].append(c)
        for e in cell_edges[c]:
            edge_cells[e].append(c)
        for v in mesh.cells[c]:
            vertex_cells[v].append(c)
    edge_faces: List[List[int]] = [[] for _ in edges]
    vertex_faces: List[List[int]] = [[] for _ in range(nv)]
    for f, (e0, e1, e2) in enumerate(face_edges):
        for e in (e0, e1, e2):
            edge_faces[e].append(f)
        for v in faces[f]:
            vertex_faces[v].append(f)
    vertex_edges: List[List[int]] = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(edges):
        vertex_edges[a].append(e)
        vertex_edges[b].append(e)

    face_tags: List[Optional[BoundaryTag]] = [None] * len(faces)
    edge_tags: List[Optional[BoundaryTag]] = [None] * len(edges)
    vertex_tags: List[Optional[BoundaryTag]] = [None] * nv
    for tri, tag in mesh.boundary_facets:
        f = face_index[tuple(sorted(tri))]
        face_tags[f] = tag
        for e in face_edges[f]:
            edge_tags[e] = _merge_tag(edge_tags[e], tag)
        for v in faces[f]:
            vertex_tags[v] = _merge_tag(vertex_tags[v], tag)

    graph = PrimitiveGraph(
        mesh=mesh,
        edges=edges,
        faces=faces,
        cell_edges=cell_edges,
        cell_faces=cell_faces,
        face_edges=face_edges,
        face_cells=face_cells,
        edge_faces=edge_faces,
        edge_cells=edge_cells,
        vertex_edges=vertex_edges,
        vertex_faces=vertex_faces,
        vertex_cells=vertex_cells,
        face_tags=face_tags,
        edge_tags=edge_tags,
        vertex_tags=vertex_tags,
        edge_index=edge_index,
        face_index=face_index,
    )
    logger.debug(
        f"Primitive graph: {nv} vertices, {len(edges)} edges, {len(faces)} faces, {nc} cells"
    )
    return graph
