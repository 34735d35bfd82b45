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
    Reference-element machinery for linear (P1) and quadratic (P2) Lagrange
    elements on tetrahedra: affine maps, conical-product quadrature and the
    local matrices of all Stokes operator blocks. Every matrix is computed by
    quadrature; closed forms only appear in the tests.
"""

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.special import roots_jacobi

PSPG_DELTA = 1.0 / 12.0
RHS_QUADRATURE_DEGREE = 5

P1_GRADIENTS = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
P2_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class DegenerateElementError(ValueError):
    """Raised when an element has (numerically) zero volume."""


class Space(IntEnum):
    P1 = 1
    P2 = 2

    @property
    def local_size(self) -> int:
        return 4 if self == Space.P1 else 10


class BlockId(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    M = "M"
    M_L = "M_L"


@dataclass
class LocalMatrix:
    block: BlockId
    test: Space
    trial: Space
    entries: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.entries.shape


@dataclass(frozen=True)
class AffineMap:
    """x = origin + jacobian @ xi, mapping the unit reference tetrahedron."""

    jacobian: np.ndarray
    origin: np.ndarray
    det: float

    @classmethod
    def from_vertices(cls, vertices: np.ndarray) -> "AffineMap":
        v = np.asarray(vertices, dtype=np.float64).reshape(4, 3)
        jac = (v[1:] - v[0]).T
        det = float(np.linalg.det(jac))
        scale = float(np.max(np.linalg.norm(jac, axis=0)))
        if scale == 0.0 or abs(det) <= 1e-14 * scale**3:
            raise DegenerateElementError(f"degenerate element (det J = {det:.3e})")
        return cls(jacobian=jac, origin=v[0].copy(), det=det)

    @property
    def volume(self) -> float:
        return abs(self.det) / 6.0

    @property
    def inverse_transpose(self) -> np.ndarray:
        return np.linalg.inv(self.jacobian).T

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(xi) @ self.jacobian.T


@lru_cache(maxsize=None)
def _quadrature(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    n = int(math.ceil((degree + 1) / 2))
    axes = []
    for alpha in (2, 1, 0):
        t, w = roots_jacobi(n, alpha, 0)
        axes.append(((1.0 + t) / 2.0, w / 2.0 ** (alpha + 1)))
    (u, wu), (v, wv), (s, ws) = axes
    U, V, S = np.meshgrid(u, v, s, indexing="ij")
    W = wu[:, None, None] * wv[None, :, None] * ws[None, None, :]
    x = U
    y = V * (1.0 - U)
    z = S * (1.0 - U) * (1.0 - V)
    points = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    weights = W.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def quadrature(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collapsed-coordinate Gauss-Jacobi rule on the reference tetrahedron.

    Args:
        degree (int): polynomial degree to integrate exactly, 1 to 6.

    Returns:
        Tuple[np.ndarray, np.ndarray]: points (Q, 3) and positive weights (Q,)
        summing to 1/6.
    """
    if degree not in range(1, 7):
        raise ValueError(f"unsupported quadrature degree {degree}, expected 1..6")
    return _quadrature(degree)


def barycentric(xi: np.ndarray) -> np.ndarray:
    xi = np.atleast_2d(xi)
    return np.column_stack([1.0 - xi.sum(axis=1), xi])


def basis_values(space: Space, xi: np.ndarray) -> np.ndarray:
    """Shape functions at reference points, shape (Q, n_local)."""
    lam = barycentric(xi)
    if Space(space) == Space.P1:
        return lam
    vert = lam * (2.0 * lam - 1.0)
    edge = np.column_stack([4.0 * lam[:, a] * lam[:, b] for a, b in P2_EDGE_PAIRS])
    return np.hstack([vert, edge])


def basis_gradients(space: Space, xi: np.ndarray) -> np.ndarray:
    """Reference gradients, shape (Q, n_local, 3)."""
    lam = barycentric(xi)
    q = len(lam)
    if Space(space) == Space.P1:
        return np.broadcast_to(P1_GRADIENTS, (q, 4, 3)).copy()
    g = np.empty((q, 10, 3))
    for i in range(4):
        g[:, i] = (4.0 * lam[:, i])[:, None] * P1_GRADIENTS[i] - P1_GRADIENTS[i]
    for e, (a, b) in enumerate(P2_EDGE_PAIRS):
        g[:, 4 + e] = 4.0 * (lam[:, a][:, None] * P1_GRADIENTS[b] + lam[:, b][:, None] * P1_GRADIENTS[a])
    return g


def reference_nodes(space: Space) -> np.ndarray:
    """Nodal points on the reference tetrahedron in local dof order."""
    verts = np.vstack([np.zeros(3), np.eye(3)])
    if Space(space) == Space.P1:
        return verts
    mids = [(verts[a] + verts[b]) / 2.0 for a, b in P2_EDGE_PAIRS]
    return np.vstack([verts, mids])


def _physical_gradients(space: Space, amap: AffineMap, xi: np.ndarray) -> np.ndarray:
    return basis_gradients(space, xi) @ amap.inverse_transpose.T


def local_stiffness(space: Space, amap: AffineMap) -> LocalMatrix:
    """Scalar Laplacian, K_ab = int grad(phi_a) . grad(phi_b)."""
    space = Space(space)
    xi, w = quadrature(max(1, 2 * int(space) - 2))
    grads = _physical_gradients(space, amap, xi)
    entries = np.einsum("q,qad,qbd->ab", w * abs(amap.det), grads, grads)
    return LocalMatrix(BlockId.A, space, space, entries)


def local_divergence(amap: AffineMap, velocity_space: Space) -> LocalMatrix:
    """
    Divergence blocks B_d[k, j] = -int psi_k d(phi_j)/dx_d for d = 0, 1, 2.

    Returns:
        LocalMatrix: entries of shape (3, 4, n_local) with P1 test functions.
    """
    velocity_space = Space(velocity_space)
    xi, w = quadrature(int(velocity_space) + 1)
    psi = basis_values(Space.P1, xi)
    grads = _physical_gradients(velocity_space, amap, xi)
    entries = -np.einsum("q,qk,qjd->dkj", w * abs(amap.det), psi, grads)
    return LocalMatrix(BlockId.B, Space.P1, velocity_space, entries)


def element_diameter(amap: AffineMap) -> float:
    """h_T = |T|^(1/3)."""
    return amap.volume ** (1.0 / 3.0)


def local_pspg(amap: AffineMap) -> LocalMatrix:
    stiff = local_stiffness(Space.P1, amap).entries
    return LocalMatrix(BlockId.C, Space.P1, Space.P1, PSPG_DELTA * element_diameter(amap) ** 2 * stiff)


def local_mass(space: Space, amap: AffineMap, lumped: bool = False) -> LocalMatrix:
    """
    Consistent or row-sum lumped mass matrix.

    Args:
        space (Space): P1 or P2.
        amap (AffineMap): element map.
        lumped (bool): return the diagonal of row sums.

    Returns:
        LocalMatrix: the mass matrix, total mass |T| either way.
    """
    space = Space(space)
    xi, w = quadrature(2 * int(space))
    phi = basis_values(space, xi)
    entries = np.einsum("q,qa,qb->ab", w * abs(amap.det), phi, phi)
    if lumped:
        return LocalMatrix(BlockId.M_L, space, space, np.diag(entries.sum(axis=1)))
    return LocalMatrix(BlockId.M, space, space, entries)


def load_vectors(
    space: Space,
    amap: AffineMap,
    origins: np.ndarray,
    field: Callable[[np.ndarray], np.ndarray],
    degree: int = RHS_QUADRATURE_DEGREE,
) -> np.ndarray:
    """
    Element load vectors int phi_a f for translated copies of one element.

    Args:
        space (Space): test space.
        amap (AffineMap): map of the first element; the others differ by translation.
        origins (np.ndarray): element origins (vertex 0), shape (N, 3).
        field: vectorized callable, points (P, 3) -> values (P,) or (P, c).
        degree (int): quadrature degree.

    Returns:
        np.ndarray: shape (N, n_local, c) (c = 1 for scalar fields).
    """
    xi, w = quadrature(degree)
    phi = basis_values(space, xi)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    x = origins[:, None, :] + (xi @ amap.jacobian.T)[None, :, :]
    values = np.asarray(field(x.reshape(-1, 3)), dtype=np.float64)
    values = values.reshape(len(origins), len(w), -1)
    return np.einsum("q,qa,nqc->nac", w * abs(amap.det), phi, values)


def pspg_load_vectors(
    amap: AffineMap,
    origins: np.ndarray,
    field: Callable[[np.ndarray], np.ndarray],
    degree: int = RHS_QUADRATURE_DEGREE,
) -> np.ndarray:
    """Stabilization forcing delta h_T^2 int f . grad(psi_k), shape (N, 4)."""
    xi, w = quadrature(degree)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    x = origins[:, None, :] + (xi @ amap.jacobian.T)[None, :, :]
    values = np.asarray(field(x.reshape(-1, 3)), dtype=np.float64).reshape(len(origins), len(w), 3)
    integral = np.einsum("q,nqc->nc", w * abs(amap.det), values)
    grads = P1_GRADIENTS @ amap.inverse_transpose.T
    return PSPG_DELTA * element_diameter(amap) ** 2 * integral @ grads.T
