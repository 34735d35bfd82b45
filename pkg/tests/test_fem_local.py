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

import math

import numpy as np
import pytest

from hhgstokes.modules.fem.fem_local import (
    PSPG_DELTA,
    AffineMap,
    DegenerateElementError,
    Space,
    basis_gradients,
    basis_values,
    element_diameter,
    load_vectors,
    local_divergence,
    local_mass,
    local_pspg,
    local_stiffness,
    pspg_load_vectors,
    quadrature,
    reference_nodes,
)

REFERENCE = np.vstack([np.zeros(3), np.eye(3)])
SKEWED = np.array([[0.1, 0.2, 0.0], [1.3, 0.1, 0.2], [0.2, 0.9, 0.1], [0.3, 0.4, 1.1]])


def _monomial_integral(a, b, c):
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


@pytest.mark.parametrize("degree", range(1, 7))
def test_quadrature_exactness(degree):
    xi, w = quadrature(degree)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0 / 6.0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                got = np.sum(w * xi[:, 0] ** a * xi[:, 1] ** b * xi[:, 2] ** c)
                assert got == pytest.approx(_monomial_integral(a, b, c), rel=1e-12)


def test_quadrature_rejects_degree():
    with pytest.raises(ValueError):
        quadrature(7)


@pytest.mark.parametrize("space", [Space.P1, Space.P2])
def test_basis_is_nodal(space):
    nodes = reference_nodes(space)
    np.testing.assert_allclose(basis_values(space, nodes), np.eye(space.local_size), atol=1e-14)


@pytest.mark.parametrize("space", [Space.P1, Space.P2])
def test_basis_gradients_match_differences(space, rng):
    xi = rng.uniform(0.05, 0.3, size=(5, 3))
    g = basis_gradients(space, xi)
    h = 1e-6
    for d in range(3):
        step = np.zeros(3)
        step[d] = h
        fd = (basis_values(space, xi + step) - basis_values(space, xi - step)) / (2 * h)
        np.testing.assert_allclose(g[:, :, d], fd, atol=1e-8)
    np.testing.assert_allclose(basis_values(space, xi).sum(axis=1), 1.0)
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)


def test_reference_p1_stiffness():
    K = local_stiffness(Space.P1, AffineMap.from_vertices(REFERENCE)).entries
    expected = np.array([[3, -1, -1, -1], [-1, 1, 0, 0], [-1, 0, 1, 0], [-1, 0, 0, 1]]) / 6.0
    np.testing.assert_allclose(K, expected, atol=1e-14)


@pytest.mark.parametrize("space", [Space.P1, Space.P2])
def test_stiffness_symmetric_semidefinite(space):
    K = np.asarray(local_stiffness(space, AffineMap.from_vertices(SKEWED)))
    np.testing.assert_allclose(K, K.T, atol=1e-13)
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)
    eig = np.linalg.eigvalsh(K)
    assert eig[0] > -1e-12
    assert np.sum(eig < 1e-10) == 1


def test_stiffness_is_orientation_independent():
    flipped = SKEWED[[0, 2, 1, 3]]
    perm = [0, 2, 1, 3]
    K = local_stiffness(Space.P1, AffineMap.from_vertices(SKEWED)).entries
    Kf = local_stiffness(Space.P1, AffineMap.from_vertices(flipped)).entries
    np.testing.assert_allclose(Kf, K[np.ix_(perm, perm)], atol=1e-13)


@pytest.mark.parametrize("space", [Space.P1, Space.P2])
def test_mass_totals(space):
    amap = AffineMap.from_vertices(SKEWED)
    M = local_mass(space, amap).entries
    ML = local_mass(space, amap, lumped=True).entries
    assert M.sum() == pytest.approx(amap.volume)
    assert np.trace(ML) == pytest.approx(amap.volume)
    np.testing.assert_allclose(ML, np.diag(np.diag(ML)))


def test_p1_mass_entries():
    amap = AffineMap.from_vertices(REFERENCE)
    M = local_mass(Space.P1, amap).entries
    np.testing.assert_allclose(M, amap.volume / 20.0 * (np.ones((4, 4)) + np.eye(4)))


@pytest.mark.parametrize("space", [Space.P1, Space.P2])
def test_divergence_of_linear_field(space):
    amap = AffineMap.from_vertices(SKEWED)
    B = local_divergence(amap, space).entries
    assert B.shape == (3, 4, space.local_size)
    nodes = amap(reference_nodes(space))
    np.testing.assert_allclose(B.sum(axis=2), 0.0, atol=1e-13)
    for d in range(3):
        # u_d = x_d has unit divergence, so B_d u = -int psi_k = -|T|/4
        np.testing.assert_allclose(B[d] @ nodes[:, d], -amap.volume / 4.0, rtol=1e-12)


def test_pspg_scaling():
    amap = AffineMap.from_vertices(SKEWED)
    C = local_pspg(amap).entries
    K = local_stiffness(Space.P1, amap).entries
    np.testing.assert_allclose(C, PSPG_DELTA * element_diameter(amap) ** 2 * K)


def test_degenerate_element():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(DegenerateElementError):
        AffineMap.from_vertices(flat)


def test_load_vectors_translate():
    amap = AffineMap.from_vertices(REFERENCE * 0.5)
    origins = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    out = load_vectors(Space.P1, amap, origins, lambda x: np.ones(len(x)))
    assert out.shape == (2, 4, 1)
    np.testing.assert_allclose(out[..., 0], amap.volume / 4.0)
    lin = load_vectors(Space.P2, amap, origins, lambda x: x[:, 0])
    # int x over a translated element grows by shift * volume
    assert lin[1].sum() - lin[0].sum() == pytest.approx(2.0 * amap.volume)


def test_pspg_load_of_constant_force():
    amap = AffineMap.from_vertices(SKEWED)
    f = lambda x: np.tile([0.0, 0.0, -1.0], (len(x), 1))
    out = pspg_load_vectors(amap, SKEWED[:1], f)
    assert out.shape == (1, 4)
    assert out.sum() == pytest.approx(0.0, abs=1e-13)
    grads = np.array([[-1.0, -1.0, -1.0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]) @ amap.inverse_transpose.T
    expected = -PSPG_DELTA * element_diameter(amap) ** 2 * amap.volume * grads[:, 2]
    np.testing.assert_allclose(out[0], expected, atol=1e-13)
