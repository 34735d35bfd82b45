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

import numpy as np
import pytest
import scipy.linalg as la

from hhgstokes.modules.cost.cost_model import DiscretizationKind, WorkLedger
from hhgstokes.modules.operators.stencil_ops import StokesOperator
from hhgstokes.modules.solver.omega import approximate_schur, estimate_omega

KINDS = [DiscretizationKind.P1P1, DiscretizationKind.P2P1]


def _dense_schur(op):
    n = op.layout_p.num_dofs
    cols = [approximate_schur(op, e) for e in np.eye(n)]
    K = np.column_stack(cols)
    return K, 0.5 * (K + K.T)


@pytest.mark.parametrize("kind", KINDS)
def test_approximate_schur_is_symmetric(make_operator, tet_graph, kind):
    K, sym = _dense_schur(make_operator(tet_graph, 2, kind))
    np.testing.assert_allclose(K, sym, atol=1e-12 * np.abs(K).max())
    assert la.eigvalsh(sym).min() > -1e-12 * np.abs(K).max()


@pytest.mark.parametrize("kind", KINDS)
def test_estimate_matches_the_dense_eigenvalue(make_operator, tet_graph, kind):
    op = make_operator(tet_graph, 2, kind)
    _, sym = _dense_schur(op)
    largest = la.eigh(sym, np.diag(op.pressure_mass), eigvals_only=True)[-1]
    omega_inv, history = estimate_omega(op, iterations=100, seed=3)
    assert len(history) == 100
    assert omega_inv == pytest.approx(largest, rel=0.02)


@pytest.mark.parametrize("kind", KINDS)
def test_rayleigh_quotient_settles(make_operator, tet_graph, kind):
    omega_inv, history = estimate_omega(make_operator(tet_graph, 2, kind), iterations=100, seed=3)
    tail = np.array(history[-20:])
    assert (tail.max() - tail.min()) / omega_inv < 1e-6


def test_estimate_is_seeded(make_operator, tet_graph):
    op = make_operator(tet_graph, 2, DiscretizationKind.P1P1)
    first = estimate_omega(op, iterations=5, seed=7)
    second = estimate_omega(op, iterations=5, seed=7)
    assert first == second


def test_estimate_is_booked_to_its_phase(tet_graph):
    ledger = WorkLedger(DiscretizationKind.P1P1, 2, 1)
    op = StokesOperator(tet_graph, 2, DiscretizationKind.P1P1, ledger)
    estimate_omega(op, iterations=2)
    assert ledger.measured("omega") > 0
    assert ledger.measured("operator") == 0


def test_estimate_needs_iterations(make_operator, tet_graph):
    op = make_operator(tet_graph, 2, DiscretizationKind.P1P1)
    with pytest.raises(AssertionError):
        estimate_omega(op, iterations=0)
