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
    Compiled inner loops: constant-stencil application and Gauss-Seidel on
    the lattice of one macro-cell, and Gauss-Seidel on a CSR block. Lattice
    kernels read a dense closure array of shape (M+1, M+1, M+1) holding the
    owned and mirrored values of one macro-cell on its finest lattice.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def stencil_apply(closure, rows, offsets, weights, out):
    """out[r] = sum_s weights[s] * closure[rows[r] + offsets[s]]"""
    for r in range(rows.shape[0]):
        i = rows[r, 0]
        j = rows[r, 1]
        k = rows[r, 2]
        acc = 0.0
        for s in range(offsets.shape[0]):
            acc += weights[s] * closure[i + offsets[s, 0], j + offsets[s, 1], k + offsets[s, 2]]
        out[r] = acc


@njit(cache=True)
def stencil_gauss_seidel(closure, rhs, rows, offsets, weights, center, reverse):
    n = rows.shape[0]
    inv_diag = 1.0 / weights[center]
    for t in range(n):
        r = n - 1 - t if reverse else t
        i = rows[r, 0]
        j = rows[r, 1]
        k = rows[r, 2]
        acc = rhs[r]
        for s in range(offsets.shape[0]):
            if s != center:
                acc -= weights[s] * closure[i + offsets[s, 0], j + offsets[s, 1], k + offsets[s, 2]]
        closure[i, j, k] = acc * inv_diag


@njit(cache=True)
def csr_gauss_seidel(indptr, indices, data, x, rhs, reverse):
    """In-place sweep on a square CSR block; diagonals checked nonzero by the caller."""
    n = x.shape[0]
    for t in range(n):
        r = n - 1 - t if reverse else t
        diag = 0.0
        acc = rhs[r]
        for p in range(indptr[r], indptr[r + 1]):
            c = indices[p]
            if c == r:
                diag = data[p]
            else:
                acc -= data[p] * x[c]
        x[r] = acc / diag


@njit(cache=True)
def fill_closure(closure, coords, values, stride):
    for r in range(coords.shape[0]):
        closure[coords[r, 0] * stride, coords[r, 1] * stride, coords[r, 2] * stride] = values[r]


@njit(cache=True)
def gather_closure(closure, coords, stride, out):
    for r in range(coords.shape[0]):
        out[r] = closure[coords[r, 0] * stride, coords[r, 1] * stride, coords[r, 2] * stride]


def as_kernel_array(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)
