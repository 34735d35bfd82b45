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
Solver parameterizations: smoothing counts, cycles per level, the velocity
smoother variant and the Schur relaxation, plus the parameter search space.
"""

from dataclasses import dataclass, replace
from enum import Enum
from itertools import product
from typing import List, Optional, Tuple

from hhgstokes.utils.constants import (
    CURATED_SMOOTHERS,
    CURATED_SMOOTHING_COUNTS,
    SMOOTHER_VARIANTS,
)
from hhgstokes.utils.file import ConfigError


class AHatVariant(str, Enum):
    """Velocity smoother: forward or symmetric Gauss-Seidel."""

    FORWARD = "F"
    SYMMETRIC = "S"

    @property
    def sweeps(self) -> int:
        return 1 if self == AHatVariant.FORWARD else 2


@dataclass(frozen=True)
class SolverParams:
    nu_pre: int
    nu_post: int
    nu_inc: int
    kappa: int = 1
    a_hat: AHatVariant = AHatVariant.FORWARD
    xi: int = 1
    omega_inv: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "a_hat", AHatVariant(self.a_hat))
        for name in ("nu_pre", "nu_post", "nu_inc"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.kappa < 1:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")
        if self.xi < 1:
            raise ConfigError(f"xi must be >= 1, got {self.xi}")
        if self.omega_inv is not None and not self.omega_inv > 0:
            raise ConfigError(f"omega_inv must be positive, got {self.omega_inv}")

    @classmethod
    def parse(cls, text: str, omega_inv: Optional[float] = None) -> "SolverParams":
        """Parses ``nu_pre,nu_post,nu_inc,kappa,A,xi`` (parentheses optional)."""
        parts = [p.strip() for p in str(text).strip().strip("()").split(",")]
        if len(parts) != 6:
            raise ConfigError(f"expected 6 comma-separated entries, got '{text}'")
        try:
            nu_pre, nu_post, nu_inc, kappa = (int(p) for p in parts[:4])
            xi = int(parts[5])
            a_hat = AHatVariant(parts[4].upper())
        except ValueError:
            raise ConfigError(f"malformed parameterization '{text}'")
        return cls(nu_pre, nu_post, nu_inc, kappa, a_hat, xi, omega_inv)

    @property
    def label(self) -> str:
        return f"{self.nu_pre},{self.nu_post},{self.nu_inc},{self.kappa},{self.a_hat.value},{self.xi}"

    def with_omega(self, omega_inv: float) -> "SolverParams":
        return replace(self, omega_inv=float(omega_inv))

    def smoothing_steps(self, level: int, fine_level: int) -> Tuple[int, int]:
        """(pre, post) smoothing iterations on ``level`` of a cycle started on ``fine_level``."""
        extra = (fine_level - level) * self.nu_inc
        return self.nu_pre + extra, self.nu_post + extra

    def check_search_space(self) -> "SolverParams":
        if max(self.nu_pre, self.nu_post, self.nu_inc) > 3:
            raise ConfigError(f"smoothing counts must lie in 0..3 for sweeps: {self.label}")
        if self.kappa not in (1, 2):
            raise ConfigError(f"kappa must be 1 or 2 for sweeps: {self.label}")
        if (self.a_hat.value, self.xi) not in SMOOTHER_VARIANTS:
            raise ConfigError(f"smoother ({self.a_hat.value}, {self.xi}) is not in the search space")
        return self


def search_space(kappas: Tuple[int, ...] = (1, 2)) -> List[SolverParams]:
    """All 768 parameterizations (fewer if ``kappas`` is restricted)."""
    out = []
    for nu_pre, nu_post, nu_inc, kappa, (a_hat, xi) in product(
        range(4), range(4), range(4), kappas, SMOOTHER_VARIANTS
    ):
        out.append(SolverParams(nu_pre, nu_post, nu_inc, kappa, AHatVariant(a_hat), xi))
    return out


def curated_subset(kappas: Tuple[int, ...] = (1,)) -> List[SolverParams]:
    """The desk-scale subset: 9 smoothing triples times 4 smoothers per kappa."""
    out = []
    for kappa in kappas:
        for (nu_pre, nu_post, nu_inc), (a_hat, xi) in product(CURATED_SMOOTHING_COUNTS, CURATED_SMOOTHERS):
            out.append(SolverParams(nu_pre, nu_post, nu_inc, kappa, AHatVariant(a_hat), xi))
    return out
