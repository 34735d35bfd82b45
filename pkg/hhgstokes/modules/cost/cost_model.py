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
    Work-unit cost model of the Stokes multigrid solver. Block costs count
    the flops of the constant interior stencils of one macro-cell (two
    flops per stencil entry and row); everything else follows from them.
    All predictions are exact rationals. The ledger collects predictions and
    the flop counters of instrumented runs.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple

from hhgstokes.modules.mesh.refinement import check_level, n_tet
from hhgstokes.modules.solver.params import AHatVariant, SolverParams
from hhgstokes.utils.constants import TME_THRESHOLD

logger = logging.getLogger(__name__)

# lowest level with interior stencil rows in every macro-cell
MIN_STENCIL_LEVEL = 2


class DiscretizationKind(str, Enum):
    P1P1 = "p1p1"
    P2P1 = "p2p1"

    @classmethod
    def parse(cls, value) -> "DiscretizationKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower().replace("-", "").replace("_", ""))

    @property
    def velocity_degree(self) -> int:
        return 2 if self == DiscretizationKind.P2P1 else 1

    @property
    def stabilized(self) -> bool:
        return self == DiscretizationKind.P1P1


class Block(str, Enum):
    A = "A"
    B = "B"
    BT = "BT"
    C = "C"


# block -> (multiplier, shift) terms of multiplier * n_tet(2**level - shift),
# summed over velocity components and directions
BLOCK_TERMS: Dict[DiscretizationKind, Dict[Block, Tuple[Tuple[int, int], ...]]] = {
    DiscretizationKind.P2P1: {
        Block.A: ((3 * 2 * 65, 3), (3 * 2 * (27 + 19 + 27 + 27 + 19 + 27), 2), (3 * 2 * 19, 1)),
        Block.B: ((3 * 2 * 65, 3),),
        Block.C: (),
    },
    DiscretizationKind.P1P1: {
        Block.A: ((3 * 2 * 15, 3),),
        Block.B: ((3 * 2 * 15, 3),),
        Block.C: ((2 * 15, 3),),
    },
}


def _terms(kind: DiscretizationKind, block: Block) -> Tuple[Tuple[int, int], ...]:
    block = Block(block)
    if block == Block.BT:
        block = Block.B
    return BLOCK_TERMS[DiscretizationKind.parse(kind)][block]


def block_work(kind: DiscretizationKind, block: Block, level: int) -> Fraction:
    """Interior flops of one block application on one macro-cell."""
    level = check_level(level, MIN_STENCIL_LEVEL)
    n = 2**level
    return Fraction(sum(mult * n_tet(n - shift) for mult, shift in _terms(kind, block)))


def block_work_asymptotic(kind: DiscretizationKind, block: Block) -> Fraction:
    """Leading coefficient of the block cost in units of n_tet(2**level)."""
    return Fraction(sum(mult for mult, _ in _terms(kind, block)))


def operator_work(kind: DiscretizationKind, level: Optional[int] = None) -> Fraction:
    """W(A) + W(B^T) + W(B) + W(C); asymptotic coefficient if ``level`` is None."""
    work = block_work_asymptotic if level is None else (lambda k, b: block_work(k, b, level))
    return work(kind, Block.A) + 2 * work(kind, Block.B) + work(kind, Block.C)


def smoother_work(
    kind: DiscretizationKind, a_hat: AHatVariant, xi: int, level: Optional[int] = None
) -> Fraction:
    """
    One inexact Uzawa iteration: xi forward (or forward plus backward) velocity
    sweeps, B^T and B for the right-hand side and the pressure residual, and C.
    """
    work = block_work_asymptotic if level is None else (lambda k, b: block_work(k, b, level))
    sweeps = AHatVariant(a_hat).sweeps * int(xi)
    return sweeps * work(kind, Block.A) + 2 * work(kind, Block.B) + work(kind, Block.C)


def normalized(value: Fraction, kind: DiscretizationKind, level: Optional[int] = None) -> Fraction:
    return Fraction(value) / operator_work(kind, level)


def level_cycle_work(kind: DiscretizationKind, params: SolverParams, level: int, fine_level: int) -> Fraction:
    """Flops spent on ``level`` by one variable V-cycle started on ``fine_level``."""
    sweeps = params.nu_pre + params.nu_post + 2 * (fine_level - level) * params.nu_inc
    return sweeps * smoother_work(kind, params.a_hat, params.xi, level) + operator_work(kind, level)


def vcycle_work_bound(kind: DiscretizationKind, params: SolverParams, level: Optional[int] = None) -> Fraction:
    """
    Upper bound of one variable V-cycle in WU.

    Args:
        kind (DiscretizationKind): discretization.
        params (SolverParams): parameterization; kappa is ignored.
        level (int, optional): finest level, or None for the asymptotic value.

    Returns:
        Fraction: 8/7 W(V_L^L) + 16/49 nu_inc W(P_L), normalized by W(A_L).
    """
    smoother = smoother_work(kind, params.a_hat, params.xi, level)
    top = (params.nu_pre + params.nu_post) * smoother + operator_work(kind, level)
    bound = Fraction(8, 7) * top + Fraction(16, 49) * params.nu_inc * smoother
    return normalized(bound, kind, level)


def vcycle_work_exact(kind: DiscretizationKind, params: SolverParams, fine_level: int) -> Fraction:
    """Sum of the per-level cycle work over the stencil levels, normalized by W(A_L)."""
    fine_level = check_level(fine_level, MIN_STENCIL_LEVEL)
    total = sum(
        (level_cycle_work(kind, params, level, fine_level) for level in range(MIN_STENCIL_LEVEL, fine_level + 1)),
        Fraction(0),
    )
    return normalized(total, kind, fine_level)


def fmg_work(kind: DiscretizationKind, params: SolverParams, level: Optional[int] = None) -> Fraction:
    """8 kappa / 7 times the V-cycle bound."""
    return Fraction(8 * params.kappa, 7) * vcycle_work_bound(kind, params, level)


def fmg_phase_work(kind: DiscretizationKind, params: SolverParams, fine_level: int) -> Dict[str, Fraction]:
    """
    Interior work of the full multigrid driver on the stencil levels, split
    into smoothing and residual evaluation, normalized by W(A_L).
    """
    fine_level = check_level(fine_level, MIN_STENCIL_LEVEL)
    smooth, residual = Fraction(0), Fraction(0)
    for top in range(MIN_STENCIL_LEVEL, fine_level + 1):
        for level in range(MIN_STENCIL_LEVEL, top + 1):
            sweeps = params.nu_pre + params.nu_post + 2 * (top - level) * params.nu_inc
            smooth += params.kappa * sweeps * smoother_work(kind, params.a_hat, params.xi, level)
            residual += params.kappa * operator_work(kind, level)
    return {"smooth": normalized(smooth, kind, fine_level), "residual": normalized(residual, kind, fine_level)}


def fmg_work_exact(kind: DiscretizationKind, params: SolverParams, fine_level: int) -> Fraction:
    """Sum of :func:`fmg_phase_work` over its phases."""
    return sum(fmg_phase_work(kind, params, fine_level).values(), Fraction(0))


def unknown_count(kind: DiscretizationKind, level: int, with_boundary: bool = True) -> int:
    """Unknowns of one macro-cell: three velocity components and the pressure."""
    kind = DiscretizationKind.parse(kind)
    n = kind.velocity_degree * 2**level
    if with_boundary:
        return 3 * n_tet(n + 1) + n_tet(2**level + 1)
    return 3 * n_tet(n - 3) + n_tet(2**level - 3)


def asymptotic_ratios() -> Dict[str, Fraction]:
    """
    Quadratic-on-level-l versus linear-on-level-l+1 cost and size ratios.

    Returns:
        Dict[str, Fraction]: exact limits ``A``, ``B``, ``stokes`` and ``unknowns``.
    """
    p2, p1 = DiscretizationKind.P2P1, DiscretizationKind.P1P1
    return {
        "A": block_work_asymptotic(p2, Block.A) / (8 * block_work_asymptotic(p1, Block.A)),
        "B": block_work_asymptotic(p2, Block.B) / (8 * block_work_asymptotic(p1, Block.B)),
        "stokes": operator_work(p2) / (8 * operator_work(p1)),
        # per n_tet(2**level): 3 * 8 velocity + 1 pressure versus 4 * 8 unknowns
        "unknowns": Fraction(3 * 8 + 1, 4 * 8),
    }


def normalized_limits() -> Dict[str, Fraction]:
    p2, p1 = DiscretizationKind.P2P1, DiscretizationKind.P1P1
    return {
        "p2p1.A": normalized(block_work_asymptotic(p2, Block.A), p2),
        "p2p1.B": normalized(block_work_asymptotic(p2, Block.B), p2),
        "p2p1.smoother_S1": normalized(smoother_work(p2, AHatVariant.SYMMETRIC, 1), p2),
        "p2p1.smoother_F1": normalized(smoother_work(p2, AHatVariant.FORWARD, 1), p2),
        "p1p1.A": normalized(block_work_asymptotic(p1, Block.A), p1),
        "p1p1.B": normalized(block_work_asymptotic(p1, Block.B), p1),
        "p1p1.C": normalized(block_work_asymptotic(p1, Block.C), p1),
    }


def achieves_tme(work: Fraction) -> bool:
    """Textbook multigrid efficiency: fewer than 10 work units."""
    return work < TME_THRESHOLD


@dataclass
class WorkLedger:
    """
    Predicted work per solver phase (exact, in flops) and measured flop counters.

    ``reference_flops`` is the interior cost of one Stokes operator
    application on the finest level summed over macro-cells: one WU.
    """

    kind: DiscretizationKind
    level: int
    num_cells: int
    predicted: Dict[str, Fraction] = field(default_factory=dict)
    measured_flops: Dict[str, Dict[str, int]] = field(default_factory=dict)
    _stack: List[str] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.kind = DiscretizationKind.parse(self.kind)
        assert self.num_cells > 0, "ledger needs at least one macro-cell"

    @property
    def reference(self) -> str:
        return f"A_{self.kind.value}(level {self.level})"

    @property
    def reference_flops(self) -> Fraction:
        return self.num_cells * operator_work(self.kind, self.level)

    @property
    def current_phase(self) -> str:
        return self._stack[-1] if self._stack else "operator"

    @contextmanager
    def phase(self, name: str) -> Iterator["WorkLedger"]:
        """Attributes all flops recorded inside the block to ``name`` (innermost wins)."""
        self._stack.append(name)
        try:
            yield self
        finally:
            self._stack.pop()

    def record(self, interior: int = 0, interface: int = 0) -> None:
        counters = self.measured_flops.setdefault(self.current_phase, {"interior": 0, "interface": 0})
        counters["interior"] += int(interior)
        counters["interface"] += int(interface)

    def predict(self, phase: str, work_units: Fraction) -> None:
        """Stores a prediction given in WU."""
        self.predicted[phase] = Fraction(work_units) * self.reference_flops

    def measured(self, phase: Optional[str] = None, part: str = "interior") -> int:
        phases = [phase] if phase is not None else list(self.measured_flops)
        return sum(self.measured_flops.get(p, {}).get(part, 0) for p in phases)

    def measured_work_units(self, phase: Optional[str] = None) -> float:
        return float(Fraction(self.measured(phase)) / self.reference_flops)

    def reset(self) -> None:
        self.measured_flops.clear()


def compare_measured(ledger: WorkLedger, tolerance: float = 0.15) -> List[Dict[str, object]]:
    """
    Measured interior flops against the predictions of every predicted phase.

    Returns:
        List[dict]: one record per phase with ``ratio`` and ``status`` in
        {"pass", "fail", "no data"}.
    """
    report = []
    for phase, predicted in sorted(ledger.predicted.items()):
        measured = ledger.measured(phase)
        if measured == 0 or predicted == 0:
            report.append({"phase": phase, "predicted": float(predicted), "measured": measured, "ratio": None, "status": "no data"})
            continue
        ratio = measured / float(predicted)
        status = "pass" if abs(ratio - 1.0) <= tolerance else "fail"
        report.append({"phase": phase, "predicted": float(predicted), "measured": measured, "ratio": ratio, "status": status})
        if status == "fail":
            logger.warning(f"Phase {phase}: measured/predicted = {ratio:.3f} outside tolerance {tolerance}")
    return report


def format_report(report: List[Dict[str, object]]) -> str:
    """Aligned text table of a :func:`compare_measured` report."""
    lines = [f"{'phase':<12} {'predicted':>16} {'measured':>16} {'ratio':>8}  status"]
    for row in report:
        ratio = "-" if row["ratio"] is None else f"{row['ratio']:.4f}"
        lines.append(f"{row['phase']:<12} {row['predicted']:>16.0f} {row['measured']:>16d} {ratio:>8}  {row['status']}")
    return "\n".join(lines)
