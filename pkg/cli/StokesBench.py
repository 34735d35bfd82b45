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

import logging
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from omegaconf import DictConfig

from hhgstokes.models.benchmark import (
    BenchmarkRunner,
    BenchResult,
    build_mesh,
    emit_results,
    min_error_curve,
    optimize,
    run_sweep,
    sweep_params,
)
from hhgstokes.modules.cost.cost_model import (
    DiscretizationKind,
    achieves_tme,
    asymptotic_ratios,
    compare_measured,
    fmg_work,
    fmg_work_exact,
    format_report,
    normalized_limits,
    unknown_count,
    vcycle_work_bound,
)
from hhgstokes.modules.mesh.macro_mesh import build_primitive_graph
from hhgstokes.modules.operators.stencil_ops import StokesOperator, export_assembled
from hhgstokes.modules.solver.params import SolverParams
from hhgstokes.utils.constants import CUBE_OMEGA_INV, REPORTED_PARAMETERIZATIONS, SELECTION_BOUNDS
from hhgstokes.utils.file import write_csv, write_json, write_triplets

logger = logging.getLogger(__name__)


class StokesBench:
    """
    Benchmark driver behind the ``bench`` command line.
    """

    def __init__(self, config: DictConfig):
        """
        Args:
            config (DictConfig): merged and validated benchmark configuration.
        """
        self.config = config
        self.output_dir = Path(config.output_dir)
        self._runner: Optional[BenchmarkRunner] = None

    @property
    def runner(self) -> BenchmarkRunner:
        if self._runner is None:
            self._runner = BenchmarkRunner(self.config)
        return self._runner

    def run(self) -> BenchResult:
        """Solves with the configured parameterization and writes the result and the cost comparison."""
        runner = self.runner
        params = SolverParams.parse(self.config.params)
        result = runner.run(params)
        logger.info(
            f"FMG({result.params}) {result.kind} level {result.level}: "
            f"work {result.predicted_work:.2f} WU, gamma_u {result.gamma_u}, gamma_p {result.gamma_p}, "
            f"delta_u {result.delta_u:.3e}, delta_p {result.delta_p:.3e}"
        )
        report = compare_measured(runner.hierarchy.ledger, float(self.config.tolerance))
        logger.info("Work model versus counters:\n" + format_report(report))
        emit_results([result], self.config, self.output_dir, str(self.config.output_format), stem="run")
        write_json({"phases": report}, self.output_dir / "run.cost.json")
        return result

    def sweep(self) -> Tuple[List[BenchResult], Optional[BenchResult]]:
        """
        Runs the configured sweep and the constrained optimizer over it.

        Returns:
            Tuple[List[BenchResult], Optional[BenchResult]]: all results and
            the cheapest one within the error bounds (None if infeasible).
        """
        runner = self.runner
        results = run_sweep(runner, sweep_params(self.config))
        emit_results(results, self.config, self.output_dir, str(self.config.output_format), stem="sweep")

        budgets = sorted({round(r.predicted_work_bound, 2) for r in results if r.status == "ok"})
        curve = min_error_curve(results, budgets)
        write_csv(curve, ["work_budget", "error_u", "params"], self.output_dir / "min_error_curve.csv")

        bounds = self.config.bounds
        best = optimize(results, float(bounds.gamma_u), float(bounds.gamma_p))
        if best is None:
            logger.warning(f"No parameterization satisfies gamma_u <= {bounds.gamma_u}, gamma_p <= {bounds.gamma_p}")
        else:
            logger.info(f"Cheapest feasible parameterization: {best.params} with {best.predicted_work_bound:.2f} WU")

        selection = []
        for gamma_u, gamma_p in SELECTION_BOUNDS:
            pick = optimize(results, gamma_u, gamma_p)
            selection.append({"gamma_u": gamma_u, "gamma_p": gamma_p, "params": pick.params if pick else None})
            logger.info(f"gamma_u <= {gamma_u}, gamma_p <= {gamma_p}: {pick.params if pick else 'infeasible'}")
        write_json({"selection": selection}, self.output_dir / "selection.json")
        return results, best

    def omega(self) -> Dict[str, float]:
        """Power-iteration estimate of omega^-1 on the finest level."""
        hierarchy = self.runner.hierarchy
        if self.config.omega_inv == "estimate":
            estimate = self.runner.omega_inv
        else:
            estimate = hierarchy.estimate_omega(seed=int(self.config.seed))
        record = {"kind": hierarchy.kind.value, "level": hierarchy.max_level, "omega_inv": estimate}
        if str(self.config.mesh) == "cube":
            tabulated = CUBE_OMEGA_INV[hierarchy.kind.value]
            record["tabulated"] = tabulated
            record["deviation"] = estimate / tabulated - 1.0
            logger.info(f"omega^-1 estimate {estimate:.6f}, tabulated {tabulated} ({record['deviation']:+.2%})")
        write_json(record, self.output_dir / "omega.json")
        return record

    def export(self, level: int) -> Path:
        """Writes the assembled saddle-point matrix of ``level`` as ``row col value`` lines."""
        graph = build_primitive_graph(build_mesh(str(self.config.mesh)))
        op = StokesOperator(graph, level, DiscretizationKind.parse(str(self.config.discretization)))
        matrix = export_assembled(op, cap=int(self.config.export_cap))
        return write_triplets(matrix, self.output_dir / f"matrix_{op.kind.value}_L{level}.txt")


def cost_report(params: SolverParams, kind: DiscretizationKind, level: Optional[int] = None) -> Dict[str, object]:
    """Work predictions of one parameterization, exact fractions rendered as strings."""

    def frac(value: Fraction) -> Dict[str, object]:
        return {"exact": str(value), "value": float(value)}

    report: Dict[str, object] = {
        "params": params.label,
        "kind": kind.value,
        "vcycle_bound": frac(vcycle_work_bound(kind, params)),
        "fmg": frac(fmg_work(kind, params)),
        "tme": achieves_tme(fmg_work(kind, params)),
        "limits": {k: frac(v) for k, v in normalized_limits().items()},
        "ratios": {k: frac(v) for k, v in asymptotic_ratios().items()},
    }
    if level is not None:
        report["level"] = level
        reported = REPORTED_PARAMETERIZATIONS.get((kind.value, level, params.label))
        if reported is not None:
            report["reported"] = dict(zip(("work", "gamma_u", "gamma_p"), reported))
        report["fmg_exact"] = frac(fmg_work_exact(kind, params, level))
        report["unknowns"] = [
            {"level": lvl, "with_boundary": unknown_count(kind, lvl), "inner": unknown_count(kind, lvl, False)}
            for lvl in range(2, level + 1)
        ]
    return report


def format_cost_report(report: Dict[str, object]) -> str:
    lines = [f"FMG({report['params']}) {report['kind']}"]
    lines.append(f"  {'V-cycle bound':<24} {report['vcycle_bound']['exact']:>14}  {report['vcycle_bound']['value']:10.4f}")
    lines.append(f"  {'FMG (asymptotic)':<24} {report['fmg']['exact']:>14}  {report['fmg']['value']:10.4f}")
    if "fmg_exact" in report:
        label = f"FMG (level {report['level']})"
        lines.append(f"  {label:<24} {report['fmg_exact']['exact']:>14}  {report['fmg_exact']['value']:10.4f}")
    lines.append(f"  {'TME':<24} {str(report['tme']):>14}")
    if "reported" in report:
        reported = report["reported"]
        lines.append(f"  {'reported work':<24} {reported['work']:>14}  gamma_u {reported['gamma_u']}, gamma_p {reported['gamma_p']}")
    for name, entry in {**report["limits"], **report["ratios"]}.items():
        lines.append(f"  {name:<24} {entry['exact']:>14}  {entry['value']:10.4f}")
    for row in report.get("unknowns", []):
        lines.append(f"  unknowns level {row['level']:<8} {row['with_boundary']:>14}  {row['inner']:10d}")
    return "\n".join(lines)
