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
    Benchmark problems and the driver that measures how well a full
    multigrid parameterization solves them: the manufactured cube solution
    and a constant body force, error norms on the next finer level, error
    ratios against an epsilon-converged reference, parameter sweeps, the
    constrained optimizer over a sweep and the result writers.
"""

import hashlib
import logging
import time
from functools import cached_property
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from omegaconf import DictConfig
from tqdm import tqdm

from hhgstokes import __version__
from hhgstokes.models.hierarchy import LevelHierarchy
from hhgstokes.models.multigrid import ROBUST_PARAMS, fmg, solve_to_residual
from hhgstokes.modules.cost.cost_model import (
    DiscretizationKind,
    achieves_tme,
    fmg_work,
    fmg_work_exact,
)
from hhgstokes.modules.mesh.dof_layout import build_dof_layout
from hhgstokes.modules.mesh.macro_mesh import MacroMesh, build_primitive_graph, generate_unit_cube, load_mesh
from hhgstokes.modules.operators.assembly import block_locals, cell_class_matrices, element_quadratic_form
from hhgstokes.modules.operators.grid_function import StokesVector
from hhgstokes.modules.operators.stencil_ops import StokesOperator, assemble_rhs
from hhgstokes.modules.solver.params import SolverParams, curated_subset, search_space
from hhgstokes.modules.solver.transfer import prolongation_matrix
from hhgstokes.utils.constants import CUBE_OMEGA_INV, JUNCTION_OMEGA_INV, SOLVED_GAMMA
from hhgstokes.utils.file import config_to_dict, write_csv, write_json

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]

# integral of sin(4x) sin(8y) sin(2z) over the unit cube
CUBE_PRESSURE_MEAN = (1 - np.cos(4.0)) / 4 * (1 - np.cos(8.0)) / 8 * (1 - np.cos(2.0)) / 2

RESULT_FIELDS = [
    "params",
    "kind",
    "level",
    "omega_inv",
    "predicted_work",
    "predicted_work_bound",
    "measured_ratio",
    "gamma_u",
    "gamma_p",
    "delta_u",
    "delta_p",
    "error_u",
    "error_p",
    "tme",
    "solved",
    "wall_time",
    "status",
    "error",
]


@dataclass(frozen=True)
class Problem:
    """Forcing and Dirichlet data of a benchmark; ``velocity`` and ``pressure`` only if known analytically."""

    name: str
    forcing: Field
    boundary: Field
    velocity: Optional[Field] = None
    pressure: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def has_exact_solution(self) -> bool:
        return self.velocity is not None and self.pressure is not None


def _cube_velocity(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.stack([-4 * np.cos(4 * x[:, 2]), 8 * np.cos(8 * x[:, 0]), -2 * np.cos(2 * x[:, 1])], axis=1)


def _cube_pressure(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.sin(4 * x[:, 0]) * np.sin(8 * x[:, 1]) * np.sin(2 * x[:, 2]) - CUBE_PRESSURE_MEAN


def _cube_forcing(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    s4, c4 = np.sin(4 * x[:, 0]), np.cos(4 * x[:, 0])
    s8, c8 = np.sin(8 * x[:, 1]), np.cos(8 * x[:, 1])
    s2, c2 = np.sin(2 * x[:, 2]), np.cos(2 * x[:, 2])
    return np.stack(
        [
            -64 * np.cos(4 * x[:, 2]) + 4 * c4 * s8 * s2,
            512 * np.cos(8 * x[:, 0]) + 8 * s4 * c8 * s2,
            -8 * np.cos(2 * x[:, 1]) + 2 * s4 * s8 * c2,
        ],
        axis=1,
    )


def cube_exact_solution() -> Problem:
    """Divergence-free manufactured solution on the unit cube, pressure with zero mean."""
    return Problem("cube", _cube_forcing, _cube_velocity, _cube_velocity, _cube_pressure)


def body_force_problem() -> Problem:
    """Constant downward force, homogeneous Dirichlet data, no analytic solution."""

    def forcing(x: np.ndarray) -> np.ndarray:
        out = np.zeros((len(np.atleast_2d(x)), 3))
        out[:, 2] = -1.0
        return out

    def boundary(x: np.ndarray) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(x)), 3))

    return Problem("body_force", forcing, boundary)


PROBLEMS = {"cube": cube_exact_solution, "body_force": body_force_problem}


class ErrorEvaluator:
    """
    Mass-norm errors of level-``level`` solutions measured on ``level + 1``:
    the approximation is interpolated to the finer level and compared with
    the nodal values of the exact solution there.
    """

    def __init__(self, op: StokesOperator, problem: Problem):
        if not problem.has_exact_solution:
            raise ValueError(f"problem '{problem.name}' has no analytic solution")
        graph, degree = op.graph, op.kind.velocity_degree
        level = op.level + 1
        self.op = op
        layout_u = build_dof_layout(graph, level, degree)
        layout_p = build_dof_layout(graph, level, 1)
        self.prolong_u = prolongation_matrix(op.layout_u, layout_u)
        self.prolong_p = prolongation_matrix(op.layout_p, layout_p)
        mats = cell_class_matrices(graph, level, degree)
        self.layout_u, self.layout_p = layout_u, layout_p
        self.mass_u = block_locals(mats, "M_u")
        self.mass_p = block_locals(mats, "M_p")
        self.exact_u = np.asarray(problem.velocity(layout_u.points)).T.copy()
        self.exact_p = np.asarray(problem.pressure(layout_p.points))

    def __call__(self, x: StokesVector) -> Tuple[float, float]:
        e_u = sum(
            element_quadratic_form(self.layout_u, self.mass_u, self.exact_u[d] - self.prolong_u @ x.u[d].values)
            for d in range(3)
        )
        e_p = element_quadratic_form(self.layout_p, self.mass_p, self.exact_p - self.prolong_p @ x.p.values)
        return float(np.sqrt(max(e_u, 0.0))), float(np.sqrt(max(e_p, 0.0)))


def discrete_error(evaluator: ErrorEvaluator, x: StokesVector) -> Tuple[float, float]:
    """(|e(u)|, |e(p)|) in the mass norm of the next finer level."""
    return evaluator(x)


def gamma(evaluator: ErrorEvaluator, x: StokesVector, reference: StokesVector) -> Tuple[float, float]:
    """Error of ``x`` relative to the error of the converged discrete solution."""
    eu, ep = evaluator(x)
    ru, rp = evaluator(reference)
    if ru <= 0.0 or rp <= 0.0:
        raise ZeroDivisionError("reference solution has zero discretization error")
    return eu / ru, ep / rp


def mass_norms(op: StokesOperator, x: StokesVector) -> Tuple[float, float]:
    mass_u = block_locals(op.matrices, "M_u")
    mass_p = block_locals(op.matrices, "M_p")
    nu = sum(element_quadratic_form(op.layout_u, mass_u, u.values) for u in x.u)
    npr = element_quadratic_form(op.layout_p, mass_p, x.p.values)
    return float(np.sqrt(max(nu, 0.0))), float(np.sqrt(max(npr, 0.0)))


def relative_delta(op: StokesOperator, x: StokesVector, reference: StokesVector) -> Tuple[float, float]:
    """|x - x_ref| / |x_ref| per field in the mass norm of the level."""
    diff = x.copy().axpy(-1.0, reference)
    du, dp = mass_norms(op, diff)
    ru, rp = mass_norms(op, reference)
    if ru == 0.0 or rp == 0.0:
        raise ValueError("relative difference against a zero reference")
    return du / ru, dp / rp


@dataclass
class BenchResult:
    params: str
    kind: str
    level: int
    omega_inv: float
    predicted_work: float
    predicted_work_bound: float
    measured_ratio: Optional[float] = None
    gamma_u: Optional[float] = None
    gamma_p: Optional[float] = None
    delta_u: Optional[float] = None
    delta_p: Optional[float] = None
    error_u: Optional[float] = None
    error_p: Optional[float] = None
    tme: bool = False
    solved: Optional[bool] = None
    wall_time: float = 0.0
    status: str = "ok"
    error: str = ""

    def to_row(self) -> Dict[str, object]:
        return asdict(self)


def mesh_digest(mesh: MacroMesh) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.cells).tobytes())
    for tri, tag in sorted(mesh.boundary_facets):
        h.update(f"{tri}{tag.value}".encode())
    return h.hexdigest()


@dataclass
class ReferenceCache:
    """Converged reference solutions on disk, keyed by mesh, discretization, problem, level and epsilon."""

    cache_dir: Optional[Path]

    def path(self, digest: str, kind: DiscretizationKind, problem: str, level: int, epsilon: float) -> Optional[Path]:
        if not self.cache_dir:
            return None
        return Path(self.cache_dir) / f"{digest[:16]}_{kind.value}_{problem}_L{level}_eps{epsilon:.1e}.npz"

    def load(self, path: Optional[Path], op: StokesOperator) -> Optional[StokesVector]:
        if path is None or not path.is_file():
            return None
        with np.load(path) as data:
            values = data["x"]
        x = op.new_vector("reference")
        if len(values) != len(x.flat()):
            logger.warning(f"Ignoring cached reference {path}: size mismatch")
            return None
        logger.info(f"Reference solution loaded from {path}")
        return x.set_flat(values)

    def store(self, path: Optional[Path], x: StokesVector) -> None:
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, x=x.flat())
        logger.info(f"Reference solution cached at {path}")


def build_mesh(source: str) -> MacroMesh:
    if source == "cube":
        return generate_unit_cube()
    return load_mesh(source)


class BenchmarkRunner:
    """
    One benchmark setup: hierarchy, per-level right-hand sides, omega^-1
    and the converged reference the parameterizations are measured against.

    Args:
        config (DictConfig): validated benchmark configuration.
    """

    def __init__(self, config: DictConfig):
        self.config = config
        self.kind = DiscretizationKind.parse(str(config.discretization))
        self.level = int(config.max_level)
        self.mesh = build_mesh(str(config.mesh))
        self.graph = build_primitive_graph(self.mesh)
        self.problem = PROBLEMS[str(config.problem)]()
        self.hierarchy = LevelHierarchy(self.graph, self.kind, self.level, str(config.schur_diagonal))
        self.rhs = [assemble_rhs(op, self.problem.forcing, self.problem.boundary) for op in self.hierarchy.operators]
        self.omega_inv = self.resolve_omega()
        self._reference: Optional[StokesVector] = None

    def resolve_omega(self) -> float:
        setting = self.config.omega_inv
        if setting == "estimate":
            return self.hierarchy.estimate_omega(seed=int(self.config.seed))
        if setting == "tabulated":
            if str(self.config.mesh) == "cube":
                return CUBE_OMEGA_INV[self.kind.value]
            logger.warning(f"No tabulated omega^-1 for mesh {self.config.mesh}, using {JUNCTION_OMEGA_INV}")
            return JUNCTION_OMEGA_INV
        return float(setting)

    @cached_property
    def evaluator(self) -> Optional[ErrorEvaluator]:
        if not self.problem.has_exact_solution:
            return None
        return ErrorEvaluator(self.hierarchy.fine, self.problem)

    @property
    def reference(self) -> StokesVector:
        """The epsilon-converged discrete solution on the finest level (cached on disk)."""
        if self._reference is None:
            epsilon = float(self.config.epsilon)
            cache = ReferenceCache(self.config.cache_dir or None)
            path = cache.path(mesh_digest(self.mesh), self.kind, self.problem.name, self.level, epsilon)
            x = cache.load(path, self.hierarchy.fine)
            if x is None:
                params = ROBUST_PARAMS.with_omega(self.omega_inv)
                start = fmg(self.hierarchy, params, self.rhs)
                x, history = solve_to_residual(
                    self.hierarchy, self.rhs[-1], epsilon, params, x=start, max_cycles=int(self.config.max_cycles)
                )
                logger.info(f"Reference solve converged in {len(history) - 1} cycles")
                cache.store(path, x)
            self._reference = x
        return self._reference

    def run(self, params: SolverParams) -> BenchResult:
        """One full multigrid solve with ``params`` and its metrics."""
        params = params.with_omega(self.omega_inv) if params.omega_inv is None else params
        result = BenchResult(
            params=params.label,
            kind=self.kind.value,
            level=self.level,
            omega_inv=params.omega_inv,
            predicted_work=float(fmg_work_exact(self.kind, params, self.level)),
            predicted_work_bound=float(fmg_work(self.kind, params)),
        )
        result.tme = achieves_tme(fmg_work(self.kind, params))
        reference = self.reference

        ledger = self.hierarchy.ledger
        ledger.reset()
        ledger.predicted.clear()
        start = time.perf_counter()
        x = fmg(self.hierarchy, params, self.rhs)
        result.wall_time = time.perf_counter() - start

        predicted = sum(ledger.predicted.get(p, 0) for p in ("smooth", "residual"))
        if predicted:
            result.measured_ratio = (ledger.measured("smooth") + ledger.measured("residual")) / float(predicted)
        result.delta_u, result.delta_p = relative_delta(self.hierarchy.fine, x, reference)
        if self.evaluator is not None:
            result.error_u, result.error_p = discrete_error(self.evaluator, x)
            result.gamma_u, result.gamma_p = gamma(self.evaluator, x, reference)
            result.solved = result.gamma_u <= SOLVED_GAMMA and result.gamma_p <= SOLVED_GAMMA
        return result

    def reference_error(self) -> Optional[Tuple[float, float]]:
        """Discretization error of the converged solution, None without an analytic solution."""
        if self.evaluator is None:
            return None
        return discrete_error(self.evaluator, self.reference)


def sweep_params(config: DictConfig) -> List[SolverParams]:
    kappas = tuple(int(k) for k in config.sweep.kappa) if config.sweep.kappa else None
    if str(config.sweep.subset) == "full":
        params = search_space(kappas or (1, 2))
    else:
        params = curated_subset(kappas or (1,))
    for p in params:
        p.check_search_space()
    if len(params) > int(config.sweep.budget):
        logger.warning(f"Sweep of {len(params)} parameterizations exceeds the budget of {config.sweep.budget} runs")
    return params


def run_sweep(runner: BenchmarkRunner, params: Sequence[SolverParams], progress: bool = True) -> List[BenchResult]:
    """
    Runs every parameterization; failures are recorded and the sweep goes on.

    Returns:
        List[BenchResult]: sorted by the asymptotic work bound, then by label.
    """
    results = []
    for p in tqdm(params, desc="sweep", disable=not progress):
        logger.debug(f"Sweep entry {p.label}")
        try:
            results.append(runner.run(p))
        except Exception as e:
            logger.error(f"Sweep entry {p.label} failed: {e}")
            results.append(
                BenchResult(
                    params=p.label,
                    kind=runner.kind.value,
                    level=runner.level,
                    omega_inv=runner.omega_inv,
                    predicted_work=float(fmg_work_exact(runner.kind, p, runner.level)),
                    predicted_work_bound=float(fmg_work(runner.kind, p)),
                    status="failed",
                    error=str(e),
                )
            )
    results.sort(key=lambda r: (r.predicted_work_bound, r.params))
    return results


def optimize(results: Sequence[BenchResult], gamma_u: float, gamma_p: float) -> Optional[BenchResult]:
    """Cheapest successful result with both error ratios within the bounds, None if there is none."""
    feasible = [
        r
        for r in results
        if r.status == "ok" and r.gamma_u is not None and r.gamma_u <= gamma_u and r.gamma_p <= gamma_p
    ]
    if not feasible:
        return None
    return min(feasible, key=lambda r: (r.predicted_work_bound, r.params))


def min_error_curve(results: Sequence[BenchResult], budgets: Sequence[float]) -> List[Dict[str, object]]:
    """For each work budget the smallest velocity error among results that fit into it."""
    rows = []
    ok = [r for r in results if r.status == "ok" and r.error_u is not None]
    for budget in sorted(budgets):
        fitting = [r for r in ok if r.predicted_work_bound <= budget]
        best = min(fitting, key=lambda r: (r.error_u, r.predicted_work_bound), default=None)
        rows.append(
            {
                "work_budget": float(budget),
                "error_u": None if best is None else best.error_u,
                "params": None if best is None else best.params,
            }
        )
    return rows


def emit_results(
    results: Sequence[BenchResult],
    config: Union[DictConfig, Dict[str, object]],
    output_dir: Union[str, Path],
    output_format: str = "both",
    stem: str = "results",
) -> List[Path]:
    """
    Writes ``<stem>.csv`` (with a ``<stem>.meta.json`` sidecar) and/or ``<stem>.json``.

    Returns:
        List[Path]: the files written.
    """
    assert output_format in ("csv", "json", "both"), f"unknown output format '{output_format}'"
    output_dir = Path(output_dir)
    config_echo = config_to_dict(config)
    rows = [r.to_row() for r in results]
    written = []
    if output_format in ("csv", "both"):
        written.append(write_csv(rows, RESULT_FIELDS, output_dir / f"{stem}.csv"))
        written.append(write_json({"version": __version__, "config": config_echo}, output_dir / f"{stem}.meta.json"))
    if output_format in ("json", "both"):
        written.append(
            write_json({"version": __version__, "config": config_echo, "results": rows}, output_dir / f"{stem}.json")
        )
    return written
