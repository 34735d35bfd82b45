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
import csv
import json
from pathlib import Path

import numpy as np
import pytest
from omegaconf import OmegaConf

from hhgstokes import __version__
from hhgstokes.models.benchmark import (
    PROBLEMS,
    RESULT_FIELDS,
    BenchmarkRunner,
    BenchResult,
    ErrorEvaluator,
    Problem,
    ReferenceCache,
    body_force_problem,
    build_mesh,
    cube_exact_solution,
    discrete_error,
    emit_results,
    gamma,
    mass_norms,
    mesh_digest,
    min_error_curve,
    optimize,
    relative_delta,
    run_sweep,
    sweep_params,
)
from hhgstokes.modules.cost.cost_model import DiscretizationKind
from hhgstokes.modules.solver.params import SolverParams
from hhgstokes.utils.constants import REPORTED_PARAMETERIZATIONS
from hhgstokes.utils.file import DEFAULT_BENCH_CONFIG, ConfigError, bench_config


def _laplacian(field, x, h=1e-4):
    out = -6.0 * field(x)
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = h
        out = out + field(x + shift) + field(x - shift)
    return out / h**2


def _gradient(field, x, h=1e-6):
    grads = []
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = h
        grads.append((field(x + shift) - field(x - shift)) / (2 * h))
    return np.stack(grads, axis=-1)


def test_manufactured_forcing(rng):
    problem = cube_exact_solution()
    x = rng.random((20, 3))
    expected = -_laplacian(problem.velocity, x) + _gradient(problem.pressure, x)
    assert np.allclose(problem.forcing(x), expected, rtol=1e-4, atol=1e-2)


def test_manufactured_velocity_is_divergence_free(rng):
    problem = cube_exact_solution()
    x = rng.random((20, 3))
    jac = np.stack([_gradient(lambda y, d=d: problem.velocity(y)[:, d], x) for d in range(3)], axis=1)
    assert np.allclose(np.trace(jac, axis1=1, axis2=2), 0.0, atol=1e-6)


def test_manufactured_pressure_has_zero_mean():
    problem = cube_exact_solution()
    nodes, weights = np.polynomial.legendre.leggauss(24)
    nodes, weights = (nodes + 1) / 2, weights / 2
    X, Y, Z = np.meshgrid(nodes, nodes, nodes, indexing="ij")
    W = np.einsum("i,j,k->ijk", weights, weights, weights)
    values = problem.pressure(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1))
    assert abs(values @ W.ravel()) < 1e-12


def test_problem_registry():
    assert set(PROBLEMS) == {"cube", "body_force"}
    assert cube_exact_solution().has_exact_solution
    body = body_force_problem()
    assert not body.has_exact_solution
    assert np.array_equal(body.forcing(np.zeros((2, 3))), [[0, 0, -1], [0, 0, -1]])
    with pytest.raises(ValueError, match="no analytic solution"):
        ErrorEvaluator(None, body)


def test_error_of_interpolated_quadratics_vanishes(two_tet_graph, make_operator):
    op = make_operator(two_tet_graph, 1, "p2p1")

    def velocity(x):
        x = np.atleast_2d(x)
        return np.stack([x[:, 1] ** 2, x[:, 0] * x[:, 2], 1.0 - x[:, 0] ** 2], axis=1)

    def pressure(x):
        x = np.atleast_2d(x)
        return 1.0 + x[:, 0] - 2.0 * x[:, 2]

    problem = Problem("quadratic", velocity, velocity, velocity, pressure)
    evaluator = ErrorEvaluator(op, problem)
    x = op.new_vector()
    for d in range(3):
        x.u[d].interpolate(lambda pts, d=d: velocity(pts)[:, d])
    x.p.interpolate(pressure)
    eu, ep = discrete_error(evaluator, x)
    assert eu < 1e-12 and ep < 1e-12

    zero = op.new_vector()
    assert all(e > 0 for e in evaluator(zero))
    assert gamma(evaluator, zero, zero) == pytest.approx((1.0, 1.0))


def test_mass_norms_of_constants(cube_graph, make_operator):
    op = make_operator(cube_graph, 1, "p1p1")
    x = op.new_vector()
    for gf in x.components:
        gf.assign(1.0)
    nu, npr = mass_norms(op, x)
    assert nu == pytest.approx(np.sqrt(3.0))
    assert npr == pytest.approx(1.0)


def test_relative_delta(cube_graph, make_operator):
    op = make_operator(cube_graph, 1, "p1p1")
    ref = op.new_vector()
    for gf in ref.components:
        gf.assign(2.0)
    assert relative_delta(op, ref.copy(), ref) == pytest.approx((0.0, 0.0))
    x = ref.copy()
    x.p.assign(3.0)
    assert relative_delta(op, x, ref) == pytest.approx((0.0, 0.5))
    with pytest.raises(ValueError, match="zero reference"):
        relative_delta(op, x, op.new_vector())


def test_mesh_digest(single_tet):
    assert mesh_digest(build_mesh("cube")) == mesh_digest(build_mesh("cube"))
    assert mesh_digest(build_mesh("cube")) != mesh_digest(single_tet)


def test_reference_cache(tmp_path, cube_graph, make_operator):
    op = make_operator(cube_graph, 1, "p1p1")
    assert ReferenceCache(None).path("abc", DiscretizationKind.P1P1, "cube", 1, 1e-12) is None
    assert ReferenceCache(None).load(None, op) is None

    cache = ReferenceCache(tmp_path)
    path = cache.path("0123456789abcdef0123", DiscretizationKind.P1P1, "cube", 1, 1e-12)
    assert path.name == "0123456789abcdef_p1p1_cube_L1_eps1.0e-12.npz"
    assert cache.load(path, op) is None

    x = op.new_vector()
    x.set_flat(np.arange(len(x.flat()), dtype=float))
    cache.store(path, x)
    loaded = cache.load(path, op)
    assert np.array_equal(loaded.flat(), x.flat())

    finer = make_operator(cube_graph, 2, "p1p1")
    assert cache.load(path, finer) is None


def _result(label, work, gu, gp, status="ok", error_u=None, exact_work=None):
    return BenchResult(
        params=label,
        kind="p2p1",
        level=3,
        omega_inv=0.3,
        predicted_work=work if exact_work is None else exact_work,
        predicted_work_bound=work,
        gamma_u=gu,
        gamma_p=gp,
        error_u=error_u,
        status=status,
    )


def test_optimize_picks_cheapest_feasible():
    results = [
        _result("a", 10.0, 1.5, 5.0),
        _result("b", 6.0, 2.5, 5.0),
        _result("c", 8.0, 1.9, 9.0),
        _result("d", 4.0, None, None, status="failed"),
    ]
    assert optimize(results, 2.0, 10.0).params == "c"
    assert optimize(results, 2.0, 6.0).params == "a"
    assert optimize(results, 1.0, 10.0) is None


def test_min_error_curve():
    results = [
        _result("a", 10.0, 1.5, 5.0, error_u=0.1),
        _result("b", 6.0, 2.5, 5.0, error_u=0.3),
        _result("c", 8.0, 1.9, 9.0, error_u=0.2),
        _result("d", 1.0, None, None, status="failed"),
    ]
    curve = min_error_curve(results, [12.0, 5.0, 8.0])
    assert [row["work_budget"] for row in curve] == [5.0, 8.0, 12.0]
    assert [row["params"] for row in curve] == [None, "c", "a"]
    assert curve[0]["error_u"] is None


def test_ranking_uses_the_work_bound():
    # finite-level counts order the pair one way, the asymptotic bound the other
    results = [
        _result("1,0,2,1,S,1", 4.670, 1.5, 5.0, error_u=0.1, exact_work=3.496),
        _result("1,1,2,1,F,1", 4.665, 1.6, 5.0, error_u=0.2, exact_work=3.584),
    ]
    assert optimize(results, 2.0, 10.0).params == "1,1,2,1,F,1"
    curve = min_error_curve(results, [3.55, 4.666, 4.67])
    assert [row["params"] for row in curve] == [None, "1,1,2,1,F,1", "1,0,2,1,S,1"]


class _FixedRunner:
    kind = DiscretizationKind.P2P1
    level = 3
    omega_inv = 0.3
    work = {"1,0,2,1,S,1": (4.670, 3.496), "1,1,2,1,F,1": (4.665, 3.584)}

    def run(self, params):
        bound, exact = self.work[params.label]
        return _result(params.label, bound, 1.0, 1.0, exact_work=exact)


def test_sweep_is_sorted_by_the_work_bound():
    params = [SolverParams.parse(label) for label in _FixedRunner.work]
    results = run_sweep(_FixedRunner(), params, progress=False)
    assert [r.params for r in results] == ["1,1,2,1,F,1", "1,0,2,1,S,1"]
    assert [r.predicted_work for r in results] == [3.584, 3.496]


def test_emit_results(tmp_path):
    results = [_result("1,1,1,1,F,1", 5.5, 1.2, 3.4), _result("2,2,1,1,S,1", 9.0, 1.0, 1.1)]
    config = {"mesh": "cube", "max_level": 3}

    written = emit_results(results, config, tmp_path, "both", stem="sweep")
    assert sorted(p.name for p in written) == ["sweep.csv", "sweep.json", "sweep.meta.json"]

    with open(tmp_path / "sweep.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == RESULT_FIELDS
    assert rows[0]["params"] == "1,1,1,1,F,1"
    assert rows[1]["gamma_p"] == "1.1000000000000001"
    assert rows[0]["measured_ratio"] == ""

    payload = json.loads((tmp_path / "sweep.json").read_text())
    assert payload["version"] == __version__
    assert payload["config"] == config
    assert len(payload["results"]) == 2
    assert json.loads((tmp_path / "sweep.meta.json").read_text())["config"]["max_level"] == 3

    assert [p.name for p in emit_results(results, config, tmp_path / "j", "json")] == ["results.json"]
    with pytest.raises(AssertionError):
        emit_results(results, config, tmp_path, "xml")


def test_result_row():
    row = _result("1,1,1,1,F,1", 5.5, 1.2, 3.4).to_row()
    assert set(row) == set(RESULT_FIELDS)
    assert row["status"] == "ok" and row["tme"] is False


class _FailingRunner:
    kind = DiscretizationKind.P2P1
    level = 3
    omega_inv = 0.3

    def run(self, params):
        if params.nu_pre == 0:
            raise RuntimeError("cycle diverged")
        return _result(params.label, 1.0, 1.0, 1.0)


def test_sweep_records_failures():
    params = [SolverParams.parse("1,1,1,1,F,1"), SolverParams.parse("0,1,1,1,F,1")]
    results = run_sweep(_FailingRunner(), params, progress=False)
    failed = [r for r in results if r.status == "failed"]
    assert len(results) == 2 and len(failed) == 1
    assert failed[0].params == "0,1,1,1,F,1"
    assert failed[0].error == "cycle diverged"
    assert failed[0].predicted_work > 0
    assert results == sorted(results, key=lambda r: (r.predicted_work_bound, r.params))


def test_sweep_params_respects_subset():
    curated = sweep_params(bench_config(overrides=["sweep.subset=curated"]))
    full = sweep_params(bench_config(overrides=["sweep.subset=full", "sweep.kappa=[1]"]))
    assert 0 < len(curated) < len(full)
    assert {p.kappa for p in full} == {1}


def test_sweep_kappa_outside_the_search_space():
    with pytest.raises(ConfigError, match="kappa"):
        bench_config(overrides=["sweep.kappa=[3]"])
    config = OmegaConf.create(DEFAULT_BENCH_CONFIG)
    config.sweep.kappa = [3]
    with pytest.raises(ConfigError):
        sweep_params(config)


@pytest.fixture(scope="module")
def runner(tmp_path_factory):
    cache = tmp_path_factory.mktemp("references")
    config = bench_config(
        overrides=[
            "discretization=p1p1",
            "max_level=2",
            "omega_inv=estimate",
            "epsilon=1e-9",
            f"cache_dir={cache}",
        ]
    )
    return BenchmarkRunner(config)


def test_runner_measures_a_solve(runner):
    result = runner.run(SolverParams.parse("2,2,1,2,S,1"))
    assert result.status == "ok"
    assert (result.kind, result.level) == ("p1p1", 2)
    assert result.omega_inv == runner.omega_inv > 0
    assert result.predicted_work > 0 and result.predicted_work_bound > 0
    assert result.measured_ratio == pytest.approx(1.0, rel=1e-9)
    assert result.gamma_u > 0 and result.gamma_p > 0
    assert result.solved == (result.gamma_u <= 2.0 and result.gamma_p <= 2.0)
    assert result.delta_u < 1.0


def test_runner_caches_the_reference(runner):
    reference = runner.reference
    cached = list(Path(runner.config.cache_dir).glob("*.npz"))
    assert len(cached) == 1
    loaded = ReferenceCache(runner.config.cache_dir).load(cached[0], runner.hierarchy.fine)
    assert np.array_equal(loaded.flat(), reference.flat())
    eu, ep = runner.reference_error()
    assert eu > 0 and ep > 0


@pytest.mark.slow
def test_curated_sweep_on_the_cube(tmp_path):
    config = bench_config(
        overrides=["discretization=p1p1", "max_level=3", "omega_inv=estimate", f"cache_dir={tmp_path}"]
    )
    runner = BenchmarkRunner(config)
    results = run_sweep(runner, sweep_params(config), progress=False)
    assert all(r.status == "ok" for r in results)
    assert all(r.measured_ratio == pytest.approx(1.0, rel=1e-9) for r in results)
    best = optimize(results, 2.0, 10.0)
    assert best is None or best.gamma_u <= 2.0


@pytest.mark.slow
@pytest.mark.parametrize("kind, low, high", [("p1p1", 3.4, 4.6), ("p2p1", 6.0, 10.0)])
def test_discretization_error_rates(tmp_path, kind, low, high):
    errors = []
    for level in (2, 3, 4):
        config = bench_config(
            overrides=[f"discretization={kind}", f"max_level={level}", "epsilon=1e-10", f"cache_dir={tmp_path}"]
        )
        errors.append(BenchmarkRunner(config).reference_error()[0])
    for coarse, fine in zip(errors, errors[1:]):
        assert low <= coarse / fine <= high


@pytest.mark.slow
@pytest.mark.parametrize(
    "kind, level, reported_level, label, max_gamma_u, max_gamma_p",
    [("p2p1", 3, 5, "1,2,1,1,F,3", 1.3, 6.0), ("p1p1", 4, 6, "1,0,2,1,S,1", 2.0, 12.0)],
)
def test_textbook_efficiency_at_desk_scale(tmp_path, kind, level, reported_level, label, max_gamma_u, max_gamma_p):
    config = bench_config(overrides=[f"discretization={kind}", f"max_level={level}", f"cache_dir={tmp_path}"])
    result = BenchmarkRunner(config).run(SolverParams.parse(label))
    assert result.gamma_u <= max_gamma_u
    assert result.gamma_p <= max_gamma_p
    work, _, _ = REPORTED_PARAMETERIZATIONS[(kind, reported_level, label)]
    assert result.predicted_work_bound == pytest.approx(work, abs=0.01)
    assert result.tme == (work < 10)


@pytest.fixture(scope="module")
def desk_runner(tmp_path_factory):
    cache = tmp_path_factory.mktemp("desk_references")
    return BenchmarkRunner(bench_config(overrides=["discretization=p1p1", "max_level=3", f"cache_dir={cache}"]))


@pytest.mark.slow
@pytest.mark.parametrize("label", ["0,1,0,{},S,1", "1,0,1,{},S,1"])
def test_second_v_cycle_does_not_raise_the_error(desk_runner, label):
    once = desk_runner.run(SolverParams.parse(label.format(1)))
    twice = desk_runner.run(SolverParams.parse(label.format(2)))
    assert twice.predicted_work_bound > once.predicted_work_bound
    assert twice.gamma_u <= once.gamma_u


@pytest.mark.slow
def test_error_ratio_falls_with_work(desk_runner):
    labels = ["0,1,0,1,S,1", "1,1,1,1,S,1", "2,2,1,1,S,1", "3,3,2,1,S,1", "3,3,2,2,S,1"]
    results = sorted(
        (desk_runner.run(SolverParams.parse(label)) for label in labels), key=lambda r: r.predicted_work_bound
    )
    for cheaper, dearer in zip(results, results[1:]):
        assert dearer.gamma_u <= 1.05 * cheaper.gamma_u
