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


import argparse
import logging
import sys

from cli.StokesBench import StokesBench, cost_report, format_cost_report
from hhgstokes.modules.cost.cost_model import DiscretizationKind
from hhgstokes.modules.solver.params import SolverParams
from hhgstokes.utils.file import ConfigError, bench_config, write_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def parse_args(argv=None):
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(description="Multigrid Stokes benchmark.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "Solve once with the configured parameterization"),
        ("sweep", "Run a parameter sweep and the constrained optimizer"),
        ("omega", "Estimate omega^-1 by power iteration"),
        ("export", "Write the assembled matrix as row/col/value lines"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=str, default=None, help="Path to a key = value or YAML config file")
        cmd.add_argument(
            "--set", dest="overrides", action="append", default=[], help="Override a config entry, e.g. max_level=4"
        )
        if name == "export":
            cmd.add_argument("--level", type=int, default=2, help="Refinement level of the exported matrix")

    cost = sub.add_parser("cost", help="Work-unit predictions of one parameterization")
    cost.add_argument("--params", type=str, required=True, help="nu_pre,nu_post,nu_inc,kappa,A,xi")
    cost.add_argument("--kind", choices=["p1p1", "p2p1"], default="p2p1")
    cost.add_argument("--level", type=int, default=None, help="Finite level for the exact sums")
    cost.add_argument("--output", type=str, default=None, help="Optional JSON output file")
    return parser.parse_args(argv)


def run_bench(args) -> int:
    """Dispatch one subcommand and map the outcome to an exit code."""
    if args.command == "cost":
        report = cost_report(SolverParams.parse(args.params), DiscretizationKind.parse(args.kind), args.level)
        print(format_cost_report(report))
        if args.output:
            write_json(report, args.output)
        return EXIT_OK

    bench = StokesBench(bench_config(args.config, args.overrides))
    if args.command == "run":
        bench.run()
    elif args.command == "sweep":
        _, best = bench.sweep()
        if best is None:
            return EXIT_INFEASIBLE
    elif args.command == "omega":
        bench.omega()
    elif args.command == "export":
        bench.export(args.level)
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return run_bench(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s"
    )

    sys.exit(main())
