import argparse
import logging

from lib.cli import SindygCLI
from lib.config import SWEEP_PARAMS
from lib.experiments import run_general_sweep, run_penalty_curve, run_simple_case, run_table1
from lib.utils import METHODS, parse_float_list

_log = logging.getLogger(__name__)

DEFAULT_PENALTY_RATIOS = "1,2,5,10,20"


def cmd_simple(cli: SindygCLI, args: argparse.Namespace) -> int:
    result = run_simple_case(cli.experiment_config(args))
    for method in METHODS:
        r = result.reports[method]
        _log.info("%s: gamma=%d cei=%.4g train_r2=%s test_r2=%s", method, r.gamma, r.cei, r.train_r2, r.test_r2)
    return 0


def cmd_sweep(cli: SindygCLI, args: argparse.Namespace) -> int:
    values = parse_float_list(args.values, "values")
    run_general_sweep(cli.experiment_config(args), args.param, values)
    return 0


def cmd_table1(cli: SindygCLI, args: argparse.Namespace) -> int:
    table = run_table1(cli.experiment_config(args))
    _log.info("table1:\n%s", table.to_string())
    return 0


def cmd_penalty_curve(cli: SindygCLI, args: argparse.Namespace) -> int:
    run_penalty_curve(cli.experiment_config(args), parse_float_list(args.ratios, "ratios"))
    return 0


def _add_network_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--graph-type", dest="graph_type", choices=["er", "sf"], help="random graph family")
    g.add_argument("--n-nodes", dest="n_nodes", type=int, help="oscillators per network")
    g.add_argument("--edge-prob", dest="edge_prob", type=float, help="ER edge probability")
    g.add_argument("--m-attach", dest="m_attach", type=int, help="SF edges per new node")
    g.add_argument("--weight-range", dest="weight_range", help="edge weight range 'lo,hi'")
    g.add_argument("--sigma-range", dest="sigma_range", help="growth rate range 'lo,hi'")
    g.add_argument("--omega-range", dest="omega_range", help="angular frequency range 'lo,hi'")
    g.add_argument("--reps", type=int, help="repetitions per value")
    g.add_argument("--workers", type=int, help="worker processes (env SINDYG_WORKERS)")


def _common(cli: SindygCLI, p: argparse.ArgumentParser) -> None:
    cli.add_solver_options(p)
    cli.add_protocol_options(p)
    cli.add_config_option(p)


def setup(cli: SindygCLI):
    parent = cli.add_command("experiment", "Run a study and write its result tables.")
    studies = parent.add_subparsers(dest="study_name", metavar="STUDY", parser_class=type(cli.parser))

    p = cli.add_command("simple", "Three-node case: recover the coupled model.", cmd_simple, parent=studies)
    p.add_argument("--coupling", type=float, help="edge weight between nodes 1 and 2")
    p.add_argument("--heatmap", action="store_const", const=True, help="also write heatmap.png")
    _common(cli, p)

    p = cli.add_command("sweep", "Sensitivity of both methods to one parameter.", cmd_sweep, parent=studies)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values of the swept parameter")
    _add_network_options(p)
    _common(cli, p)

    p = cli.add_command("table1", "ER and SF ensembles summarised as mean ± SE.", cmd_table1, parent=studies)
    _add_network_options(p)
    _common(cli, p)

    p = cli.add_command("penalty-curve", "Penalty f(m) for several L/|S| ratios.", cmd_penalty_curve,
                        parent=studies)
    p.add_argument("--ratios", default=DEFAULT_PENALTY_RATIOS, help="comma-separated L/|S| values")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    cli.add_config_option(p)
