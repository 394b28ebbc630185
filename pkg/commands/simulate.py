import argparse
import logging

import numpy as np

from lib.cli import SindygCLI
from lib.experiments import truth_model
from lib.formats import load_graph, save_derivs, save_graph, save_model, save_trajectory
from lib.graph import StateVariableMap
from lib.library import build_library
from lib.oscillator import (
    SLParams,
    random_initial_condition,
    sample_random_params,
    simple_case_system,
    simulate_network,
)
from lib.utils import ParameterError, UnrepresentableModelError, UsageError, ensure_dir, parse_float_list, seeded_rng

_log = logging.getLogger(__name__)

# seeded_rng(seed, PARAMS_STREAM) draws random node parameters; the initial
# condition of trajectory i uses seeded_rng(seed, i), matching the simple case.
PARAMS_STREAM = (0, 1)


def _params(args, config, n_nodes: int) -> SLParams:
    if args.sigma is not None or args.omega is not None:
        if args.sigma is None or args.omega is None:
            raise UsageError("--sigma and --omega must be given together")
        sigma = parse_float_list(args.sigma, "sigma")
        omega = parse_float_list(args.omega, "omega")
        if len(sigma) == 1:
            sigma *= n_nodes
        if len(omega) == 1:
            omega *= n_nodes
        if len(sigma) != n_nodes or len(omega) != n_nodes:
            raise ParameterError(f"--sigma/--omega need 1 or {n_nodes} values")
        return SLParams(np.array(sigma), np.array(omega))
    return sample_random_params(n_nodes, config.sigma_range, config.omega_range,
                                seeded_rng(config.seed, *PARAMS_STREAM))


def cmd_simulate(cli: SindygCLI, args: argparse.Namespace) -> int:
    config = cli.experiment_config(args)
    if args.trajectory_index < 0:
        raise ParameterError("--trajectory-index must be >= 0")
    if args.preset == "simple":
        if args.graph:
            raise UsageError("--preset simple and --graph are exclusive")
        params, graph = simple_case_system(config.coupling)
    elif args.graph:
        graph = load_graph(args.graph)
        params = _params(args, config, graph.n_nodes)
    else:
        raise UsageError("simulate needs --graph <csv> or --preset simple")

    svmap = StateVariableMap(graph.n_nodes, 2)
    if args.x0 is not None:
        x0 = np.array(parse_float_list(args.x0, "x0"))
        if x0.shape != (svmap.total,):
            raise ParameterError(f"--x0 needs {svmap.total} values, got {x0.size}")
    else:
        x0 = random_initial_condition(svmap.total, seeded_rng(config.seed, args.trajectory_index),
                                      config.ic_range)
    length = config.t_end if args.trajectory_index == 0 else config.test_length
    traj = simulate_network(params, graph, x0, length, config.dt)

    out = ensure_dir(config.out_path)
    stem = args.name or ("trajectory" if args.trajectory_index == 0 else f"test{args.trajectory_index}")
    save_trajectory(traj.times, traj.states, svmap, out / f"{stem}.csv")
    save_derivs(traj.times, traj.derivs, svmap, out / f"{stem}_derivs.csv")
    save_graph(graph, out / "graph.csv")
    try:
        truth = truth_model(params, graph, build_library(svmap, config.degree), config.solver_config())
        save_model(truth, out / "model_true.json")
    except UnrepresentableModelError as e:
        _log.warning("true model not written: %s", e)
    _log.info("simulated %d nodes for %.6g time units (%d samples) into %s",
              graph.n_nodes, length, traj.n_samples, out)
    return 0


def setup(cli: SindygCLI):
    p = cli.add_command("simulate", "Simulate a coupled Stuart-Landau network to CSV.", cmd_simulate)
    p.add_argument("--graph", help="graph CSV (n=<int>,directed=<0|1> header)")
    p.add_argument("--preset", choices=["simple"], help="built-in three-node system")
    p.add_argument("--coupling", type=float, help="edge weight of the simple preset")
    p.add_argument("--sigma", help="growth rate(s), one or one per node")
    p.add_argument("--omega", help="angular frequency(ies), one or one per node")
    p.add_argument("--sigma-range", dest="sigma_range", help="random sigma range 'lo,hi'")
    p.add_argument("--omega-range", dest="omega_range", help="random omega range 'lo,hi'")
    p.add_argument("--x0", help="explicit initial state x0,y0,x1,y1,...")
    p.add_argument("--trajectory-index", dest="trajectory_index", type=int, default=0,
                   help="0 = training trajectory, i > 0 = test trajectory i-1 of the same seed")
    p.add_argument("--name", help="output file stem")
    p.add_argument("--degree", type=int, help="library degree of the written true model")
    cli.add_protocol_options(p)
    cli.add_config_option(p)
