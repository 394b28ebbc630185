import argparse
import logging
from pathlib import Path

from lib.cli import SindygCLI
from lib.formats import load_derivs, load_graph, load_trajectory, save_model, write_lines
from lib.heatmap import render_heatmap
from lib.library import build_library
from lib.oscillator import finite_diff_derivs
from lib.regression import fit_model
from lib.utils import ShapeError, UsageError, ensure_dir

_log = logging.getLogger(__name__)


def cmd_fit(cli: SindygCLI, args: argparse.Namespace) -> int:
    if args.method == "sindyg" and not args.graph:
        raise UsageError("method 'sindyg' needs --graph", "sindyg requires --graph <csv>")
    config = cli.experiment_config(args)

    times, states, svmap = load_trajectory(args.trajectory)
    if args.derivs:
        derivs, dmap = load_derivs(args.derivs, times)
        if dmap != svmap:
            raise ShapeError("derivative file variables do not match the trajectory")
    else:
        _log.info("no --derivs given; using finite differences")
        derivs = finite_diff_derivs(times, states)

    graph = load_graph(args.graph) if args.graph else None
    if graph is not None and graph.n_nodes != svmap.n_nodes:
        raise ShapeError(f"graph has {graph.n_nodes} nodes, trajectory has {svmap.n_nodes}")

    library = build_library(svmap, config.degree)
    model = fit_model(args.method, library, states, derivs, config.solver_config(), graph)

    out = Path(args.out) if args.out else ensure_dir(config.out_path) / f"model_{args.method}.json"
    ensure_dir(out.parent)
    save_model(model, out)
    equations = model.coefficients.equations()
    write_lines(equations, out.with_name(f"equations_{args.method}.txt"))
    for line in equations:
        _log.info("%s", line)
    if args.heatmap:
        render_heatmap([(args.method, model.coefficients)], out.with_suffix(".png"))
    _log.info("fit %s: model written to %s (%.4fs)", args.method, out, model.train_time)
    return 0


def setup(cli: SindygCLI):
    p = cli.add_command("fit", "Fit a sparse model to a trajectory CSV.", cmd_fit)
    p.add_argument("--trajectory", required=True, help="trajectory CSV (t,x0,y0,...)")
    p.add_argument("--derivs", help="derivative CSV (t,dx0,dy0,...); finite differences if omitted")
    p.add_argument("--graph", help="graph CSV; required for --method sindyg")
    p.add_argument("--method", choices=["sindy", "sindyg"], default="sindyg")
    p.add_argument("--out", help="model JSON path (default <out-dir>/model_<method>.json)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (env SINDYG_OUT_DIR)")
    p.add_argument("--heatmap", action="store_const", const=True, help="also write a coefficient heatmap PNG")
    cli.add_solver_options(p)
    cli.add_config_option(p)
