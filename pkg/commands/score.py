import argparse
import logging
from pathlib import Path

from lib.cli import SindygCLI
from lib.experiments import score_model
from lib.formats import load_derivs, load_model, load_trajectory, write_metrics
from lib.oscillator import Trajectory, finite_diff_derivs
from lib.utils import ShapeError, ensure_dir

_log = logging.getLogger(__name__)


def cmd_score(cli: SindygCLI, args: argparse.Namespace) -> int:
    model = load_model(args.model)
    times, states, svmap = load_trajectory(args.trajectory)
    if svmap != model.library.svmap:
        raise ShapeError(f"trajectory variables {svmap.var_names()} do not match the model's "
                         f"{list(model.coefficients.var_names)}")
    if args.derivs:
        derivs, _ = load_derivs(args.derivs, times)
    else:
        derivs = finite_diff_derivs(times, states)
    data = Trajectory(times, states, derivs, svmap)

    truth = load_model(args.truth).coefficients if args.truth else None
    dataset_id = args.dataset_id or Path(args.trajectory).stem
    if args.split == "train":
        report, _ = score_model(model, dataset_id, train=data, truth=truth)
    else:
        report, scores = score_model(model, dataset_id, tests=[data], truth=truth)
        if scores[0].diverged:
            _log.warning("%s model diverged on %s; test metrics left empty", model.method, args.trajectory)

    out = Path(args.out) if args.out else ensure_dir(args.out_dir or ".") / "metrics.csv"
    ensure_dir(out.parent)
    write_metrics([report], out)
    _log.info("score %s (%s): gamma=%d r2=%s mse=%s -> %s", model.method, args.split, report.gamma,
              report.train_r2 if args.split == "train" else report.test_r2,
              report.train_mse if args.split == "train" else report.test_mse, out)
    return 0


def setup(cli: SindygCLI):
    p = cli.add_command("score", "Score a fitted model JSON on a trajectory.", cmd_score)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--trajectory", required=True, help="trajectory CSV")
    p.add_argument("--derivs", help="derivative CSV; finite differences if omitted")
    p.add_argument("--truth", help="true-model JSON for the coefficient error")
    p.add_argument("--split", choices=["train", "test"], default="train",
                   help="train: predict on the given states; test: simulate the model from the first state")
    p.add_argument("--dataset-id", dest="dataset_id", help="label for the metrics row")
    p.add_argument("--out", help="metrics CSV path (default <out-dir>/metrics.csv)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
