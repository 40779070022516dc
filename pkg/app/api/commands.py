import argparse
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.models.request import COMMANDS, SOURCES, ExperimentSpec, TruthfulnessProbe

COMMAND_HELP = {
    "gen": "generate an instance and write it as JSON",
    "run": "run one auction: sampled allocation plus randomized VCG payments",
    "eval-ratio": "approximation ratio b.y / OPT over trials",
    "eval-welfare": "mean social welfare over trials",
    "eval-satisfaction": "fraction of users winning a bid",
    "compare-baseline": "mechanism against the greedy density baseline",
    "probe-truthfulness": "expected utility of misreports for one bidder",
    "bench-front": "Pareto front growth on perturbed random instances",
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--eps", type=float, nargs="+", default=[settings.EPSILON], dest="epsilons",
                        help="approximation parameter(s) in (0, 1)")
    parser.add_argument("--users", type=int, nargs="+", default=[500], help="number of users W")
    parser.add_argument("--max-bids", type=int, nargs="+", default=[4], help="bids per user at most")
    parser.add_argument("--datacenters", type=int, nargs="+", default=[8], help="datacenters D")
    parser.add_argument("--resources", type=int, nargs="+", default=[3], help="resource types K")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--samples", type=int, default=1, help="allocation samples per trial")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--source", choices=SOURCES, default="trace", help="instance source")
    parser.add_argument("--output", "-o", help="artifact path")
    parser.add_argument("--tasks", dest="tasks_path", help="task CSV (job_id, cpu, ram, disk)")
    parser.add_argument("--instance", dest="instance_path", help="instance JSON")
    parser.add_argument("--policy", choices=("reject", "renormalize"), help="invalid distribution policy")
    parser.add_argument("--jobs", type=int, default=settings.JOBS, help="concurrent trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vm-auction", description=settings.DESCRIPTION)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=COMMAND_HELP[command])
        _add_common(sub)
        if command == "bench-front":
            sub.add_argument("--bids", type=int, nargs="+", default=[20, 40, 80, 160], help="instance sizes N")
        if command == "probe-truthfulness":
            sub.add_argument("--bidder", type=int, default=0)
            sub.add_argument("--valuation", type=float, help="true value; defaults to the submitted price")
            sub.add_argument("--grid", type=float, nargs="+", help="misreports as multiples of the valuation")
            sub.add_argument("--absolute-grid", action="store_true", help="read --grid as prices")
            sub.add_argument("--probe-samples", type=int, default=10_000, help="samples per arm")
            sub.add_argument("--exact-omega", action="store_true", help="average each arm over the exact support")
            sub.add_argument("--probe-bids", type=int, default=5, help="bids in the generated probe instance")
    return parser


def parse_spec(argv: Optional[List[str]] = None) -> ExperimentSpec:
    """Parse command-line arguments into an ExperimentSpec; invalid values exit with status 2."""
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    probe = {}
    if args["command"] == "probe-truthfulness":
        probe = {
            "bidder": args.pop("bidder"),
            "valuation": args.pop("valuation"),
            "grid_is_relative": not args.pop("absolute_grid"),
            "samples": args.pop("probe_samples"),
            "exact_omega": args.pop("exact_omega"),
        }
        grid = args.pop("grid")
        if grid is not None:
            probe["grid"] = grid
    try:
        if probe:
            args["probe"] = TruthfulnessProbe(**probe)
        return ExperimentSpec(**args)
    except ValidationError as e:
        parser.error(str(e))
