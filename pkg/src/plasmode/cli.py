"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime fault.
"""
import argparse
import json
import sys

import numpy as np

from . import __version__
from .exceptions import PlasmodeError

EXIT_OK, EXIT_USAGE, EXIT_FAULT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _print_json(obj):
    print(json.dumps(obj, indent=2, default=_json_default))


def _attrs(path):
    from .graph import read_node_table

    return None if path is None else read_node_table(path)


def cmd_run_study(args):
    from .harness import StudyConfig, run_study

    config = StudyConfig.load(args.config)
    if args.replicates is not None:
        config.n_replicates = args.replicates
    if args.seed is not None:
        config.seed = args.seed
    out = args.out or config.output_dir or "plasmode-out"
    study = run_study(config, workers=args.workers, output_dir=out)
    print(f"wrote {out} ({len(study.replicates)} replicates, {study.failures} failed)")


def cmd_simulate_graph(args):
    from .ergm import SamplerConfig, read_model, simulate
    from .graph import write_edgelist

    model = read_model(args.model)
    attrs = _attrs(args.attrs)
    cfg = SamplerConfig(args.burn_in, None, args.proposal, args.seed)
    graph = simulate(model, attrs, attrs.n_nodes, cfg)
    if args.out:
        write_edgelist(graph, args.out)
    else:
        print(f"# n_nodes {graph.n_nodes}")
        for i, j in graph.edges():
            print(i, j)


def cmd_fit_ergm(args):
    from .ergm import mple_fit, read_terms
    from .graph import read_edgelist

    attrs = _attrs(args.attrs)
    graph = read_edgelist(args.graph, attrs.n_nodes)
    result = mple_fit(graph, attrs, read_terms(args.terms))
    out = result.model.to_dict()
    out["se"] = result.se
    out["se_caveat"] = result.se_caveat
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2, default=_json_default)
    _print_json(out)


def cmd_gof(args):
    from .ergm import SamplerConfig, gof, read_model
    from .graph import read_edgelist

    attrs = _attrs(args.attrs)
    graph = read_edgelist(args.graph, None if attrs is None else attrs.n_nodes)
    report = gof(read_model(args.model), attrs, graph, args.sims, SamplerConfig(seed=args.seed))
    _print_json(report.to_dict())


def cmd_synth(args):
    from .copula import read_synthesis_params, sample, solve_intermediate
    from .graph import write_node_table

    params = read_synthesis_params(args.params)
    inter = solve_intermediate(params)
    table = sample(params, inter, args.n, args.seed)
    write_node_table(table, args.out or sys.stdout)
    adjusted = inter.adjusted_pairs()
    if adjusted:
        print(f"note: correlation repair adjusted pairs {adjusted}", file=sys.stderr)


def cmd_summarize(args):
    from .graph import read_edgelist, summarize

    attrs = _attrs(args.attrs)
    if args.attr is not None and attrs is None:
        raise UsageError("--attr requires --attrs")
    graph = read_edgelist(args.graph, None if attrs is None else attrs.n_nodes)
    codes = None
    if args.attr is not None:
        if args.attr not in attrs:
            raise UsageError(f"unknown attribute {args.attr!r}")
        codes = attrs.codes(args.attr)
    for key, value in summarize(graph, codes).as_dict().items():
        print(f"{key}: {'undefined' if value is None else value}")


def build_parser():
    p = _Parser(prog="plasmode", description="Plasmode network simulation and interference-estimator evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("run-study", help="run a simulation study from a JSON config")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="output directory (default: config's output_dir or ./plasmode-out)")
    s.add_argument("--replicates", type=int, help="override the number of replicates S")
    s.add_argument("--seed", type=int, help="override the master seed")
    s.set_defaults(func=cmd_run_study)

    s = sub.add_parser("simulate-graph", help="draw one network from an ERGM given node attributes")
    s.add_argument("model")
    s.add_argument("attrs")
    s.add_argument("--seed", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--proposal", choices=("tnt", "uniform"), default="tnt")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate_graph)

    s = sub.add_parser("fit-ergm", help="fit ERGM coefficients by maximum pseudolikelihood")
    s.add_argument("graph")
    s.add_argument("attrs")
    s.add_argument("terms")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit_ergm)

    s = sub.add_parser("gof", help="goodness-of-fit envelopes for degree and shared partners")
    s.add_argument("model")
    s.add_argument("graph")
    s.add_argument("--sims", type=int, default=100)
    s.add_argument("--attrs")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gof)

    s = sub.add_parser("synth", help="sample node attributes from a Gaussian copula")
    s.add_argument("params")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("summarize", help="descriptive network statistics")
    s.add_argument("graph")
    s.add_argument("--attr", help="categorical attribute for assortativity")
    s.add_argument("--attrs", help="node table CSV holding --attr")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"plasmode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PlasmodeError, ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"plasmode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
