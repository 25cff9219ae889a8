"""Command-line front end: stream a CSV fit or run a simulation grid.

Exit codes: 0 on success (fit converged), 2 when a fit did not converge
(results are still emitted, with ``converged: false`` and a reason),
1 on any error, with a diagnostic naming the offending flag, column,
or record.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import highdim
from .chunks import DEFAULT_CHUNK_SIZE, ChunkSchema, open_source
from .errors import ChunkGlmError
from .families import FamilyLink
from .fitter import FitConfig, FitResult, fit

_DEFAULT_LINKS = {
    "binomial": "logit",
    "poisson": "log",
    "gaussian": "identity",
    "gamma": "log",
}

_DISPERSION_FLAGS = {
    "fixed": "fixed",
    "moment": "moment",
    "ml": "ml_scoring",
    "mbr": "mbr_scoring",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved here for
    # non-converged fits, so remap usage errors to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chunkglm",
                     description="Bounded-memory GLM fitting and simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit_p = sub.add_parser("fit", help="fit a GLM by streaming a CSV file",
                           parents=[], add_help=True)
    fit_p.add_argument("--data", required=True, help="path to the CSV file")
    fit_p.add_argument("--response", required=True, help="response column name")
    fit_p.add_argument("--covariates", required=True, nargs="+",
                       help="covariate column names, in design order")
    fit_p.add_argument("--weights", default=None,
                       help="optional weights column (binomial trial counts)")
    fit_p.add_argument("--intercept", action="store_true",
                       help="prepend a constant-1 column")
    fit_p.add_argument("--family", required=True,
                       choices=["binomial", "poisson", "gaussian", "gamma"])
    fit_p.add_argument("--link", default=None,
                       choices=["logit", "probit", "cloglog", "identity",
                                "log", "inverse"],
                       help="link function (default: the family's canonical choice)")
    fit_p.add_argument("--estimator", default="ml",
                       choices=["ml", "mbr", "mjpl"])
    fit_p.add_argument("--jeffreys-power", type=float, default=1.0,
                       help="penalty power for estimator=mjpl")
    fit_p.add_argument("--variant", default="two-pass",
                       choices=["one-pass", "two-pass"])
    fit_p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE)
    fit_p.add_argument("--epsilon", type=float, default=1e-3)
    fit_p.add_argument("--max-iter", type=int, default=250)
    fit_p.add_argument("--dispersion", default=None,
                       choices=sorted(_DISPERSION_FLAGS),
                       help="dispersion rule (default: fixed or moment per family)")
    fit_p.add_argument("--output", default="text",
                       choices=["json", "csv", "text"])
    fit_p.add_argument("--output-file", default=None,
                       help="write results here instead of stdout")

    sim_p = sub.add_parser("simulate",
                           help="run the high-dimensional logistic grid")
    sim_p.add_argument("--grid", required=True,
                       help="grid CSV: kappa,n,rho2,gamma,shape,reps,seed,mle_exists")
    sim_p.add_argument("--summary-csv", default=None)
    sim_p.add_argument("--summary-json", default=None)
    sim_p.add_argument("--dump-estimates", default=None, metavar="DIR",
                       help="write per-replicate estimate CSVs into DIR")
    sim_p.add_argument("--workers", type=int, default=1,
                       help="replicate worker processes per grid point")
    sim_p.add_argument("--chunk-size", type=int, default=1000)
    sim_p.add_argument("--epsilon", type=float, default=1e-3)
    sim_p.add_argument("--max-iter", type=int, default=250)
    return parser


def _result_payload(result: FitResult, names) -> dict:
    payload = {
        "beta": [float(b) for b in result.beta],
        "se": [float(s) for s in result.se],
        "phi": float(result.phi),
        "iterations": result.iterations,
        "converged": result.converged,
        "adjusted_score_norm": float(result.adjusted_score_norm),
        "terms": list(names),
    }
    if not result.converged:
        payload["reason"] = result.reason
    return payload


def _emit_fit(payload: dict, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(payload, out, indent=2)
        out.write("\n")
        return
    if fmt == "csv":
        out.write("term,estimate,se\n")
        for name, b, s in zip(payload["terms"], payload["beta"], payload["se"]):
            out.write(f"{name},{b!r},{s!r}\n")
        out.write(f"# phi,{payload['phi']!r}\n")
        out.write(f"# iterations,{payload['iterations']}\n")
        out.write(f"# converged,{payload['converged']}\n")
        return
    # text: estimate over parenthesized standard error, one block per term
    width = max(len(n) for n in payload["terms"]) + 2
    for name, b, s in zip(payload["terms"], payload["beta"], payload["se"]):
        out.write(f"{name:<{width}}{b:10.4f}\n")
        out.write(f"{'':<{width}}({s:.4f})\n")
    out.write(f"\nphi                 {payload['phi']:.6g}\n")
    out.write(f"iterations          {payload['iterations']}\n")
    out.write(f"converged           {payload['converged']}\n")
    out.write(f"adjusted score norm {payload['adjusted_score_norm']:.3e}\n")
    if not payload["converged"]:
        out.write(f"reason              {payload['reason']}\n")


def _run_fit(args) -> int:
    schema = ChunkSchema(
        response=args.response,
        covariates=tuple(args.covariates),
        weights=args.weights,
        intercept=args.intercept,
    )
    link = args.link or _DEFAULT_LINKS[args.family]
    try:
        fl = FamilyLink(args.family, link, jeffreys_power=args.jeffreys_power)
    except ValueError as exc:
        print(f"chunkglm fit: error: --link/--family: {exc}", file=sys.stderr)
        return 1
    dispersion = _DISPERSION_FLAGS[args.dispersion] if args.dispersion else None
    try:
        config = FitConfig(
            estimator=args.estimator,
            variant=args.variant.replace("-", "_"),
            dispersion=dispersion,
            epsilon=args.epsilon,
            max_iter=args.max_iter,
        )
        source = open_source(args.data, schema, chunk_size=args.chunk_size)
        result = fit(config, source, fl)
    except (ChunkGlmError, ValueError, OSError) as exc:
        print(f"chunkglm fit: error: {exc}", file=sys.stderr)
        return 1
    names = (["intercept"] if args.intercept else []) + list(args.covariates)
    payload = _result_payload(result, names)
    if args.output_file:
        with open(args.output_file, "w") as fh:
            _emit_fit(payload, args.output, fh)
    else:
        _emit_fit(payload, args.output, sys.stdout)
    return 0 if result.converged else 2


def _run_simulate(args) -> int:
    try:
        settings = highdim.read_grid(args.grid)
    except (ChunkGlmError, OSError) as exc:
        print(f"chunkglm simulate: error: --grid: {exc}", file=sys.stderr)
        return 1
    try:
        summaries = highdim.run_grid(
            settings,
            chunk_size=args.chunk_size,
            epsilon=args.epsilon,
            max_iter=args.max_iter,
            workers=args.workers,
            dump_dir=args.dump_estimates,
        )
    except (ChunkGlmError, ValueError, OSError) as exc:
        print(f"chunkglm simulate: error: {exc}", file=sys.stderr)
        return 1
    if args.summary_csv:
        highdim.write_summary_csv(args.summary_csv, summaries)
    if args.summary_json:
        highdim.write_summary_json(args.summary_json, summaries)
    for s in summaries:
        print(f"kappa={s.kappa:g} gamma={s.gamma:g} p={s.p} "
              f"slope={s.slope:.3f} slope_adjusted={s.slope_adjusted:.3f} "
              f"iterations(mean)={s.iterations_mean:.1f} "
              f"time(mean)={s.time_mean:.2f}s "
              f"converged={s.converged_count}/{s.reps}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # bad usage or --help; surface as a return code
        return int(exc.code or 0)
    if args.command == "fit":
        return _run_fit(args)
    return _run_simulate(args)


if __name__ == "__main__":
    sys.exit(main())
